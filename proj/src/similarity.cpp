#include "stylebc/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>

#include "stylebc/kernels.hpp"

namespace stylebc::similarity {

std::vector<State> pad_states(const Trajectory& traj, std::size_t length) {
    if (length < traj.states.size()) throw Error("pad shorter than trajectory");
    std::vector<State> out(traj.states);
    out.resize(length, traj.states.back());
    return out;
}

double raw_distance(std::span<const State> a, std::span<const State> b) {
    if (a.size() != b.size()) throw Error("raw_distance: length mismatch");
    static_assert(sizeof(State) == 2 * sizeof(double));
    const std::span<const double> fa{reinterpret_cast<const double*>(a.data()), 2 * a.size()};
    const std::span<const double> fb{reinterpret_cast<const double*>(b.data()), 2 * b.size()};
    return std::sqrt(kernels::sqdist(fa, fb));
}

std::size_t pad_length(const Dataset& ds) {
    std::size_t len = 0;
    for (const auto& t : ds.trajectories) len = std::max(len, t.states.size());
    return len;
}

DissimilarityMatrix dissimilarity_matrix(const Dataset& ds) {
    const std::size_t n = ds.size();
    if (n < 2) throw Error("dissimilarity needs at least 2 trajectories");
    DissimilarityMatrix m;
    m.n = n;
    m.pad_length = pad_length(ds);
    std::vector<std::vector<State>> padded;
    padded.reserve(n);
    for (const auto& t : ds.trajectories) padded.push_back(pad_states(t, m.pad_length));

    // Raw distances are symmetric; normalization is per row.
    std::vector<double> raw(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) raw[i * n + j] = raw[j * n + i] = raw_distance(padded[i], padded[j]);

    m.nu.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double row_max = *std::max_element(raw.begin() + static_cast<std::ptrdiff_t>(i * n),
                                                 raw.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
        if (row_max <= 0.0)
            throw Error("degenerate dataset: identical trajectories (row " + std::to_string(i) + ")");
        for (std::size_t j = 0; j < n; ++j) m.nu[i * n + j] = i == j ? 0.0 : raw[i * n + j] / row_max;
    }
    return m;
}

DissimilarityMatrix indicator_matrix(std::size_t n) {
    DissimilarityMatrix m;
    m.n = n;
    m.nu.assign(n * n, 1.0);
    for (std::size_t i = 0; i < n; ++i) m.nu[i * n + i] = 0.0;
    return m;
}

double weight(double nu_ij, double beta) { return std::exp(-beta * nu_ij); }

namespace {

constexpr char kMagic[6] = {'S', 'W', 'R', 'N', 'U', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(v >> (8 * k));
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw Error("truncated matrix file");
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    return v;
}

}  // namespace

void write_matrix(const std::filesystem::path& path, const DissimilarityMatrix& m) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string());
    out.write(kMagic, sizeof kMagic);
    put_u64(out, m.n);
    put_u64(out, m.pad_length);
    for (double v : m.nu) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        put_u64(out, bits);
    }
}

DissimilarityMatrix read_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    char magic[6];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw Error("not a dissimilarity matrix file");
    DissimilarityMatrix m;
    m.n = get_u64(in);
    m.pad_length = get_u64(in);
    m.nu.resize(m.n * m.n);
    for (double& v : m.nu) {
        const std::uint64_t bits = get_u64(in);
        std::memcpy(&v, &bits, sizeof v);
    }
    return m;
}

void write_matrix_csv(const std::filesystem::path& path, const DissimilarityMatrix& m) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path.string());
    out << std::setprecision(17);
    for (std::size_t i = 0; i < m.n; ++i) {
        for (std::size_t j = 0; j < m.n; ++j) out << (j ? "," : "") << m(i, j);
        out << '\n';
    }
}

}  // namespace stylebc::similarity
