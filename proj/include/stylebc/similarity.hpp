#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "stylebc/core.hpp"

namespace stylebc::similarity {

/// Dense row-major |D| x |D| trajectory dissimilarities. Row i is normalized
/// by its own maximum, so the matrix is generally not symmetric; entry
/// (i, j) is read with i as the data trajectory and j as the style donor.
struct DissimilarityMatrix {
    std::size_t n = 0;
    std::size_t pad_length = 0;
    std::vector<double> nu;

    double operator()(std::size_t i, std::size_t j) const { return nu[i * n + j]; }
    std::span<const double> row(std::size_t i) const { return {nu.data() + i * n, n}; }
};

/// Original states followed by copies of the final state, total length `length`.
std::vector<State> pad_states(const Trajectory& traj, std::size_t length);

/// Euclidean norm of the flattened per-timestep differences.
double raw_distance(std::span<const State> a, std::span<const State> b);

/// Padding length used for a dataset: its longest state sequence.
std::size_t pad_length(const Dataset& ds);

DissimilarityMatrix dissimilarity_matrix(const Dataset& ds);
/// Indicator dissimilarity 1(i != j).
DissimilarityMatrix indicator_matrix(std::size_t n);

double weight(double nu_ij, double beta);

/// Binary cache: magic "SWRNU1", u64 |D|, u64 pad_length, then row-major
/// little-endian float64 entries.
void write_matrix(const std::filesystem::path& path, const DissimilarityMatrix& m);
DissimilarityMatrix read_matrix(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const DissimilarityMatrix& m);

}  // namespace stylebc::similarity
