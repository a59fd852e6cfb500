#include <atomic>
#include <cstdlib>
#include <string>

#include "stylebc/core.hpp"
#include "stylebc/kernels.hpp"

namespace stylebc::kernels {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    return avx2_table() != nullptr && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

namespace {

Backend initial_backend() {
    if (const char* env = std::getenv("STYLEBC_KERNELS")) {
        const std::string v(env);
        if (v == "scalar") return Backend::scalar;
        if (v == "avx2" && cpu_has_avx2()) return Backend::avx2;
    }
    return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& current() {
    static std::atomic<Backend> b{initial_backend()};
    return b;
}

}  // namespace

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
    if (b == Backend::avx2 && !cpu_has_avx2()) throw Error("AVX2 kernels unavailable on this CPU/build");
    current().store(b, std::memory_order_relaxed);
}

std::string_view backend_name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

const KernelTable& active() {
    return active_backend() == Backend::avx2 ? *avx2_table() : scalar_table();
}

}  // namespace stylebc::kernels
