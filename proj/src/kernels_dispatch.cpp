#include "dncl/kernels.hpp"

#include <cstdlib>
#include <string>

namespace dncl::kern {
namespace {

#if defined(__x86_64__) || defined(_M_X64)
bool cpu_has_avx2() { return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"); }
bool cpu_has_avx512() { return __builtin_cpu_supports("avx512f"); }
#endif

const Kernels* pick_default() {
#if defined(__x86_64__) || defined(_M_X64)
    if (cpu_has_avx512()) return &avx512_kernels();
    if (cpu_has_avx2()) return &avx2_kernels();
#elif defined(__aarch64__) || defined(__ARM_NEON)
    return &neon_kernels();
#endif
    return &scalar_kernels();
}

const Kernels* find(std::string_view name) {
    if (name == "scalar") return &scalar_kernels();
#if defined(__x86_64__) || defined(_M_X64)
    if (name == "avx2" && cpu_has_avx2()) return &avx2_kernels();
    if (name == "avx512" && cpu_has_avx512()) return &avx512_kernels();
#endif
#if defined(__aarch64__) || defined(__ARM_NEON)
    if (name == "neon") return &neon_kernels();
#endif
    return nullptr;
}

const Kernels*& active_slot() {
    static const Kernels* slot = [] {
        if (const char* env = std::getenv("DNCL_KERNELS")) {
            if (const Kernels* k = find(env)) return k;
        }
        return pick_default();
    }();
    return slot;
}

} // namespace

const Kernels& active() { return *active_slot(); }

bool set_active(std::string_view name) {
    if (const Kernels* k = find(name)) {
        active_slot() = k;
        return true;
    }
    return false;
}

std::vector<const Kernels*> available() {
    std::vector<const Kernels*> out;
    out.push_back(&scalar_kernels());
#if defined(__x86_64__) || defined(_M_X64)
    if (cpu_has_avx2()) out.push_back(&avx2_kernels());
    if (cpu_has_avx512()) out.push_back(&avx512_kernels());
#endif
#if defined(__aarch64__) || defined(__ARM_NEON)
    out.push_back(&neon_kernels());
#endif
    return out;
}

} // namespace dncl::kern
