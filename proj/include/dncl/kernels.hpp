#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace dncl::kern {

// Data-parallel f64 primitives behind the tensor engine and expression
// evaluator. One scalar reference implementation plus SIMD variants
// (AVX2/AVX512 on x86-64, NEON on aarch64) selected at runtime; every
// variant is equivalence-tested against the scalar kernels.
//
// All matrices are dense row-major. gemm_* overwrite C unless `accumulate`
// is set. Reductions run in a fixed order per variant, so results are
// bit-reproducible run to run on the same machine.
struct Kernels {
    const char* name;

    // C(M,N) = A(M,K) * B(K,N)
    void (*gemm_nn)(const double* A, const double* B, double* C,
                    int64_t M, int64_t K, int64_t N, bool accumulate);
    // C(M,N) = A(M,K) * B(N,K)^T
    void (*gemm_nt)(const double* A, const double* B, double* C,
                    int64_t M, int64_t K, int64_t N, bool accumulate);
    // C(M,N) = A(K,M)^T * B(K,N)
    void (*gemm_tn)(const double* A, const double* B, double* C,
                    int64_t M, int64_t K, int64_t N, bool accumulate);

    double (*dot)(const double* a, const double* b, int64_t n);
    void (*axpy)(double alpha, const double* x, double* y, int64_t n); // y += alpha*x
    void (*vadd)(const double* a, const double* b, double* c, int64_t n);
    void (*vmul)(const double* a, const double* b, double* c, int64_t n);
    void (*vscale)(const double* a, double s, double* c, int64_t n);
    double (*vsum)(const double* a, int64_t n);
    double (*vsumsq)(const double* a, int64_t n);
};

const Kernels& scalar_kernels();
#if defined(__x86_64__) || defined(_M_X64)
const Kernels& avx2_kernels();
const Kernels& avx512_kernels();
#endif
#if defined(__aarch64__) || defined(__ARM_NEON)
const Kernels& neon_kernels();
#endif

// Active variant. Chosen once at startup from CPU capabilities; the
// DNCL_KERNELS env var ("scalar", "avx2", "avx512", "neon") overrides,
// as does set_active(). Unsupported requests are ignored.
const Kernels& active();
bool set_active(std::string_view name);

// Variants usable on this machine, scalar first.
std::vector<const Kernels*> available();

} // namespace dncl::kern
