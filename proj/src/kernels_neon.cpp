// NEON variants (2 f64 lanes per q-register). aarch64 only.
#include "dncl/kernels.hpp"

#if defined(__aarch64__) || defined(__ARM_NEON)

#include <arm_neon.h>
#include <cstring>

namespace dncl::kern {
namespace {

inline void fma_row(double a, const double* b, double* c, int64_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    int64_t j = 0;
    for (; j + 4 <= n; j += 4) {
        vst1q_f64(c + j, vfmaq_f64(vld1q_f64(c + j), va, vld1q_f64(b + j)));
        vst1q_f64(c + j + 2, vfmaq_f64(vld1q_f64(c + j + 2), va, vld1q_f64(b + j + 2)));
    }
    for (; j + 2 <= n; j += 2)
        vst1q_f64(c + j, vfmaq_f64(vld1q_f64(c + j), va, vld1q_f64(b + j)));
    for (; j < n; ++j) c[j] += a * b[j];
}

void gemm_nn(const double* A, const double* B, double* C,
             int64_t M, int64_t K, int64_t N, bool accumulate) {
    for (int64_t i = 0; i < M; ++i) {
        double* c = C + i * N;
        if (!accumulate) std::memset(c, 0, size_t(N) * sizeof(double));
        const double* a = A + i * K;
        for (int64_t k = 0; k < K; ++k) fma_row(a[k], B + k * N, c, N);
    }
}

double dot(const double* a, const double* b, int64_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    }
    for (; i + 2 <= n; i += 2)
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    double s = vaddvq_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void gemm_nt(const double* A, const double* B, double* C,
             int64_t M, int64_t K, int64_t N, bool accumulate) {
    for (int64_t i = 0; i < M; ++i) {
        const double* a = A + i * K;
        double* c = C + i * N;
        for (int64_t j = 0; j < N; ++j) {
            const double acc = dot(a, B + j * K, K);
            c[j] = accumulate ? c[j] + acc : acc;
        }
    }
}

void gemm_tn(const double* A, const double* B, double* C,
             int64_t M, int64_t K, int64_t N, bool accumulate) {
    if (!accumulate) std::memset(C, 0, size_t(M) * size_t(N) * sizeof(double));
    for (int64_t k = 0; k < K; ++k) {
        const double* a = A + k * M;
        const double* b = B + k * N;
        for (int64_t i = 0; i < M; ++i) fma_row(a[i], b, C + i * N, N);
    }
}

void axpy(double alpha, const double* x, double* y, int64_t n) {
    fma_row(alpha, x, y, n);
}

void vadd(const double* a, const double* b, double* c, int64_t n) {
    int64_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(c + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) c[i] = a[i] + b[i];
}

void vmul(const double* a, const double* b, double* c, int64_t n) {
    int64_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(c + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) c[i] = a[i] * b[i];
}

void vscale(const double* a, double s, double* c, int64_t n) {
    const float64x2_t vs = vdupq_n_f64(s);
    int64_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(c + i, vmulq_f64(vld1q_f64(a + i), vs));
    for (; i < n; ++i) c[i] = a[i] * s;
}

double vsum(const double* a, int64_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    int64_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(a + i));
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) s += a[i];
    return s;
}

double vsumsq(const double* a, int64_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    int64_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t v = vld1q_f64(a + i);
        acc = vfmaq_f64(acc, v, v);
    }
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) s += a[i] * a[i];
    return s;
}

} // namespace

const Kernels& neon_kernels() {
    static const Kernels k = {
        "neon", gemm_nn, gemm_nt, gemm_tn, dot, axpy, vadd, vmul, vscale, vsum, vsumsq,
    };
    return k;
}

} // namespace dncl::kern

#endif // __aarch64__ || __ARM_NEON
