// AVX2+FMA variants. Compiled with -mavx2 -mfma; only reached when the
// dispatcher has confirmed CPU support at runtime.
#include "dncl/kernels.hpp"

#include <cstring>
#include <immintrin.h>

namespace dncl::kern {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    __m128d s2 = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(s2, s2);
    return _mm_cvtsd_f64(_mm_add_sd(s2, sh));
}

// c[0..n) += a * b[0..n)
inline void fma_row(double a, const double* b, double* c, int64_t n) {
    const __m256d va = _mm256_set1_pd(a);
    int64_t j = 0;
    for (; j + 16 <= n; j += 16) {
        _mm256_storeu_pd(c + j, _mm256_fmadd_pd(va, _mm256_loadu_pd(b + j), _mm256_loadu_pd(c + j)));
        _mm256_storeu_pd(c + j + 4, _mm256_fmadd_pd(va, _mm256_loadu_pd(b + j + 4), _mm256_loadu_pd(c + j + 4)));
        _mm256_storeu_pd(c + j + 8, _mm256_fmadd_pd(va, _mm256_loadu_pd(b + j + 8), _mm256_loadu_pd(c + j + 8)));
        _mm256_storeu_pd(c + j + 12, _mm256_fmadd_pd(va, _mm256_loadu_pd(b + j + 12), _mm256_loadu_pd(c + j + 12)));
    }
    for (; j + 4 <= n; j += 4)
        _mm256_storeu_pd(c + j, _mm256_fmadd_pd(va, _mm256_loadu_pd(b + j), _mm256_loadu_pd(c + j)));
    for (; j < n; ++j) c[j] += a * b[j];
}

void gemm_nn(const double* A, const double* B, double* C,
             int64_t M, int64_t K, int64_t N, bool accumulate) {
    for (int64_t i = 0; i < M; ++i) {
        double* c = C + i * N;
        if (!accumulate) std::memset(c, 0, size_t(N) * sizeof(double));
        const double* a = A + i * K;
        int64_t k = 0;
        for (; k + 2 <= K; k += 2) {
            // two rank-1 updates per pass halves the traffic over c
            const __m256d a0 = _mm256_set1_pd(a[k]);
            const __m256d a1 = _mm256_set1_pd(a[k + 1]);
            const double* b0 = B + k * N;
            const double* b1 = B + (k + 1) * N;
            int64_t j = 0;
            for (; j + 4 <= N; j += 4) {
                __m256d acc = _mm256_loadu_pd(c + j);
                acc = _mm256_fmadd_pd(a0, _mm256_loadu_pd(b0 + j), acc);
                acc = _mm256_fmadd_pd(a1, _mm256_loadu_pd(b1 + j), acc);
                _mm256_storeu_pd(c + j, acc);
            }
            for (; j < N; ++j) c[j] += a[k] * b0[j] + a[k + 1] * b1[j];
        }
        for (; k < K; ++k) fma_row(a[k], B + k * N, c, N);
    }
}

double dot(const double* a, const double* b, int64_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double s = hsum(_mm256_add_pd(acc0, acc1));
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
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(c + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) c[i] = a[i] + b[i];
}

void vmul(const double* a, const double* b, double* c, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(c + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) c[i] = a[i] * b[i];
}

void vscale(const double* a, double s, double* c, int64_t n) {
    const __m256d vs = _mm256_set1_pd(s);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(c + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
    for (; i < n; ++i) c[i] = a[i] * s;
}

double vsum(const double* a, int64_t n) {
    __m256d acc = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i];
    return s;
}

double vsumsq(const double* a, int64_t n) {
    __m256d acc = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(a + i);
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * a[i];
    return s;
}

} // namespace

const Kernels& avx2_kernels() {
    static const Kernels k = {
        "avx2", gemm_nn, gemm_nt, gemm_tn, dot, axpy, vadd, vmul, vscale, vsum, vsumsq,
    };
    return k;
}

} // namespace dncl::kern
