// AVX512F variants (8 f64 lanes). Compiled with -mavx512f; reached only when
// the dispatcher has confirmed CPU support.
#include "dncl/kernels.hpp"

#include <cstring>
#include <immintrin.h>

namespace dncl::kern {
namespace {

inline void fma_row(double a, const double* b, double* c, int64_t n) {
    const __m512d va = _mm512_set1_pd(a);
    int64_t j = 0;
    for (; j + 16 <= n; j += 16) {
        _mm512_storeu_pd(c + j, _mm512_fmadd_pd(va, _mm512_loadu_pd(b + j), _mm512_loadu_pd(c + j)));
        _mm512_storeu_pd(c + j + 8, _mm512_fmadd_pd(va, _mm512_loadu_pd(b + j + 8), _mm512_loadu_pd(c + j + 8)));
    }
    for (; j + 8 <= n; j += 8)
        _mm512_storeu_pd(c + j, _mm512_fmadd_pd(va, _mm512_loadu_pd(b + j), _mm512_loadu_pd(c + j)));
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
            const __m512d a0 = _mm512_set1_pd(a[k]);
            const __m512d a1 = _mm512_set1_pd(a[k + 1]);
            const double* b0 = B + k * N;
            const double* b1 = B + (k + 1) * N;
            int64_t j = 0;
            for (; j + 8 <= N; j += 8) {
                __m512d acc = _mm512_loadu_pd(c + j);
                acc = _mm512_fmadd_pd(a0, _mm512_loadu_pd(b0 + j), acc);
                acc = _mm512_fmadd_pd(a1, _mm512_loadu_pd(b1 + j), acc);
                _mm512_storeu_pd(c + j, acc);
            }
            for (; j < N; ++j) c[j] += a[k] * b0[j] + a[k + 1] * b1[j];
        }
        for (; k < K; ++k) fma_row(a[k], B + k * N, c, N);
    }
}

double dot(const double* a, const double* b, int64_t n) {
    __m512d acc0 = _mm512_setzero_pd();
    __m512d acc1 = _mm512_setzero_pd();
    int64_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm512_fmadd_pd(_mm512_loadu_pd(a + i), _mm512_loadu_pd(b + i), acc0);
        acc1 = _mm512_fmadd_pd(_mm512_loadu_pd(a + i + 8), _mm512_loadu_pd(b + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8)
        acc0 = _mm512_fmadd_pd(_mm512_loadu_pd(a + i), _mm512_loadu_pd(b + i), acc0);
    double s = _mm512_reduce_add_pd(_mm512_add_pd(acc0, acc1));
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
    for (; i + 8 <= n; i += 8)
        _mm512_storeu_pd(c + i, _mm512_add_pd(_mm512_loadu_pd(a + i), _mm512_loadu_pd(b + i)));
    for (; i < n; ++i) c[i] = a[i] + b[i];
}

void vmul(const double* a, const double* b, double* c, int64_t n) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm512_storeu_pd(c + i, _mm512_mul_pd(_mm512_loadu_pd(a + i), _mm512_loadu_pd(b + i)));
    for (; i < n; ++i) c[i] = a[i] * b[i];
}

void vscale(const double* a, double s, double* c, int64_t n) {
    const __m512d vs = _mm512_set1_pd(s);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm512_storeu_pd(c + i, _mm512_mul_pd(_mm512_loadu_pd(a + i), vs));
    for (; i < n; ++i) c[i] = a[i] * s;
}

double vsum(const double* a, int64_t n) {
    __m512d acc = _mm512_setzero_pd();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm512_add_pd(acc, _mm512_loadu_pd(a + i));
    double s = _mm512_reduce_add_pd(acc);
    for (; i < n; ++i) s += a[i];
    return s;
}

double vsumsq(const double* a, int64_t n) {
    __m512d acc = _mm512_setzero_pd();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m512d v = _mm512_loadu_pd(a + i);
        acc = _mm512_fmadd_pd(v, v, acc);
    }
    double s = _mm512_reduce_add_pd(acc);
    for (; i < n; ++i) s += a[i] * a[i];
    return s;
}

} // namespace

const Kernels& avx512_kernels() {
    static const Kernels k = {
        "avx512", gemm_nn, gemm_nt, gemm_tn, dot, axpy, vadd, vmul, vscale, vsum, vsumsq,
    };
    return k;
}

} // namespace dncl::kern
