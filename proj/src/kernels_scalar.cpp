#include "dncl/kernels.hpp"

#include <cstring>

namespace dncl::kern {
namespace {

void gemm_nn(const double* A, const double* B, double* C,
             int64_t M, int64_t K, int64_t N, bool accumulate) {
    for (int64_t i = 0; i < M; ++i) {
        double* c = C + i * N;
        if (!accumulate) std::memset(c, 0, size_t(N) * sizeof(double));
        const double* a = A + i * K;
        for (int64_t k = 0; k < K; ++k) {
            const double aik = a[k];
            const double* b = B + k * N;
            for (int64_t j = 0; j < N; ++j) c[j] += aik * b[j];
        }
    }
}

void gemm_nt(const double* A, const double* B, double* C,
             int64_t M, int64_t K, int64_t N, bool accumulate) {
    for (int64_t i = 0; i < M; ++i) {
        const double* a = A + i * K;
        double* c = C + i * N;
        for (int64_t j = 0; j < N; ++j) {
            const double* b = B + j * K;
            double acc = 0.0;
            for (int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
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
        for (int64_t i = 0; i < M; ++i) {
            const double aki = a[i];
            double* c = C + i * N;
            for (int64_t j = 0; j < N; ++j) c[j] += aki * b[j];
        }
    }
}

double dot(const double* a, const double* b, int64_t n) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy(double alpha, const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void vadd(const double* a, const double* b, double* c, int64_t n) {
    for (int64_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

void vmul(const double* a, const double* b, double* c, int64_t n) {
    for (int64_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}

void vscale(const double* a, double s, double* c, int64_t n) {
    for (int64_t i = 0; i < n; ++i) c[i] = a[i] * s;
}

double vsum(const double* a, int64_t n) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

double vsumsq(const double* a, int64_t n) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += a[i] * a[i];
    return acc;
}

} // namespace

const Kernels& scalar_kernels() {
    static const Kernels k = {
        "scalar", gemm_nn, gemm_nt, gemm_tn, dot, axpy, vadd, vmul, vscale, vsum, vsumsq,
    };
    return k;
}

} // namespace dncl::kern
