#pragma once

// Vector kernels used by the function approximators and optimizers.
// Every kernel has a scalar reference implementation and, on x86-64,
// an AVX2 variant selected at runtime. Elementwise kernels (axpy, lerp,
// scal, clamp, adam_step) produce bit-identical results on both paths;
// reductions (dot, sum_sq) may differ by reassociation and are compared
// under tolerance in the equivalence tests.

#include <cstddef>
#include <string>

namespace carl::kern {

enum class Backend { scalar, avx2 };

// Currently active backend. Defaults to the best supported one.
Backend active_backend();

bool avx2_supported();

// Force a backend; throws std::runtime_error if unsupported on this CPU.
void set_backend(Backend b);

// Parse "auto" | "scalar" | "avx2" and apply it.
void set_backend(const std::string& name);

const char* backend_name(Backend b);

// out = W x + b, W row-major (rows x cols)
void matvec(const double* w, const double* x, const double* b, double* out,
            std::size_t rows, std::size_t cols);

double dot(const double* a, const double* b, std::size_t n);

double sum_sq(const double* a, std::size_t n);

// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);

// target = (1 - tau) * target + tau * online
void lerp(double* target, const double* online, double tau, std::size_t n);

// x *= alpha
void scal(double* x, double alpha, std::size_t n);

void clamp(double* x, double lo, double hi, std::size_t n);

// Adam parameter update. inv_bc1/inv_bc2 are the 1/(1-beta^t) bias
// corrections, precomputed by the caller once per step.
void adam_step(double* p, double* m, double* v, const double* g, double lr,
               double beta1, double beta2, double eps, double inv_bc1,
               double inv_bc2, std::size_t n);

}  // namespace carl::kern
