#include "carl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace carl::kern {

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_sq(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * a[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void lerp(double* target, const double* online, double tau, std::size_t n) {
  const double keep = 1.0 - tau;
  for (std::size_t i = 0; i < n; ++i)
    target[i] = keep * target[i] + tau * online[i];
}

void scal(double* x, double alpha, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void clamp(double* x, double lo, double hi, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    x[i] = x[i] < lo ? lo : (x[i] > hi ? hi : x[i]);
}

void adam_step(double* p, double* m, double* v, const double* g, double lr,
               double beta1, double beta2, double eps, double inv_bc1,
               double inv_bc2, std::size_t n) {
  const double c1 = 1.0 - beta1;
  const double c2 = 1.0 - beta2;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + c1 * g[i];
    v[i] = beta2 * v[i] + c2 * (g[i] * g[i]);
    const double mhat = m[i] * inv_bc1;
    const double vhat = v[i] * inv_bc2;
    p[i] = p[i] - lr * (mhat / (std::sqrt(vhat) + eps));
  }
}

void matvec(const double* w, const double* x, const double* b, double* out,
            std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    out[r] = dot(w + r * cols, x, cols) + b[r];
}

}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
double sum_sq(const double* a, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void lerp(double* target, const double* online, double tau, std::size_t n);
void scal(double* x, double alpha, std::size_t n);
void clamp(double* x, double lo, double hi, std::size_t n);
void adam_step(double* p, double* m, double* v, const double* g, double lr,
               double beta1, double beta2, double eps, double inv_bc1,
               double inv_bc2, std::size_t n);
void matvec(const double* w, const double* x, const double* b, double* out,
            std::size_t rows, std::size_t cols);
}  // namespace avx2
#endif

namespace {

bool detect_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend& backend_slot() {
  static Backend b = detect_avx2() ? Backend::avx2 : Backend::scalar;
  return b;
}

}  // namespace

bool avx2_supported() {
  static const bool ok = detect_avx2();
  return ok;
}

Backend active_backend() { return backend_slot(); }

void set_backend(Backend b) {
  if (b == Backend::avx2 && !avx2_supported())
    throw std::runtime_error("kernel backend avx2 not supported on this CPU");
  backend_slot() = b;
}

void set_backend(const std::string& name) {
  if (name == "auto")
    backend_slot() = detect_avx2() ? Backend::avx2 : Backend::scalar;
  else if (name == "scalar")
    set_backend(Backend::scalar);
  else if (name == "avx2")
    set_backend(Backend::avx2);
  else
    throw std::runtime_error("unknown kernel backend '" + name + "'");
}

const char* backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

#if defined(__x86_64__) || defined(_M_X64)
#define CARL_DISPATCH(fn, ...)                                        \
  do {                                                                \
    if (backend_slot() == Backend::avx2) return avx2::fn(__VA_ARGS__); \
    return scalar::fn(__VA_ARGS__);                                   \
  } while (0)
#else
#define CARL_DISPATCH(fn, ...) return scalar::fn(__VA_ARGS__)
#endif

double dot(const double* a, const double* b, std::size_t n) {
  CARL_DISPATCH(dot, a, b, n);
}

double sum_sq(const double* a, std::size_t n) { CARL_DISPATCH(sum_sq, a, n); }

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  CARL_DISPATCH(axpy, alpha, x, y, n);
}

void lerp(double* target, const double* online, double tau, std::size_t n) {
  CARL_DISPATCH(lerp, target, online, tau, n);
}

void scal(double* x, double alpha, std::size_t n) {
  CARL_DISPATCH(scal, x, alpha, n);
}

void clamp(double* x, double lo, double hi, std::size_t n) {
  CARL_DISPATCH(clamp, x, lo, hi, n);
}

void adam_step(double* p, double* m, double* v, const double* g, double lr,
               double beta1, double beta2, double eps, double inv_bc1,
               double inv_bc2, std::size_t n) {
  CARL_DISPATCH(adam_step, p, m, v, g, lr, beta1, beta2, eps, inv_bc1,
                inv_bc2, n);
}

void matvec(const double* w, const double* x, const double* b, double* out,
            std::size_t rows, std::size_t cols) {
  CARL_DISPATCH(matvec, w, x, b, out, rows, cols);
}

#undef CARL_DISPATCH

}  // namespace carl::kern
