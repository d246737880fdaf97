#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>
#include <vector>

#include "carl/kernels.hpp"
#include "carl/rng.hpp"

using namespace carl;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -2.0,
                               double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) !=
        std::bit_cast<std::uint64_t>(b[i]))
      return false;
  return true;
}

struct BackendGuard {
  kern::Backend saved = kern::active_backend();
  ~BackendGuard() { kern::set_backend(saved); }
};

}  // namespace

TEST_CASE("elementwise kernels are bit-identical across backends") {
  if (!kern::avx2_supported()) return;
  BackendGuard guard;
  Rng rng(7);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 64u, 129u}) {
    auto x = random_vec(rng, n);
    auto y = random_vec(rng, n);
    auto g = random_vec(rng, n);
    auto m = random_vec(rng, n, 0.0, 1.0);
    auto v = random_vec(rng, n, 0.0, 1.0);
    auto p = random_vec(rng, n);

    auto ys = y, ya = y;
    kern::set_backend(kern::Backend::scalar);
    kern::axpy(0.37, x.data(), ys.data(), n);
    kern::set_backend(kern::Backend::avx2);
    kern::axpy(0.37, x.data(), ya.data(), n);
    CHECK(bits_equal(ys, ya));

    auto ts = y, ta = y;
    kern::set_backend(kern::Backend::scalar);
    kern::lerp(ts.data(), x.data(), 0.005, n);
    kern::set_backend(kern::Backend::avx2);
    kern::lerp(ta.data(), x.data(), 0.005, n);
    CHECK(bits_equal(ts, ta));

    auto cs = x, ca = x;
    kern::set_backend(kern::Backend::scalar);
    kern::clamp(cs.data(), -0.5, 0.8, n);
    kern::set_backend(kern::Backend::avx2);
    kern::clamp(ca.data(), -0.5, 0.8, n);
    CHECK(bits_equal(cs, ca));

    auto ss = x, sa = x;
    kern::set_backend(kern::Backend::scalar);
    kern::scal(ss.data(), 1.7, n);
    kern::set_backend(kern::Backend::avx2);
    kern::scal(sa.data(), 1.7, n);
    CHECK(bits_equal(ss, sa));

    auto ps = p, ms = m, vs = v;
    auto pa = p, ma = m, va = v;
    kern::set_backend(kern::Backend::scalar);
    kern::adam_step(ps.data(), ms.data(), vs.data(), g.data(), 1e-3, 0.9,
                    0.999, 1e-8, 1.11, 1.02, n);
    kern::set_backend(kern::Backend::avx2);
    kern::adam_step(pa.data(), ma.data(), va.data(), g.data(), 1e-3, 0.9,
                    0.999, 1e-8, 1.11, 1.02, n);
    CHECK(bits_equal(ps, pa));
    CHECK(bits_equal(ms, ma));
    CHECK(bits_equal(vs, va));
  }
}

TEST_CASE("reduction kernels agree across backends within tolerance") {
  if (!kern::avx2_supported()) return;
  BackendGuard guard;
  Rng rng(11);
  for (std::size_t n : {0u, 1u, 5u, 16u, 63u, 200u, 1000u}) {
    auto a = random_vec(rng, n);
    auto b = random_vec(rng, n);
    kern::set_backend(kern::Backend::scalar);
    const double ds = kern::dot(a.data(), b.data(), n);
    const double ss = kern::sum_sq(a.data(), n);
    kern::set_backend(kern::Backend::avx2);
    const double da = kern::dot(a.data(), b.data(), n);
    const double sa = kern::sum_sq(a.data(), n);
    CHECK(std::abs(ds - da) <= 1e-13 * (1.0 + std::abs(ds)));
    CHECK(std::abs(ss - sa) <= 1e-13 * (1.0 + std::abs(ss)));
  }
}

TEST_CASE("matvec matches the reduction definition on both backends") {
  BackendGuard guard;
  Rng rng(3);
  const std::size_t rows = 7, cols = 13;
  auto w = random_vec(rng, rows * cols);
  auto x = random_vec(rng, cols);
  auto b = random_vec(rng, rows);
  std::vector<double> expect(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = b[r];
    for (std::size_t c = 0; c < cols; ++c) s += w[r * cols + c] * x[c];
    expect[r] = s;
  }
  for (auto backend : {kern::Backend::scalar, kern::Backend::avx2}) {
    if (backend == kern::Backend::avx2 && !kern::avx2_supported()) continue;
    kern::set_backend(backend);
    std::vector<double> out(rows);
    kern::matvec(w.data(), x.data(), b.data(), out.data(), rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      CHECK(out[r] == doctest::Approx(expect[r]).epsilon(1e-12));
  }
}

TEST_CASE("backend selection") {
  BackendGuard guard;
  kern::set_backend("scalar");
  CHECK(kern::active_backend() == kern::Backend::scalar);
  CHECK_THROWS(kern::set_backend("turbo"));
  kern::set_backend("auto");
  if (kern::avx2_supported())
    CHECK(kern::active_backend() == kern::Backend::avx2);
}
