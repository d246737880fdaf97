#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>
#include <sstream>

#include "carl/mlp.hpp"
#include "carl/rng.hpp"
#include "gradcheck.hpp"

using namespace carl;
using nn::Mlp;
using nn::OutputActivation;

TEST_CASE("zero-hidden-layer identity network reproduces its input") {
  Rng rng(1);
  Mlp net({3, 3}, OutputActivation::identity, rng);
  // weights = I, bias = 0
  auto& p = net.params();
  std::fill(p.begin(), p.end(), 0.0);
  p[0] = p[4] = p[8] = 1.0;  // row-major 3x3
  auto out = net.forward1({0.3, -1.2, 2.5});
  CHECK(out[0] == doctest::Approx(0.3));
  CHECK(out[1] == doctest::Approx(-1.2));
  CHECK(out[2] == doctest::Approx(2.5));
}

TEST_CASE("scaled sigmoid output stays inside (0,3)") {
  Rng rng(2);
  Mlp net({4, 16, 5}, OutputActivation::scaled_sigmoid3, rng);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> in(4);
    for (auto& x : in) x = rng.uniform(-20.0, 20.0);
    for (double y : net.forward1(in)) {
      CHECK(y > 0.0);
      CHECK(y < 3.0);
    }
  }
}

TEST_CASE("fixed seed and input give byte-identical outputs") {
  Rng rng_a(42), rng_b(42);
  Mlp a({6, 32, 2}, OutputActivation::identity, rng_a);
  Mlp b({6, 32, 2}, OutputActivation::identity, rng_b);
  std::vector<double> in = {0.5, -0.25, 1.0, 2.0, -1.5, 0.0};
  auto oa = a.forward1(in);
  auto ob = b.forward1(in);
  for (std::size_t i = 0; i < oa.size(); ++i)
    CHECK(std::bit_cast<std::uint64_t>(oa[i]) ==
          std::bit_cast<std::uint64_t>(ob[i]));
}

TEST_CASE("linear 1->1 gradient equals the input") {
  Rng rng(3);
  Mlp net({1, 1}, OutputActivation::identity, rng);
  Mlp::Cache cache;
  net.forward_batch({2.5}, 1, cache);
  std::vector<double> grads(net.n_params(), 0.0);
  net.backward(cache, {1.0}, grads);
  CHECK(grads[0] == doctest::Approx(2.5));  // d(out)/d(weight) = x
  CHECK(grads[1] == doctest::Approx(1.0));  // d(out)/d(bias) = 1
}

TEST_CASE("constant loss has zero gradient") {
  Rng rng(4);
  Mlp net({3, 8, 2}, OutputActivation::identity, rng);
  Mlp::Cache cache;
  net.forward_batch({0.1, 0.2, 0.3}, 1, cache);
  std::vector<double> grads(net.n_params(), 0.0);
  net.backward(cache, {0.0, 0.0}, grads);
  for (double g : grads) CHECK(g == 0.0);
}

TEST_CASE("reverse-mode gradient matches central finite differences") {
  Rng rng(5);
  for (auto act :
       {OutputActivation::identity, OutputActivation::scaled_sigmoid3}) {
    Mlp net({5, 24, 24, 2}, act, rng);
    const int batch = 7;
    std::vector<double> in(5 * batch);
    for (auto& x : in) x = rng.uniform(-1.0, 1.0);
    std::vector<double> adj(2 * batch);
    for (auto& x : adj) x = rng.uniform(-1.0, 1.0);

    auto loss = [&]() {
      Mlp::Cache c;
      net.forward_batch(in, batch, c);
      double s = 0.0;
      const auto& out = c.acts.back();
      for (std::size_t i = 0; i < out.size(); ++i) s += adj[i] * out[i];
      return s;
    };
    Mlp::Cache c;
    net.forward_batch(in, batch, c);
    std::vector<double> grads(net.n_params(), 0.0);
    net.backward(c, adj, grads);

    auto res = testutil::gradcheck(net.params(), grads, loss, 100, rng);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("gradcheck holds at the production architectures") {
  Rng rng(55);
  // actor 50->64->64->5 (bounded), critic 55->128->128->1
  struct Arch {
    std::vector<int> dims;
    OutputActivation act;
  };
  for (const Arch& a :
       {Arch{{50, 64, 64, 5}, OutputActivation::scaled_sigmoid3},
        Arch{{55, 128, 128, 1}, OutputActivation::identity}}) {
    Mlp net(a.dims, a.act, rng);
    const int batch = 4;
    std::vector<double> in(a.dims.front() * batch);
    for (auto& x : in) x = rng.uniform(-1.0, 1.0);
    std::vector<double> adj(a.dims.back() * batch);
    for (auto& x : adj) x = rng.uniform(-1.0, 1.0);
    auto loss = [&]() {
      Mlp::Cache c;
      net.forward_batch(in, batch, c);
      double s = 0.0;
      for (std::size_t i = 0; i < c.acts.back().size(); ++i)
        s += adj[i] * c.acts.back()[i];
      return s;
    };
    Mlp::Cache c;
    net.forward_batch(in, batch, c);
    std::vector<double> grads(net.n_params(), 0.0);
    net.backward(c, adj, grads);
    auto res = testutil::gradcheck(net.params(), grads, loss, 60, rng);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("input gradients match finite differences") {
  Rng rng(6);
  Mlp net({4, 16, 1}, OutputActivation::identity, rng);
  std::vector<double> in = {0.4, -0.2, 0.9, 0.05};
  Mlp::Cache c;
  net.forward_batch(in, 1, c);
  std::vector<double> grads(net.n_params(), 0.0), in_grads;
  net.backward(c, {1.0}, grads, &in_grads);
  const double h = 1e-6;
  for (int j = 0; j < 4; ++j) {
    auto up = in, dn = in;
    up[j] += h;
    dn[j] -= h;
    const double fd = (net.forward1(up)[0] - net.forward1(dn)[0]) / (2 * h);
    CHECK(in_grads[j] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("polyak update limits and contraction") {
  Rng rng(7);
  Mlp online({3, 8, 2}, OutputActivation::identity, rng);
  Mlp target({3, 8, 2}, OutputActivation::identity, rng);

  Mlp t1 = target;
  nn::polyak_update(t1, online, 1.0);
  for (std::size_t i = 0; i < t1.n_params(); ++i)
    CHECK(t1.params()[i] == online.params()[i]);

  Mlp t2 = online;
  nn::polyak_update(t2, online, 0.005);
  for (std::size_t i = 0; i < t2.n_params(); ++i)
    CHECK(t2.params()[i] == doctest::Approx(online.params()[i]));

  // two tau=0.5 steps from 0 toward 1 land on 0.75
  Mlp zeros = online, ones = online;
  std::fill(zeros.params().begin(), zeros.params().end(), 0.0);
  std::fill(ones.params().begin(), ones.params().end(), 1.0);
  nn::polyak_update(zeros, ones, 0.5);
  nn::polyak_update(zeros, ones, 0.5);
  for (double p : zeros.params()) CHECK(p == doctest::Approx(0.75));

  // contraction: ||t' - o|| = (1 - tau) ||t - o||
  auto dist = [](const Mlp& a, const Mlp& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.n_params(); ++i) {
      const double d = a.params()[i] - b.params()[i];
      s += d * d;
    }
    return std::sqrt(s);
  };
  const double before = dist(target, online);
  Mlp t3 = target;
  nn::polyak_update(t3, online, 0.25);
  CHECK(dist(t3, online) == doctest::Approx(0.75 * before).epsilon(1e-12));

  Mlp wrong({3, 9, 2}, OutputActivation::identity, rng);
  CHECK_THROWS(nn::polyak_update(wrong, online, 0.5));
}

TEST_CASE("adam with clipping keeps parameters finite") {
  Rng rng(8);
  Mlp net({2, 16, 1}, OutputActivation::identity, rng);
  nn::Adam opt(net.n_params(), 1e-2);
  for (int step = 0; step < 200; ++step) {
    std::vector<double> grads(net.n_params());
    for (auto& g : grads) g = rng.uniform(-100.0, 100.0);
    nn::clip_global_norm(grads, 5.0);
    double norm = 0.0;
    for (double g : grads) norm += g * g;
    CHECK(std::sqrt(norm) <= 5.0 + 1e-9);
    opt.step(net.params(), grads);
  }
  for (double p : net.params()) CHECK(std::isfinite(p));
}

TEST_CASE("checkpoint round trip validates architecture") {
  Rng rng(9);
  Mlp net({4, 12, 3}, OutputActivation::scaled_sigmoid3, rng);
  std::stringstream ss;
  net.save(ss);
  Mlp back = Mlp::load(ss);
  CHECK(back.same_architecture(net));
  for (std::size_t i = 0; i < net.n_params(); ++i)
    CHECK(std::bit_cast<std::uint64_t>(back.params()[i]) ==
          std::bit_cast<std::uint64_t>(net.params()[i]));

  std::stringstream bad("carl-mlp 7\ndims 2 2\nout identity\n");
  CHECK_THROWS(Mlp::load(bad));
}
