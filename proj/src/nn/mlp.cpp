#include "carl/mlp.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "carl/kernels.hpp"
#include "carl/log.hpp"

namespace carl::nn {

Mlp::Mlp(std::vector<int> dims, OutputActivation out_act, Rng& rng)
    : dims_(std::move(dims)), out_act_(out_act) {
  if (dims_.size() < 2) throw std::runtime_error("Mlp needs >= 2 dims");
  init_offsets();
  // Glorot-uniform weights, zero biases
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    const int fan_in = dims_[l];
    const int fan_out = dims_[l + 1];
    const double r = std::sqrt(6.0 / (fan_in + fan_out));
    double* wp = params_.data() + w_off_[l];
    for (int i = 0; i < fan_in * fan_out; ++i) wp[i] = rng.uniform(-r, r);
  }
}

void Mlp::init_offsets() {
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    w_off_.push_back(total);
    total += static_cast<std::size_t>(dims_[l]) * dims_[l + 1];
    b_off_.push_back(total);
    total += dims_[l + 1];
  }
  params_.assign(total, 0.0);
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void Mlp::forward_batch(const std::vector<double>& in, int batch,
                        Cache& cache) const {
  const std::size_t n_layers = dims_.size() - 1;
  if (in.size() != static_cast<std::size_t>(batch) * dims_[0])
    throw std::runtime_error("Mlp::forward_batch: input size mismatch");
  cache.batch = batch;
  cache.acts.resize(n_layers + 1);
  cache.acts[0] = in;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const int rows = dims_[l + 1];
    const int cols = dims_[l];
    auto& out = cache.acts[l + 1];
    out.resize(static_cast<std::size_t>(batch) * rows);
    const auto& prev = cache.acts[l];
    for (int s = 0; s < batch; ++s) {
      double* o = out.data() + static_cast<std::size_t>(s) * rows;
      kern::matvec(w(l), prev.data() + static_cast<std::size_t>(s) * cols,
                   b(l), o, rows, cols);
      if (l + 1 < n_layers) {
        for (int r = 0; r < rows; ++r) o[r] = std::tanh(o[r]);
      } else if (out_act_ == OutputActivation::scaled_sigmoid3) {
        for (int r = 0; r < rows; ++r) o[r] = 3.0 * sigmoid(o[r]);
      }
    }
  }
}

std::vector<double> Mlp::forward1(const std::vector<double>& in) const {
  Cache c;
  forward_batch(in, 1, c);
  return c.acts.back();
}

void Mlp::backward(const Cache& cache, const std::vector<double>& out_adj,
                   std::vector<double>& grads,
                   std::vector<double>* in_grads) const {
  const std::size_t n_layers = dims_.size() - 1;
  const int batch = cache.batch;
  if (grads.size() != params_.size())
    throw std::runtime_error("Mlp::backward: grads size mismatch");
  if (out_adj.size() != static_cast<std::size_t>(batch) * dims_.back())
    throw std::runtime_error("Mlp::backward: adjoint size mismatch");
  if (in_grads)
    in_grads->assign(static_cast<std::size_t>(batch) * dims_[0], 0.0);

  std::vector<double> delta = out_adj;
  // output activation derivative
  if (out_act_ == OutputActivation::scaled_sigmoid3) {
    const auto& y = cache.acts.back();
    for (std::size_t i = 0; i < delta.size(); ++i)
      delta[i] *= y[i] * (3.0 - y[i]) / 3.0;
  }

  std::vector<double> prev_delta;
  for (std::size_t li = n_layers; li-- > 0;) {
    const int rows = dims_[li + 1];
    const int cols = dims_[li];
    const auto& below = cache.acts[li];
    double* gw = grads.data() + w_off_[li];
    double* gb = grads.data() + b_off_[li];

    const bool need_below = li > 0 || in_grads != nullptr;
    if (need_below)
      prev_delta.assign(static_cast<std::size_t>(batch) * cols, 0.0);

    for (int s = 0; s < batch; ++s) {
      const double* d = delta.data() + static_cast<std::size_t>(s) * rows;
      const double* a = below.data() + static_cast<std::size_t>(s) * cols;
      double* pd =
          need_below ? prev_delta.data() + static_cast<std::size_t>(s) * cols
                     : nullptr;
      for (int r = 0; r < rows; ++r) {
        const double dr = d[r];
        if (dr != 0.0) {
          kern::axpy(dr, a, gw + static_cast<std::size_t>(r) * cols, cols);
          if (pd) kern::axpy(dr, w(li) + static_cast<std::size_t>(r) * cols,
                             pd, cols);
        }
        gb[r] += dr;
      }
    }

    if (li > 0) {
      // tanh derivative of the layer below
      const auto& act = cache.acts[li];
      for (std::size_t i = 0; i < prev_delta.size(); ++i)
        prev_delta[i] *= 1.0 - act[i] * act[i];
      delta = std::move(prev_delta);
    } else if (in_grads) {
      *in_grads = std::move(prev_delta);
    }
  }
}

void polyak_update(Mlp& target, const Mlp& online, double tau) {
  if (!target.same_architecture(online))
    throw std::runtime_error("polyak_update: architecture mismatch");
  kern::lerp(target.params().data(), online.params().data(), tau,
             target.params().size());
}

double clip_global_norm(std::vector<double>& grads, double max_norm) {
  const double norm = std::sqrt(kern::sum_sq(grads.data(), grads.size()));
  if (norm <= max_norm || norm == 0.0) return 1.0;
  const double scale = max_norm / norm;
  kern::scal(grads.data(), scale, grads.size());
  return scale;
}

void Adam::step(std::vector<double>& params,
                const std::vector<double>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw std::runtime_error("Adam::step: size mismatch");
  ++t_;
  const double inv_bc1 = 1.0 / (1.0 - std::pow(beta1_, double(t_)));
  const double inv_bc2 = 1.0 / (1.0 - std::pow(beta2_, double(t_)));
  kern::adam_step(params.data(), m_.data(), v_.data(), grads.data(), lr_,
                  beta1_, beta2_, eps_, inv_bc1, inv_bc2, params.size());
}

void Mlp::save(std::ostream& os) const {
  os << "carl-mlp 1\n";
  os << "dims";
  for (int d : dims_) os << ' ' << d;
  os << "\nout "
     << (out_act_ == OutputActivation::identity ? "identity" : "sigmoid3")
     << "\n";
  for (double p : params_) os << format_double(p) << '\n';
}

void Mlp::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  save(out);
}

Mlp Mlp::load(std::istream& is) {
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != "carl-mlp" || version != 1)
    throw std::runtime_error("bad checkpoint header");
  std::string tag;
  is >> tag;
  if (tag != "dims") throw std::runtime_error("bad checkpoint dims");
  std::string rest;
  std::getline(is, rest);
  std::istringstream ds(rest);
  Mlp net;
  int d;
  while (ds >> d) net.dims_.push_back(d);
  if (net.dims_.size() < 2) throw std::runtime_error("bad checkpoint dims");
  is >> tag;
  if (tag != "out") throw std::runtime_error("bad checkpoint activation");
  std::string act;
  is >> act;
  if (act == "identity")
    net.out_act_ = OutputActivation::identity;
  else if (act == "sigmoid3")
    net.out_act_ = OutputActivation::scaled_sigmoid3;
  else
    throw std::runtime_error("unknown checkpoint activation " + act);
  net.init_offsets();
  for (auto& p : net.params_) {
    if (!(is >> p)) throw std::runtime_error("checkpoint truncated");
  }
  return net;
}

Mlp Mlp::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  return load(in);
}

}  // namespace carl::nn
