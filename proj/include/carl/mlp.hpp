#pragma once

// Small dense networks with tanh hidden layers and manual reverse-mode
// gradients. Parameters live in one flat vector (layer weights row-major,
// then biases) so the optimizer, target averaging and checkpoints all
// operate on contiguous arrays.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "carl/rng.hpp"

namespace carl::nn {

enum class OutputActivation { identity, scaled_sigmoid3 };

class Mlp {
 public:
  Mlp() = default;
  // dims = {in, hidden..., out}
  Mlp(std::vector<int> dims, OutputActivation out_act, Rng& rng);

  int in_dim() const { return dims_.front(); }
  int out_dim() const { return dims_.back(); }
  const std::vector<int>& dims() const { return dims_; }
  OutputActivation output_activation() const { return out_act_; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t n_params() const { return params_.size(); }

  // Per-layer activations of one forward pass, kept for backward().
  struct Cache {
    int batch = 0;
    std::vector<std::vector<double>> acts;  // acts[0] = inputs
  };

  void forward_batch(const std::vector<double>& in, int batch,
                     Cache& cache) const;
  const std::vector<double>& outputs(const Cache& cache) const {
    return cache.acts.back();
  }

  std::vector<double> forward1(const std::vector<double>& in) const;

  // Accumulates dL/dparams into grads (sized n_params); out_adj holds
  // dL/doutput per sample. When in_grads is non-null it receives
  // dL/dinput (batch x in_dim).
  void backward(const Cache& cache, const std::vector<double>& out_adj,
                std::vector<double>& grads,
                std::vector<double>* in_grads = nullptr) const;

  bool same_architecture(const Mlp& other) const {
    return dims_ == other.dims_ && out_act_ == other.out_act_;
  }

  void save(std::ostream& os) const;
  static Mlp load(std::istream& is);  // throws on malformed input
  void save_file(const std::string& path) const;
  static Mlp load_file(const std::string& path);

 private:
  std::vector<int> dims_;
  OutputActivation out_act_ = OutputActivation::identity;
  std::vector<double> params_;
  // offsets into params_: per layer, weight block then bias block
  std::vector<std::size_t> w_off_, b_off_;

  void init_offsets();
  const double* w(int layer) const { return params_.data() + w_off_[layer]; }
  const double* b(int layer) const { return params_.data() + b_off_[layer]; }
};

// target <- (1 - tau) * target + tau * online; architectures must match.
void polyak_update(Mlp& target, const Mlp& online, double tau);

// Scales grads so the global L2 norm is at most max_norm; returns the
// factor applied (1.0 when already within the bound).
double clip_global_norm(std::vector<double>& grads, double max_norm);

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0),
        v_(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grads);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::int64_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace carl::nn
