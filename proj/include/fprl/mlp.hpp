#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fprl/rng.hpp"

namespace fprl::net {

enum class Hidden { Tanh, Relu };
enum class Output { Linear, Tanh };

/// Fully connected network over doubles with a single flat parameter vector.
///
/// Parameter layout, fixed for optimizers and checkpoints alike: for each
/// layer l the row-major weight block (out_l x in_l) followed by the bias
/// block (out_l), layers in input-to-output order.
class Mlp {
 public:
  Mlp() = default;

  /// All parameters zero.
  Mlp(std::vector<int> dims, Hidden hidden, Output output);

  /// Per-layer uniform init in [-a, a] with a = sqrt(6 / (fan_in + fan_out)),
  /// biases zero. Weight draws come row by row from `rng`.
  static Mlp glorot(std::vector<int> dims, Hidden hidden, Output output, Rng& rng);

  int input_width() const { return dims_.front(); }
  int output_width() const { return dims_.back(); }
  int layer_count() const { return static_cast<int>(dims_.size()) - 1; }
  const std::vector<int>& dims() const { return dims_; }
  Hidden hidden_activation() const { return hidden_; }
  Output output_activation() const { return output_; }

  std::size_t param_count() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  std::vector<double> forward(std::span<const double> x) const;

  /// Post-activation values per layer; cache[0] is the input itself.
  /// Everything backward() needs, since tanh' and relu' are recoverable from
  /// the activation output.
  struct Cache {
    std::vector<std::vector<double>> post;
  };

  std::vector<double> forward(std::span<const double> x, Cache& cache) const;

  /// Reverse-mode sweep: accumulates d(dot(out_grad, y)) / d(params) into
  /// `grad` (length param_count, += semantics so callers can batch).
  void backward(const Cache& cache, std::span<const double> out_grad,
                std::span<double> grad) const;

 private:
  std::size_t weight_offset(int layer) const { return offsets_[2 * layer]; }
  std::size_t bias_offset(int layer) const { return offsets_[2 * layer + 1]; }
  void build_offsets();

  std::vector<int> dims_;
  Hidden hidden_ = Hidden::Tanh;
  Output output_ = Output::Linear;
  std::vector<double> params_;
  std::vector<std::size_t> offsets_;
};

/// Adam with standard bias correction. step() throws std::runtime_error on a
/// non-finite gradient so diverging training fails loudly instead of
/// poisoning the parameters.
class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void step(std::vector<double>& params, std::span<const double> grad);

  int step_count() const { return t_; }
  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<double> m_, v_;
};

/// Rescales grad in place so its L2 norm is at most max_norm; returns the
/// norm before clipping.
double clip_gradient_norm(std::span<double> grad, double max_norm);

/// Central-difference check of an analytic gradient.
///
/// `loss` evaluates the objective at the parameters currently stored in the
/// net; `analytic` is the gradient under test at the unperturbed point.
/// Checks every coordinate, or `max_coords` distinct random ones when that is
/// smaller (handy for large nets; keep it >= 100 for a meaningful check).
/// Returns the largest relative error |g - fd| / max(1, |g|, |fd|).
double finite_difference_check(Mlp& net, const std::function<double(const Mlp&)>& loss,
                               std::span<const double> analytic, Rng& rng,
                               std::size_t max_coords = 0, double step = 1e-6);

/// Text checkpoint. First line "fprl-ckpt v1 <role> <d0-d1-...-dn>", then the
/// flat parameter vector as round-trippable decimals in layout order. The
/// role ("policy", "critic" or "reward") fixes the activations on load:
/// tanh hidden layers everywhere, with a tanh output head for "reward" and a
/// linear one otherwise.
void save_checkpoint(const std::filesystem::path& path, const std::string& role,
                     const Mlp& net);

struct LoadedCheckpoint {
  std::string role;
  Mlp net;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fprl::net
