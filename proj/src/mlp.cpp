#include "fprl/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fprl::net {

namespace {

double activate(double x, Hidden h) {
  return h == Hidden::Tanh ? std::tanh(x) : (x > 0.0 ? x : 0.0);
}

// Derivative written in terms of the activation output. relu' at exactly 0
// is taken as 0, a fixed subgradient choice.
double activate_grad(double y, Hidden h) {
  return h == Hidden::Tanh ? 1.0 - y * y : (y > 0.0 ? 1.0 : 0.0);
}

void check_dims(const std::vector<int>& dims) {
  if (dims.size() < 2)
    throw std::invalid_argument("Mlp: need at least input and output widths");
  for (int d : dims)
    if (d < 1) throw std::invalid_argument("Mlp: layer widths must be positive");
}

}  // namespace

Mlp::Mlp(std::vector<int> dims, Hidden hidden, Output output)
    : dims_(std::move(dims)), hidden_(hidden), output_(output) {
  check_dims(dims_);
  build_offsets();
}

void Mlp::build_offsets() {
  offsets_.clear();
  std::size_t total = 0;
  for (int l = 0; l + 1 < static_cast<int>(dims_.size()); ++l) {
    const auto in = static_cast<std::size_t>(dims_[l]);
    const auto out = static_cast<std::size_t>(dims_[l + 1]);
    offsets_.push_back(total);        // weights
    total += in * out;
    offsets_.push_back(total);        // biases
    total += out;
  }
  params_.assign(total, 0.0);
}

Mlp Mlp::glorot(std::vector<int> dims, Hidden hidden, Output output, Rng& rng) {
  Mlp net(std::move(dims), hidden, output);
  for (int l = 0; l < net.layer_count(); ++l) {
    const int in = net.dims_[l];
    const int out = net.dims_[l + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    double* w = net.params_.data() + net.weight_offset(l);
    for (int i = 0; i < out * in; ++i) w[i] = rng.uniform(-a, a);
    // biases stay zero
  }
  return net;
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  Cache scratch;
  return forward(x, scratch);
}

std::vector<double> Mlp::forward(std::span<const double> x, Cache& cache) const {
  if (static_cast<int>(x.size()) != input_width())
    throw std::invalid_argument("Mlp::forward: input width mismatch");
  cache.post.assign(static_cast<std::size_t>(layer_count()) + 1, {});
  cache.post[0].assign(x.begin(), x.end());

  for (int l = 0; l < layer_count(); ++l) {
    const int in = dims_[l];
    const int out = dims_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    const double* b = params_.data() + bias_offset(l);
    const std::vector<double>& prev = cache.post[static_cast<std::size_t>(l)];
    std::vector<double>& cur = cache.post[static_cast<std::size_t>(l) + 1];
    cur.assign(static_cast<std::size_t>(out), 0.0);
    const bool last = l == layer_count() - 1;
    for (int j = 0; j < out; ++j) {
      const double* row = w + static_cast<std::size_t>(j) * in;
      double z = b[j];
      for (int i = 0; i < in; ++i) z += row[i] * prev[static_cast<std::size_t>(i)];
      if (last)
        cur[static_cast<std::size_t>(j)] = output_ == Output::Tanh ? std::tanh(z) : z;
      else
        cur[static_cast<std::size_t>(j)] = activate(z, hidden_);
    }
  }
  return cache.post.back();
}

void Mlp::backward(const Cache& cache, std::span<const double> out_grad,
                   std::span<double> grad) const {
  if (cache.post.size() != static_cast<std::size_t>(layer_count()) + 1)
    throw std::invalid_argument("Mlp::backward: cache does not match network");
  if (static_cast<int>(out_grad.size()) != output_width())
    throw std::invalid_argument("Mlp::backward: output gradient width mismatch");
  if (grad.size() != params_.size())
    throw std::invalid_argument("Mlp::backward: gradient buffer size mismatch");

  // Delta at the output head.
  std::vector<double> delta(out_grad.begin(), out_grad.end());
  if (output_ == Output::Tanh) {
    const std::vector<double>& y = cache.post.back();
    for (std::size_t j = 0; j < delta.size(); ++j) delta[j] *= 1.0 - y[j] * y[j];
  }

  for (int l = layer_count() - 1; l >= 0; --l) {
    const int in = dims_[l];
    const int out = dims_[l + 1];
    const std::vector<double>& prev = cache.post[static_cast<std::size_t>(l)];
    double* gw = grad.data() + weight_offset(l);
    double* gb = grad.data() + bias_offset(l);
    for (int j = 0; j < out; ++j) {
      const double d = delta[static_cast<std::size_t>(j)];
      gb[j] += d;
      double* grow = gw + static_cast<std::size_t>(j) * in;
      for (int i = 0; i < in; ++i) grow[i] += d * prev[static_cast<std::size_t>(i)];
    }
    if (l == 0) break;
    const double* w = params_.data() + weight_offset(l);
    std::vector<double> prev_delta(static_cast<std::size_t>(in), 0.0);
    for (int j = 0; j < out; ++j) {
      const double d = delta[static_cast<std::size_t>(j)];
      const double* row = w + static_cast<std::size_t>(j) * in;
      for (int i = 0; i < in; ++i) prev_delta[static_cast<std::size_t>(i)] += d * row[i];
    }
    for (int i = 0; i < in; ++i)
      prev_delta[static_cast<std::size_t>(i)] *=
          activate_grad(prev[static_cast<std::size_t>(i)], hidden_);
    delta = std::move(prev_delta);
  }
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {
  if (lr <= 0.0) throw std::invalid_argument("Adam: learning rate must be positive");
}

void Adam::step(std::vector<double>& params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw std::invalid_argument("Adam::step: size mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw std::runtime_error("Adam::step: non-finite gradient");

  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
  }
}

double clip_gradient_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (double& g : grad) g *= scale;
  }
  return norm;
}

double finite_difference_check(Mlp& net, const std::function<double(const Mlp&)>& loss,
                               std::span<const double> analytic, Rng& rng,
                               std::size_t max_coords, double step) {
  if (analytic.size() != net.param_count())
    throw std::invalid_argument("finite_difference_check: gradient size mismatch");
  const std::size_t n = net.param_count();

  std::vector<std::size_t> coords;
  if (max_coords == 0 || max_coords >= n) {
    coords.resize(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
  } else {
    // Distinct random coordinates via partial Fisher-Yates.
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < max_coords; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.next() % (n - i));
      std::swap(pool[i], pool[j]);
    }
    coords.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(max_coords));
  }

  double worst = 0.0;
  std::vector<double>& p = net.params();
  for (std::size_t c : coords) {
    const double saved = p[c];
    p[c] = saved + step;
    const double up = loss(net);
    p[c] = saved - step;
    const double down = loss(net);
    p[c] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double g = analytic[c];
    const double scale = std::max({1.0, std::abs(g), std::abs(fd)});
    worst = std::max(worst, std::abs(g - fd) / scale);
  }
  return worst;
}

void save_checkpoint(const std::filesystem::path& path, const std::string& role,
                     const Mlp& net) {
  if (role != "policy" && role != "critic" && role != "reward")
    throw std::invalid_argument("save_checkpoint: unknown role '" + role + "'");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());

  out << "fprl-ckpt v1 " << role << ' ';
  const auto& dims = net.dims();
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out << '-';
    out << dims[i];
  }
  out << '\n';

  char buf[40];
  const auto& p = net.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", p[i]);
    out << buf << ((i + 1) % 8 == 0 ? '\n' : ' ');
  }
  if (p.size() % 8 != 0) out << '\n';
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());

  std::string magic, version, role, dimspec;
  if (!(in >> magic >> version >> role >> dimspec) || magic != "fprl-ckpt" ||
      version != "v1")
    throw std::runtime_error("load_checkpoint: bad header in " + path.string());
  if (role != "policy" && role != "critic" && role != "reward")
    throw std::runtime_error("load_checkpoint: unknown role '" + role + "' in " +
                             path.string());

  std::vector<int> dims;
  std::stringstream ds(dimspec);
  std::string tok;
  while (std::getline(ds, tok, '-')) {
    try {
      dims.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw std::runtime_error("load_checkpoint: bad layer dims in " + path.string());
    }
  }

  const Output head = role == "reward" ? Output::Tanh : Output::Linear;
  Mlp net(dims, Hidden::Tanh, head);
  for (double& x : net.params()) {
    if (!(in >> x))
      throw std::runtime_error("load_checkpoint: truncated parameters in " +
                               path.string());
  }
  double extra;
  if (in >> extra)
    throw std::runtime_error("load_checkpoint: trailing parameters in " + path.string());
  return {role, std::move(net)};
}

}  // namespace fprl::net
