#pragma once

// Parameterized layers shared by the two networks.

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "shockcast/ops.hpp"
#include "shockcast/optim.hpp"
#include "shockcast/spectral.hpp"

namespace shockcast::nn {

using ad::ParamSet;
using ad::Shape;
using ad::Tensor;

enum class Init { fan_in, zero, small };

template <class T>
struct Conv {
  Tensor<T> weight;
  Tensor<T> bias;
  Tensor<T> operator()(const Tensor<T>& x) const { return ad::conv2d(x, weight, bias); }
};

template <class T>
struct ConvT {
  Tensor<T> weight;
  Tensor<T> bias;
  Tensor<T> operator()(const Tensor<T>& x) const {
    return ad::conv_transpose2x2(x, weight, bias);
  }
};

template <class T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;
  Tensor<T> operator()(const Tensor<T>& x) const { return ad::linear(x, weight, bias); }
};

// Registers parameters under a name prefix and draws their initial values.
template <class T>
class Builder {
 public:
  Builder(ParamSet<T>& params, std::mt19937_64& rng) : params_(params), rng_(rng) {}

  Tensor<T> tensor(const std::string& name, Shape shape, std::vector<T> values) {
    return params_.add(name, std::move(shape), std::move(values));
  }

  Tensor<T> filled(const std::string& name, Shape shape, T value) {
    std::vector<T> v(ad::numel(shape), value);
    return tensor(name, std::move(shape), std::move(v));
  }

  std::vector<T> draw(std::size_t n, std::size_t fan_in, Init init) {
    switch (init) {
      case Init::zero:
        return std::vector<T>(n, T(0));
      case Init::small:
        return ad::normal_values<T>(rng_, n, 0.02);
      case Init::fan_in:
        break;
    }
    return ad::fan_in_values<T>(rng_, n, fan_in);
  }

  Conv<T> conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k,
               Init init = Init::fan_in) {
    auto w = tensor(name + ".w", {out, in, k, k}, draw(out * in * k * k, in * k * k, init));
    auto b = filled(name + ".b", {out}, T(0));
    return {w, b};
  }

  ConvT<T> conv_t(const std::string& name, std::size_t in, std::size_t out) {
    auto w = tensor(name + ".w", {in, out, 2, 2}, draw(in * out * 4, in, Init::fan_in));
    auto b = filled(name + ".b", {out}, T(0));
    return {w, b};
  }

  Linear<T> linear(const std::string& name, std::size_t in, std::size_t out,
                   Init init = Init::fan_in, T bias_fill = T(0)) {
    auto w = tensor(name + ".w", {out, in}, draw(out * in, in, init));
    auto b = filled(name + ".b", {out}, bias_fill);
    return {w, b};
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  ParamSet<T>& params_;
  std::mt19937_64& rng_;
};

// Sinusoidal features of the normalized timestep dt (N, 1): pairs (sin, cos)
// at geometric frequencies from 1 to 1e4. Output (N, 2 * pairs).
template <class T>
Tensor<T> sinusoidal_features(const Tensor<T>& dt, std::size_t pairs) {
  if (dt.rank() != 2 || dt.dim(1) != 1)
    throw ShapeError("sinusoidal_features: expected (N, 1), got " + ad::shape_str(dt.shape()));
  const std::size_t N = dt.dim(0);
  std::vector<double> freq(pairs, 1.0);
  for (std::size_t k = 1; k < pairs; ++k)
    freq[k] = std::pow(1e4, static_cast<double>(k) / static_cast<double>(pairs - 1));
  std::vector<T> v(N * 2 * pairs);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < pairs; ++k) {
      const double a = freq[k] * static_cast<double>(dt.values()[n]);
      v[n * 2 * pairs + 2 * k] = static_cast<T>(std::sin(a));
      v[n * 2 * pairs + 2 * k + 1] = static_cast<T>(std::cos(a));
    }
  return ad::detail::make_result<T>({N, 2 * pairs}, std::move(v), {&dt},
                                    [N, pairs, freq](ad::detail::Node<T>& self) {
    auto& x = self.inputs[0]->value;
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t n = 0; n < N; ++n) {
      double acc = 0.0;
      for (std::size_t k = 0; k < pairs; ++k) {
        const double a = freq[k] * static_cast<double>(x[n]);
        acc += freq[k] * (static_cast<double>(self.grad[n * 2 * pairs + 2 * k]) * std::cos(a) -
                          static_cast<double>(self.grad[n * 2 * pairs + 2 * k + 1]) * std::sin(a));
      }
      g[n] += static_cast<T>(acc);
    }
  });
}

// Sinusoidal features followed by a two-layer GELU MLP.
template <class T>
struct TimeEmbedding {
  std::size_t pairs = 32;
  Linear<T> fc1, fc2;

  static TimeEmbedding make(Builder<T>& b, const std::string& name, std::size_t pairs,
                            std::size_t dim) {
    return {pairs, b.linear(name + ".fc1", 2 * pairs, dim), b.linear(name + ".fc2", dim, dim)};
  }

  Tensor<T> operator()(const Tensor<T>& dt) const {
    return fc2(ad::gelu(fc1(sinusoidal_features(dt, pairs))));
  }
};

// Largest divisor of c not exceeding `want`.
inline std::size_t group_count(std::size_t c, std::size_t want) {
  std::size_t g = std::min(c, want);
  while (c % g) --g;
  return g;
}

}  // namespace shockcast::nn
