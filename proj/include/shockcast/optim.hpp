#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "shockcast/container.hpp"
#include "shockcast/tensor.hpp"

namespace shockcast::ad {

// Named, ordered collection of trainable leaves.
template <class T>
class ParamSet {
 public:
  Tensor<T>& add(const std::string& name, Shape shape, std::vector<T> values) {
    for (const auto& [n, _] : items_)
      if (n == name) throw InternalError("ParamSet: duplicate parameter " + name);
    items_.emplace_back(name, Tensor<T>::parameter(std::move(shape), std::move(values)));
    return items_.back().second;
  }

  // Reserves storage so references returned by add() stay valid.
  void reserve(std::size_t n) { items_.reserve(n); }

  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : items_) n += t.numel();
    return n;
  }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  Tensor<T>& at(const std::string& name) {
    for (auto& [n, t] : items_)
      if (n == name) return t;
    throw ConfigError("ParamSet: no parameter named " + name);
  }

  void zero_grad() {
    for (auto& [_, t] : items_) t.zero_grad();
  }

  std::vector<NamedArray> to_arrays() const {
    std::vector<NamedArray> out;
    for (const auto& [n, t] : items_) {
      NamedArray a{n, {}, {}};
      for (auto d : t.shape()) a.dims.push_back(static_cast<std::uint32_t>(d));
      for (T v : t.values()) a.data.push_back(static_cast<float>(v));
      out.push_back(std::move(a));
    }
    return out;
  }

  // Loads values by name; every parameter must be present with its shape.
  void from_arrays(const std::vector<NamedArray>& arrays) {
    for (auto& [n, t] : items_) {
      auto it = std::find_if(arrays.begin(), arrays.end(),
                             [&](const NamedArray& a) { return a.name == n; });
      if (it == arrays.end()) throw FormatError("checkpoint: missing parameter " + n);
      Shape s(it->dims.begin(), it->dims.end());
      if (s != t.shape())
        throw FormatError("checkpoint: parameter " + n + " has shape " + shape_str(s) +
                          ", expected " + shape_str(t.shape()));
      for (std::size_t k = 0; k < it->data.size(); ++k) t.values()[k] = static_cast<T>(it->data[k]);
    }
    if (arrays.size() != items_.size())
      throw FormatError("checkpoint: " + std::to_string(arrays.size()) + " arrays for " +
                        std::to_string(items_.size()) + " parameters");
  }

  void save(const std::string& path) const { write_parameter_file(path, to_arrays()); }
  void load(const std::string& path) { from_arrays(read_parameter_file(path)); }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
};

// Normal(0, std^2) draws from a seeded engine; identical across element types.
template <class T>
std::vector<T> normal_values(std::mt19937_64& rng, std::size_t n, double std) {
  std::normal_distribution<double> dist(0.0, std);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return v;
}

// He-style initialization for a layer with the given fan-in.
template <class T>
std::vector<T> fan_in_values(std::mt19937_64& rng, std::size_t n, std::size_t fan_in) {
  return normal_values<T>(rng, n, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

// lr0 * (1 + cos(pi * step / total)) / 2
inline double cosine_lr(std::size_t step, std::size_t total, double lr0) {
  if (total == 0) return lr0;
  const double f = static_cast<double>(std::min(step, total)) / static_cast<double>(total);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * f));
}

template <class T>
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ParamSet<T>& params, double lr) {
    if (m_.empty()) {
      for (const auto& [_, p] : params) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
      }
    }
    if (m_.size() != params.size()) throw ShapeError("Adam: parameter set changed");
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    std::size_t i = 0;
    for (auto& [_, p] : params) {
      auto& m = m_[i];
      auto& v = v_[i];
      if (m.size() != p.numel()) throw ShapeError("Adam: state shape mismatch");
      auto& g = p.grad();
      for (std::size_t k = 0; k < m.size(); ++k) {
        const double gk = static_cast<double>(g[k]);
        m[k] = b1_ * m[k] + (1.0 - b1_) * gk;
        v[k] = b2_ * v[k] + (1.0 - b2_) * gk * gk;
        const double mhat = m[k] / c1;
        const double vhat = v[k] / c2;
        p.values()[k] = static_cast<T>(static_cast<double>(p.values()[k]) -
                                       lr * mhat / (std::sqrt(vhat) + eps_));
      }
      ++i;
    }
  }

  std::size_t steps() const { return t_; }

 private:
  double b1_, b2_, eps_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace shockcast::ad
