#pragma once

// Central finite-difference oracle for reverse-mode gradients.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "shockcast/tensor.hpp"

namespace shockcast::oracle {

using DTensor = ad::Tensor<double>;

inline DTensor random_tensor(std::mt19937_64& rng, ad::Shape shape, bool param = true,
                             double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = u(rng);
  return param ? DTensor::parameter(std::move(shape), std::move(v))
               : DTensor(std::move(shape), std::move(v));
}

// Fixed random projection turning any output into a scalar.
inline DTensor project(const DTensor& out, unsigned seed = 99) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> w(out.numel());
  for (auto& x : w) x = n(rng);
  return ad::sum(ad::mul(out, DTensor(out.shape(), std::move(w))));
}

// Largest relative error ||analytic - numeric|| / max(||analytic||, ||numeric||)
// over the given inputs.
inline double gradcheck(const std::vector<DTensor>& inputs, const std::function<DTensor()>& f,
                        double eps = 1e-5) {
  for (auto t : inputs) t.zero_grad();
  ad::backward(f());
  double worst = 0.0;
  for (auto t : inputs) {
    const std::vector<double> analytic = t.grad();
    std::vector<double> numeric(t.numel());
    {
      ad::NoGradGuard guard;
      for (std::size_t k = 0; k < t.numel(); ++k) {
        const double x0 = t.values()[k];
        t.values()[k] = x0 + eps;
        const double fp = f().item();
        t.values()[k] = x0 - eps;
        const double fm = f().item();
        t.values()[k] = x0;
        numeric[k] = (fp - fm) / (2.0 * eps);
      }
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t k = 0; k < numeric.size(); ++k) {
      diff += (analytic[k] - numeric[k]) * (analytic[k] - numeric[k]);
      na += analytic[k] * analytic[k];
      nn += numeric[k] * numeric[k];
    }
    const double scale = std::max(std::sqrt(std::max(na, nn)), 1e-300);
    worst = std::max(worst, std::sqrt(diff) / scale);
  }
  return worst;
}

}  // namespace shockcast::oracle
