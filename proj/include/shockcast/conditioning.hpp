#pragma once

// Timestep-conditioning operators. Coefficient tensors are (N, C) unless
// stated otherwise and broadcast over spatial positions.

#include <vector>

#include "shockcast/ops.hpp"
#include "shockcast/spectral.hpp"

namespace shockcast::ad {

// group_norm(z) * (1 + scale) + shift
template <class T>
Tensor<T> cond_group_norm(const Tensor<T>& z, const Tensor<T>& scale, const Tensor<T>& shift,
                          std::size_t groups) {
  return add_nc(mul_nc(group_norm(z, groups), affine(scale, T(1), T(1))), shift);
}

// z + a * f
template <class T>
Tensor<T> euler_residual(const Tensor<T>& z, const Tensor<T>& f, const Tensor<T>& a) {
  return add(z, mul_nc(f, a));
}

// z + sum_k gate[:, k] * a_k * f_k, all experts evaluated.
template <class T>
Tensor<T> moe_residual(const Tensor<T>& z, const std::vector<Tensor<T>>& f,
                       const std::vector<Tensor<T>>& a, const Tensor<T>& gate) {
  const std::size_t K = f.size();
  if (K == 0) throw ConfigError("moe_residual: no experts");
  if (a.size() != K || gate.rank() != 2 || gate.dim(0) != z.dim(0) || gate.dim(1) != K)
    throw ShapeError("moe_residual: " + std::to_string(K) + " experts, " +
                     std::to_string(a.size()) + " coefficients, gate " + shape_str(gate.shape()));
  Tensor<T> acc;
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t N = a[k].dim(0), C = a[k].dim(1);
    Tensor<T> coef = reshape(mul_nc(reshape(a[k], {N, 1, C}), slice_channels(gate, k, 1)), {N, C});
    Tensor<T> term = mul_nc(f[k], coef);
    acc = k == 0 ? term : add(acc, term);
  }
  return add(z, acc);
}

// Scales the lowest M retained Fourier modes of the last axis by xi (N, M, 2)
// and leaves the remaining modes untouched.
template <class T>
Tensor<T> spectral_condition(const Tensor<T>& z, const Tensor<T>& xi) {
  if (xi.rank() != 3 || xi.dim(2) != 2 || xi.dim(0) != z.dim(0))
    throw ShapeError("spectral_condition: xi " + shape_str(xi.shape()) + " for input " +
                     shape_str(z.shape()));
  const std::size_t L = z.shape().back();
  const std::size_t M = xi.dim(1);
  Tensor<T> zh = rfft_last(z, M);
  return add(sub(z, irfft_last(zh, L)), irfft_last(complex_mul(zh, xi), L));
}

}  // namespace shockcast::ad
