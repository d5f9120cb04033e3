#pragma once

// Fourier-domain ops. Complex tensors store (real, imag) in a trailing axis
// of size 2.
//
// rfft_last / irfft_last transform the last axis keeping only the lowest
// `modes` frequencies; they are evaluated as dense DFT products, which for a
// handful of retained modes is cheaper than a full FFT followed by
// truncation. rfft2 / irfft2 are full transforms on power-of-two sides.

#include <complex>
#include <numbers>
#include <unsupported/Eigen/FFT>

#include "shockcast/ops.hpp"

namespace shockcast::ad {

namespace detail {

inline bool is_pow2(std::size_t n) { return n >= 1 && (n & (n - 1)) == 0; }

// F (L x 2M): x (., L) * F = [Re X_0, Im X_0, Re X_1, ...].
template <class T>
std::vector<T> forward_dft_table(std::size_t L, std::size_t M) {
  std::vector<T> f(L * 2 * M);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t m = 0; m < M; ++m) {
      const double ang = 2.0 * std::numbers::pi * static_cast<double>((m * t) % L) /
                         static_cast<double>(L);
      f[t * 2 * M + 2 * m] = static_cast<T>(std::cos(ang));
      f[t * 2 * M + 2 * m + 1] = static_cast<T>(-std::sin(ang));
    }
  return f;
}

// G (2M x L): real inverse with the spectrum zero beyond M; imaginary parts of
// the DC and Nyquist terms are ignored, as in a c2r transform.
template <class T>
std::vector<T> inverse_dft_table(std::size_t L, std::size_t M) {
  std::vector<T> g(2 * M * L);
  for (std::size_t m = 0; m < M; ++m) {
    const double c = (m == 0 || 2 * m == L) ? 1.0 : 2.0;
    for (std::size_t t = 0; t < L; ++t) {
      const double ang = 2.0 * std::numbers::pi * static_cast<double>((m * t) % L) /
                         static_cast<double>(L);
      g[(2 * m) * L + t] = static_cast<T>(c * std::cos(ang) / static_cast<double>(L));
      g[(2 * m + 1) * L + t] = static_cast<T>(-c * std::sin(ang) / static_cast<double>(L));
    }
  }
  return g;
}

}  // namespace detail

// (..., L) real -> (..., M, 2)
template <class T>
Tensor<T> rfft_last(const Tensor<T>& x, std::size_t modes) {
  if (x.rank() < 1) throw ShapeError("rfft_last: scalar input");
  const std::size_t L = x.shape().back();
  if (modes == 0 || modes > L / 2 + 1)
    throw ShapeError("rfft_last: " + std::to_string(modes) + " modes for length " +
                     std::to_string(L));
  const std::size_t R = x.numel() / L;
  auto table = detail::forward_dft_table<T>(L, modes);
  std::vector<T> out(R * 2 * modes);
  detail::gemm(false, false, R, 2 * modes, L, x.data(), table.data(), out.data(), false);
  Shape shape = x.shape();
  shape.back() = modes;
  shape.push_back(2);
  return detail::make_result<T>(std::move(shape), std::move(out), {&x},
                                [R, L, modes, table = std::move(table)](detail::Node<T>& self) {
    detail::gemm(false, true, R, L, 2 * modes, self.grad.data(), table.data(),
                 self.inputs[0]->grad_buffer().data(), true);
  });
}

// (..., M, 2) -> (..., L) real
template <class T>
Tensor<T> irfft_last(const Tensor<T>& z, std::size_t length) {
  if (z.rank() < 2 || z.shape().back() != 2)
    throw ShapeError("irfft_last: expected (..., M, 2), got " + shape_str(z.shape()));
  const std::size_t M = z.dim(z.rank() - 2);
  if (M == 0 || M > length / 2 + 1)
    throw ShapeError("irfft_last: " + std::to_string(M) + " modes for length " +
                     std::to_string(length));
  const std::size_t R = z.numel() / (2 * M);
  auto table = detail::inverse_dft_table<T>(length, M);
  std::vector<T> out(R * length);
  detail::gemm(false, false, R, length, 2 * M, z.data(), table.data(), out.data(), false);
  Shape shape(z.shape().begin(), z.shape().end() - 2);
  shape.push_back(length);
  return detail::make_result<T>(std::move(shape), std::move(out), {&z},
                                [R, length, M, table = std::move(table)](detail::Node<T>& self) {
    detail::gemm(false, true, R, 2 * M, length, self.grad.data(), table.data(),
                 self.inputs[0]->grad_buffer().data(), true);
  });
}

// (..., A, B) -> (..., B, A)
template <class T>
Tensor<T> swap_last2(const Tensor<T>& x) {
  if (x.rank() < 2) throw ShapeError("swap_last2: rank must be >= 2");
  const std::size_t A = x.dim(x.rank() - 2), B = x.dim(x.rank() - 1);
  const std::size_t R = x.numel() / (A * B);
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t b = 0; b < B; ++b) out[r * A * B + b * A + a] = x.data()[r * A * B + a * B + b];
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  return detail::make_result<T>(std::move(shape), std::move(out), {&x},
                                [R, A, B](detail::Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t a = 0; a < A; ++a)
        for (std::size_t b = 0; b < B; ++b)
          g[r * A * B + a * B + b] += self.grad[r * A * B + b * A + a];
  });
}

// Per-mode channel mixing.
// z (N, Ci, H, M, 2), weight (Ci, Co, M, 2) -> (N, Co, H, M, 2),
// out[n,o,h,m] = sum_c z[n,c,h,m] * weight[c,o,m].
template <class T>
Tensor<T> spectral_mix(const Tensor<T>& z, const Tensor<T>& weight) {
  detail::require_rank("spectral_mix", z, 5);
  detail::require_rank("spectral_mix", weight, 4);
  const std::size_t N = z.dim(0), Ci = z.dim(1), H = z.dim(2), M = z.dim(3);
  const std::size_t Co = weight.dim(1);
  if (z.dim(4) != 2 || weight.dim(0) != Ci || weight.dim(2) != M || weight.dim(3) != 2)
    throw ShapeError("spectral_mix: input " + shape_str(z.shape()) + ", weight " +
                     shape_str(weight.shape()));
  // Per mode m the product is one real GEMM: rows (n, h), columns [re | im],
  // against the block matrix [[Wr, Wi], [-Wi, Wr]].
  const std::size_t R = N * H;
  auto gather = [=](const T* src, std::size_t C, std::size_t m, T* dst) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t h = 0; h < H; ++h) {
          const T* p = src + (((n * C + c) * H + h) * M + m) * 2;
          T* row = dst + (n * H + h) * 2 * C;
          row[c] = p[0];
          row[C + c] = p[1];
        }
  };
  auto scatter = [=](const T* src, std::size_t C, std::size_t m, T* dst, bool accumulate) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t h = 0; h < H; ++h) {
          T* p = dst + (((n * C + c) * H + h) * M + m) * 2;
          const T* row = src + (n * H + h) * 2 * C;
          if (accumulate) {
            p[0] += row[c];
            p[1] += row[C + c];
          } else {
            p[0] = row[c];
            p[1] = row[C + c];
          }
        }
  };
  auto block = [=](const T* w, std::size_t m, T* B) {
    for (std::size_t c = 0; c < Ci; ++c)
      for (std::size_t o = 0; o < Co; ++o) {
        const T wr = w[((c * Co + o) * M + m) * 2], wi = w[((c * Co + o) * M + m) * 2 + 1];
        B[c * 2 * Co + o] = wr;
        B[c * 2 * Co + Co + o] = wi;
        B[(Ci + c) * 2 * Co + o] = -wi;
        B[(Ci + c) * 2 * Co + Co + o] = wr;
      }
  };
  std::vector<T> out(N * Co * H * M * 2);
  {
    std::vector<T> A(R * 2 * Ci), B(4 * Ci * Co), Y(R * 2 * Co);
    for (std::size_t m = 0; m < M; ++m) {
      gather(z.data(), Ci, m, A.data());
      block(weight.data(), m, B.data());
      detail::gemm(false, false, R, 2 * Co, 2 * Ci, A.data(), B.data(), Y.data(), false);
      scatter(Y.data(), Co, m, out.data(), false);
    }
  }
  return detail::make_result<T>({N, Co, H, M, 2}, std::move(out), {&z, &weight},
                                [=](detail::Node<T>& self) {
    auto& Z = self.inputs[0];
    auto& Wt = self.inputs[1];
    std::vector<T> A(R * 2 * Ci), B(4 * Ci * Co), G(R * 2 * Co), GA(R * 2 * Ci),
        GB(4 * Ci * Co);
    for (std::size_t m = 0; m < M; ++m) {
      gather(self.grad.data(), Co, m, G.data());
      if (Z->requires_grad) {
        block(Wt->value.data(), m, B.data());
        detail::gemm(false, true, R, 2 * Ci, 2 * Co, G.data(), B.data(), GA.data(), false);
        scatter(GA.data(), Ci, m, Z->grad_buffer().data(), true);
      }
      if (Wt->requires_grad) {
        gather(Z->value.data(), Ci, m, A.data());
        detail::gemm(true, false, 2 * Ci, 2 * Co, R, A.data(), G.data(), GB.data(), false);
        auto& gw = Wt->grad_buffer();
        for (std::size_t c = 0; c < Ci; ++c)
          for (std::size_t o = 0; o < Co; ++o) {
            const std::size_t k = ((c * Co + o) * M + m) * 2;
            gw[k] += GB[c * 2 * Co + o] + GB[(Ci + c) * 2 * Co + Co + o];
            gw[k + 1] += GB[c * 2 * Co + Co + o] - GB[(Ci + c) * 2 * Co + o];
          }
      }
    }
  });
}

// Pointwise complex product with per-sample broadcasting:
// z (N, ..., tail), w (N, tail) where tail ends in the complex axis.
template <class T>
Tensor<T> complex_mul(const Tensor<T>& z, const Tensor<T>& w) {
  if (w.rank() < 2 || z.rank() < w.rank() || z.dim(0) != w.dim(0) || z.shape().back() != 2 ||
      w.shape().back() != 2 ||
      !std::equal(w.shape().begin() + 1, w.shape().end(), z.shape().end() - (w.rank() - 1)))
    throw ShapeError("complex_mul: cannot broadcast " + shape_str(w.shape()) + " onto " +
                     shape_str(z.shape()));
  const std::size_t N = z.dim(0);
  const std::size_t tail = w.numel() / N / 2;  // complex entries per sample in w
  const std::size_t mid = z.numel() / N / 2 / tail;
  std::vector<T> out(z.numel());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t r = 0; r < mid; ++r)
      for (std::size_t k = 0; k < tail; ++k) {
        const std::size_t zi = ((n * mid + r) * tail + k) * 2, wi = (n * tail + k) * 2;
        const T ar = z.data()[zi], ai = z.data()[zi + 1];
        const T br = w.data()[wi], bi = w.data()[wi + 1];
        out[zi] = ar * br - ai * bi;
        out[zi + 1] = ar * bi + ai * br;
      }
  return detail::make_result<T>(z.shape(), std::move(out), {&z, &w},
                                [N, mid, tail](detail::Node<T>& self) {
    auto& Z = self.inputs[0];
    auto& Wt = self.inputs[1];
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t r = 0; r < mid; ++r)
        for (std::size_t k = 0; k < tail; ++k) {
          const std::size_t zi = ((n * mid + r) * tail + k) * 2, wi = (n * tail + k) * 2;
          const T gr = self.grad[zi], gi = self.grad[zi + 1];
          if (Z->requires_grad) {
            const T br = Wt->value[wi], bi = Wt->value[wi + 1];
            auto& g = Z->grad_buffer();
            g[zi] += br * gr + bi * gi;
            g[zi + 1] += br * gi - bi * gr;
          }
          if (Wt->requires_grad) {
            const T ar = Z->value[zi], ai = Z->value[zi + 1];
            auto& g = Wt->grad_buffer();
            g[wi] += ar * gr + ai * gi;
            g[wi + 1] += ar * gi - ai * gr;
          }
        }
  });
}

// ---------------------------------------------------------------------------
// Full 2-D real transforms on the last two axes.

namespace detail {

template <class T>
using Cx = std::complex<T>;

// Unnormalized complex DFT along the first axis of an (H, K) complex array.
template <class T>
void dft_columns(Eigen::FFT<T>& fft, std::vector<Cx<T>>& a, std::size_t H, std::size_t K,
                 bool inverse) {
  std::vector<Cx<T>> col(H), res(H);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t h = 0; h < H; ++h) col[h] = a[h * K + k];
    if (inverse)
      fft.inv(res, col);
    else
      fft.fwd(res, col);
    for (std::size_t h = 0; h < H; ++h) a[h * K + k] = res[h];
  }
}

template <class T>
void dft_rows(Eigen::FFT<T>& fft, std::vector<Cx<T>>& a, std::size_t H, std::size_t K,
              bool inverse) {
  std::vector<Cx<T>> row(K), res(K);
  for (std::size_t h = 0; h < H; ++h) {
    std::copy_n(a.begin() + static_cast<std::ptrdiff_t>(h * K), K, row.begin());
    if (inverse)
      fft.inv(res, row);
    else
      fft.fwd(res, row);
    std::copy(res.begin(), res.end(), a.begin() + static_cast<std::ptrdiff_t>(h * K));
  }
}

template <class T>
Eigen::FFT<T> unscaled_fft() {
  Eigen::FFT<T> fft;
  fft.SetFlag(Eigen::FFT<T>::Unscaled);
  return fft;
}

}  // namespace detail

// (..., H, W) real -> (..., H, W/2 + 1, 2)
template <class T>
Tensor<T> rfft2(const Tensor<T>& x) {
  if (x.rank() < 2) throw ShapeError("rfft2: rank must be >= 2");
  const std::size_t H = x.dim(x.rank() - 2), W = x.dim(x.rank() - 1);
  if (!detail::is_pow2(H) || !detail::is_pow2(W) || W < 2)
    throw ShapeError("rfft2: sides must be powers of two, got " + shape_str(x.shape()));
  const std::size_t K = W / 2 + 1, R = x.numel() / (H * W);
  auto fft = detail::unscaled_fft<T>();
  std::vector<T> out(R * H * K * 2);
  std::vector<detail::Cx<T>> full(H * W), half(H * K);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t k = 0; k < H * W; ++k) full[k] = x.data()[r * H * W + k];
    detail::dft_rows(fft, full, H, W, false);
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t k = 0; k < K; ++k) half[h * K + k] = full[h * W + k];
    detail::dft_columns(fft, half, H, K, false);
    for (std::size_t k = 0; k < H * K; ++k) {
      out[(r * H * K + k) * 2] = half[k].real();
      out[(r * H * K + k) * 2 + 1] = half[k].imag();
    }
  }
  Shape shape = x.shape();
  shape.back() = K;
  shape.push_back(2);
  return detail::make_result<T>(std::move(shape), std::move(out), {&x},
                                [R, H, W, K](detail::Node<T>& self) {
    // dx = Re(unnormalized inverse DFT of the zero-extended gradient).
    auto fft = detail::unscaled_fft<T>();
    auto& g = self.inputs[0]->grad_buffer();
    std::vector<detail::Cx<T>> a(H * W);
    for (std::size_t r = 0; r < R; ++r) {
      std::fill(a.begin(), a.end(), detail::Cx<T>(0));
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t k = 0; k < K; ++k) {
          const std::size_t i = (r * H * K + h * K + k) * 2;
          a[h * W + k] = {self.grad[i], self.grad[i + 1]};
        }
      detail::dft_columns(fft, a, H, W, true);
      detail::dft_rows(fft, a, H, W, true);
      for (std::size_t k = 0; k < H * W; ++k) g[r * H * W + k] += a[k].real();
    }
  });
}

// (..., H, W/2 + 1, 2) -> (..., H, W) real; inverse of rfft2 on Hermitian input.
template <class T>
Tensor<T> irfft2(const Tensor<T>& z, std::size_t width) {
  if (z.rank() < 3 || z.shape().back() != 2)
    throw ShapeError("irfft2: expected (..., H, K, 2), got " + shape_str(z.shape()));
  const std::size_t H = z.dim(z.rank() - 3), K = z.dim(z.rank() - 2), W = width;
  if (!detail::is_pow2(H) || !detail::is_pow2(W) || W < 2 || K != W / 2 + 1)
    throw ShapeError("irfft2: spectrum " + shape_str(z.shape()) + " does not match width " +
                     std::to_string(W));
  const std::size_t R = z.numel() / (H * K * 2);
  const T scale_h = T(1) / static_cast<T>(H);
  const T scale_w = T(1) / static_cast<T>(W);
  auto fft = detail::unscaled_fft<T>();
  std::vector<T> out(R * H * W);
  std::vector<detail::Cx<T>> half(H * K), row(K);
  std::vector<T> line(W);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t k = 0; k < H * K; ++k)
      half[k] = {z.data()[(r * H * K + k) * 2], z.data()[(r * H * K + k) * 2 + 1]};
    detail::dft_columns(fft, half, H, K, true);
    for (std::size_t h = 0; h < H; ++h) {
      // c2r along the row: DC and Nyquist imaginary parts are dropped.
      for (std::size_t t = 0; t < W; ++t) {
        T acc = half[h * K].real() + ((t % 2) ? -half[h * K + K - 1].real() : half[h * K + K - 1].real());
        out[r * H * W + h * W + t] = acc;
      }
      std::copy_n(half.begin() + static_cast<std::ptrdiff_t>(h * K), K, row.begin());
      row[0] = 0;
      row[K - 1] = 0;
      std::vector<detail::Cx<T>> full(W, detail::Cx<T>(0)), res(W);
      for (std::size_t k = 1; k + 1 < K; ++k) full[k] = row[k];
      fft.inv(res, full);
      for (std::size_t t = 0; t < W; ++t) {
        T& v = out[r * H * W + h * W + t];
        v = (v + T(2) * res[t].real()) * scale_w * scale_h;
      }
    }
  }
  Shape shape(z.shape().begin(), z.shape().end() - 1);
  shape.back() = W;
  return detail::make_result<T>(std::move(shape), std::move(out), {&z},
                                [R, H, W, K, scale_h, scale_w](detail::Node<T>& self) {
    // Row c2r adjoint: dY_k = c_k / W * rfft(dx)_k; column adjoint: fft / H.
    auto fft = detail::unscaled_fft<T>();
    auto& g = self.inputs[0]->grad_buffer();
    std::vector<detail::Cx<T>> a(H * W), half(H * K);
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t k = 0; k < H * W; ++k) a[k] = self.grad[r * H * W + k];
      detail::dft_rows(fft, a, H, W, false);
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t k = 0; k < K; ++k) {
          const T c = (k == 0 || k == K - 1) ? T(1) : T(2);
          half[h * K + k] = a[h * W + k] * (c * scale_w);
        }
      detail::dft_columns(fft, half, H, K, false);
      for (std::size_t k = 0; k < H * K; ++k) {
        g[(r * H * K + k) * 2] += half[k].real() * scale_h;
        g[(r * H * K + k) * 2 + 1] += half[k].imag() * scale_h;
      }
    }
  });
}

}  // namespace shockcast::ad
