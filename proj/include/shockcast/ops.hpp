#pragma once

#include <Eigen/Core>
#include <unsupported/Eigen/SpecialFunctions>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include "shockcast/tensor.hpp"

namespace shockcast::ad {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Eigen's vectorized kernels peel unaligned leading elements onto a scalar
// path, so the rounding of a result depends on where the allocator placed
// its operands. Everything handed to Eigen is staged through aligned scratch.
template <class T>
using AlignedBuffer = std::vector<T, Eigen::aligned_allocator<T>>;

inline bool is_aligned(const void* p) {
  return reinterpret_cast<std::uintptr_t>(p) % EIGEN_MAX_ALIGN_BYTES == 0;
}

template <class T>
const T* staged(const T* p, std::size_t n, AlignedBuffer<T>& buf) {
  if (is_aligned(p)) return p;
  buf.assign(p, p + n);
  return buf.data();
}

// C(m x n) [+]= op(A) * op(B), all row-major. op(A) is m x k, op(B) is k x n.
template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* A,
          const T* B, T* C, bool accumulate) {
  thread_local AlignedBuffer<T> sa, sb, sc;
  A = staged(A, m * k, sa);
  B = staged(B, k * n, sb);
  T* out = C;
  if (!is_aligned(C)) {
    if (accumulate)
      sc.assign(C, C + m * n);
    else
      sc.resize(m * n);
    out = sc.data();
  }
  const auto im = static_cast<Eigen::Index>(m), in = static_cast<Eigen::Index>(n),
             ik = static_cast<Eigen::Index>(k);
  MatMap<T> c(out, im, in);
  auto run = [&](const auto& a, const auto& b) {
    if (accumulate)
      c.noalias() += a * b;
    else
      c.noalias() = a * b;
  };
  if (!trans_a && !trans_b)
    run(ConstMatMap<T>(A, im, ik), ConstMatMap<T>(B, ik, in));
  else if (!trans_a && trans_b)
    run(ConstMatMap<T>(A, im, ik), ConstMatMap<T>(B, in, ik).transpose());
  else if (trans_a && !trans_b)
    run(ConstMatMap<T>(A, ik, im).transpose(), ConstMatMap<T>(B, ik, in));
  else
    run(ConstMatMap<T>(A, ik, im).transpose(), ConstMatMap<T>(B, in, ik).transpose());
  if (out != C) std::copy(out, out + m * n, C);
}

// out[i] (+)= expr(in_0[i], ..., in_K-1[i]) evaluated in aligned, zero-padded
// chunks, so every element takes the same vectorized path.
template <class T, std::size_t K, class Expr>
void elementwise(std::size_t n, std::array<const T*, K> in, T* out, bool accumulate, Expr&& expr) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  constexpr std::size_t chunk = 512;
  thread_local std::array<AlignedBuffer<T>, K + 1> buf;
  for (auto& b : buf) b.resize(chunk);
  for (std::size_t lo = 0; lo < n; lo += chunk) {
    const std::size_t len = std::min(chunk, n - lo);
    for (std::size_t q = 0; q < K; ++q) {
      std::copy(in[q] + lo, in[q] + lo + len, buf[q].begin());
      std::fill(buf[q].begin() + static_cast<std::ptrdiff_t>(len), buf[q].end(), T(0));
    }
    auto arg = [&](std::size_t q) { return Eigen::Map<const Arr, Eigen::Aligned64>(buf[q].data(), chunk); };
    Eigen::Map<Arr, Eigen::Aligned64> r(buf[K].data(), chunk);
    [&]<std::size_t... I>(std::index_sequence<I...>) { r = expr(arg(I)...); }
    (std::make_index_sequence<K>{});
    for (std::size_t i = 0; i < len; ++i) {
      if (accumulate)
        out[lo + i] += buf[K][i];
      else
        out[lo + i] = buf[K][i];
    }
  }
}

template <class T>
void require_rank(const char* op, const Tensor<T>& x, std::size_t r) {
  if (x.rank() != r)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                     shape_str(x.shape()));
}

}  // namespace detail

// (m, k) x (k, n)
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank("matmul", a, 2);
  detail::require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n);
  detail::gemm(false, false, m, n, k, a.data(), b.data(), out.data(), false);
  return detail::make_result<T>({m, n}, std::move(out), {&a, &b},
                                [m, n, k](detail::Node<T>& self) {
    auto& A = self.inputs[0];
    auto& B = self.inputs[1];
    if (A->requires_grad)
      detail::gemm(false, true, m, k, n, self.grad.data(), B->value.data(),
                   A->grad_buffer().data(), true);
    if (B->requires_grad)
      detail::gemm(true, false, k, n, m, A->value.data(), self.grad.data(),
                   B->grad_buffer().data(), true);
  });
}

// x (N, in), weight (out, in), bias (out) -> x W^T + b
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  detail::require_rank("linear", x, 2);
  detail::require_rank("linear", weight, 2);
  if (weight.dim(1) != x.dim(1) || bias.numel() != weight.dim(0))
    throw ShapeError("linear: input " + shape_str(x.shape()) + ", weight " +
                     shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  const std::size_t n = x.dim(0), in = x.dim(1), out_f = weight.dim(0);
  std::vector<T> out(n * out_f);
  for (std::size_t r = 0; r < n; ++r)
    std::copy_n(bias.data(), out_f, out.data() + r * out_f);
  detail::gemm(false, true, n, out_f, in, x.data(), weight.data(), out.data(), true);
  return detail::make_result<T>({n, out_f}, std::move(out), {&x, &weight, &bias},
                                [n, in, out_f](detail::Node<T>& self) {
    auto& X = self.inputs[0];
    auto& W = self.inputs[1];
    auto& B = self.inputs[2];
    if (X->requires_grad)
      detail::gemm(false, false, n, in, out_f, self.grad.data(), W->value.data(),
                   X->grad_buffer().data(), true);
    if (W->requires_grad)
      detail::gemm(true, false, out_f, in, n, self.grad.data(), X->value.data(),
                   W->grad_buffer().data(), true);
    if (B->requires_grad) {
      auto& g = B->grad_buffer();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < out_f; ++o) g[o] += self.grad[r * out_f + o];
    }
  });
}

// ---------------------------------------------------------------------------
// Convolutions

namespace detail {

// Columns for a k x k, stride 1, zero-padded (k/2) convolution of one sample.
// cols has shape (C*k*k, H*W).
template <class T>
void im2col(const T* x, std::size_t C, std::size_t H, std::size_t W, std::size_t k, T* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = H * W;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = cols + ((c * k + ky) * k + kx) * hw;
        const auto dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const auto dx = static_cast<std::ptrdiff_t>(kx) - pad;
        // output columns whose source column lies inside the row
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -dx);
        const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(W) - std::max<std::ptrdiff_t>(0, dx);
        for (std::size_t y = 0; y < H; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
          T* dst = row + y * W;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) {
            std::fill_n(dst, W, T(0));
            continue;
          }
          const T* src = x + (c * H + static_cast<std::size_t>(sy)) * W;
          std::fill_n(dst, lo, T(0));
          std::copy(src + lo + dx, src + hi + dx, dst + lo);
          std::fill(dst + hi, dst + W, T(0));
        }
      }
}

template <class T>
void col2im(const T* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t k, T* x) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = H * W;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = cols + ((c * k + ky) * k + kx) * hw;
        const auto dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const auto dx = static_cast<std::ptrdiff_t>(kx) - pad;
        // output columns whose source column lies inside the row
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -dx);
        const std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(W) - std::max<std::ptrdiff_t>(0, dx);
        for (std::size_t y = 0; y < H; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
          T* dst = x + (c * H + static_cast<std::size_t>(sy)) * W;
          const T* src = row + y * W + lo;
          T* out = dst + lo + dx;
          for (std::ptrdiff_t i = 0; i < hi - lo; ++i) out[i] += src[i];
        }
      }
}

}  // namespace detail

// x (N, Ci, H, W), weight (Co, Ci, k, k) with k in {1, 3}, bias (Co).
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  detail::require_rank("conv2d", x, 4);
  detail::require_rank("conv2d", weight, 4);
  const std::size_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Co = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != Ci || weight.dim(3) != k || (k != 1 && k != 3) || bias.numel() != Co)
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + ", weight " +
                     shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  const std::size_t hw = H * W, kk = Ci * k * k;
  std::vector<T> out(N * Co * hw);
  std::vector<T> cols(k == 1 ? 0 : kk * hw);
  for (std::size_t n = 0; n < N; ++n) {
    const T* xn = x.data() + n * Ci * hw;
    const T* src = xn;
    if (k != 1) {
      detail::im2col(xn, Ci, H, W, k, cols.data());
      src = cols.data();
    }
    T* on = out.data() + n * Co * hw;
    for (std::size_t o = 0; o < Co; ++o) std::fill_n(on + o * hw, hw, bias.data()[o]);
    detail::gemm(false, false, Co, hw, kk, weight.data(), src, on, true);
  }
  return detail::make_result<T>({N, Co, H, W}, std::move(out), {&x, &weight, &bias},
                                [=](detail::Node<T>& self) {
    auto& X = self.inputs[0];
    auto& Wt = self.inputs[1];
    auto& B = self.inputs[2];
    std::vector<T> cols_b(k == 1 ? 0 : kk * hw);
    std::vector<T> dcols(k == 1 || !X->requires_grad ? 0 : kk * hw);
    for (std::size_t n = 0; n < N; ++n) {
      const T* g = self.grad.data() + n * Co * hw;
      const T* xn = X->value.data() + n * Ci * hw;
      if (Wt->requires_grad) {
        const T* src = xn;
        if (k != 1) {
          detail::im2col(xn, Ci, H, W, k, cols_b.data());
          src = cols_b.data();
        }
        detail::gemm(false, true, Co, kk, hw, g, src, Wt->grad_buffer().data(), true);
      }
      if (X->requires_grad) {
        T* dx = X->grad_buffer().data() + n * Ci * hw;
        if (k == 1) {
          detail::gemm(true, false, Ci, hw, Co, Wt->value.data(), g, dx, true);
        } else {
          detail::gemm(true, false, kk, hw, Co, Wt->value.data(), g, dcols.data(), false);
          detail::col2im(dcols.data(), Ci, H, W, k, dx);
        }
      }
      if (B->requires_grad) {
        auto& gb = B->grad_buffer();
        for (std::size_t o = 0; o < Co; ++o) {
          T acc = T(0);
          for (std::size_t p = 0; p < hw; ++p) acc += g[o * hw + p];
          gb[o] += acc;
        }
      }
    }
  });
}

// 2x upsampling by a stride-2, 2x2 transposed convolution.
// x (N, Ci, H, W), weight (Ci, Co, 2, 2), bias (Co) -> (N, Co, 2H, 2W).
template <class T>
Tensor<T> conv_transpose2x2(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  detail::require_rank("conv_transpose2x2", x, 4);
  detail::require_rank("conv_transpose2x2", weight, 4);
  const std::size_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Co = weight.dim(1);
  if (weight.dim(0) != Ci || weight.dim(2) != 2 || weight.dim(3) != 2 || bias.numel() != Co)
    throw ShapeError("conv_transpose2x2: input " + shape_str(x.shape()) + ", weight " +
                     shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  const std::size_t hw = H * W, W2 = 2 * W, q = Co * 4;
  std::vector<T> out(N * Co * 4 * hw);
  std::vector<T> y(q * hw);
  for (std::size_t n = 0; n < N; ++n) {
    // y (Co*4, HW) = weight^T (Co*4, Ci) * x_n (Ci, HW)
    detail::gemm(true, false, q, hw, Ci, weight.data(), x.data() + n * Ci * hw, y.data(), false);
    T* on = out.data() + n * Co * 4 * hw;
    for (std::size_t o = 0; o < Co; ++o)
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b) {
          const T* src = y.data() + (o * 4 + a * 2 + b) * hw;
          for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j)
              on[(o * 2 * H + 2 * i + a) * W2 + 2 * j + b] = src[i * W + j] + bias.data()[o];
        }
  }
  return detail::make_result<T>({N, Co, 2 * H, W2}, std::move(out), {&x, &weight, &bias},
                                [=](detail::Node<T>& self) {
    auto& X = self.inputs[0];
    auto& Wt = self.inputs[1];
    auto& B = self.inputs[2];
    std::vector<T> dy(q * hw);
    for (std::size_t n = 0; n < N; ++n) {
      const T* g = self.grad.data() + n * Co * 4 * hw;
      for (std::size_t o = 0; o < Co; ++o)
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t b = 0; b < 2; ++b) {
            T* dst = dy.data() + (o * 4 + a * 2 + b) * hw;
            for (std::size_t i = 0; i < H; ++i)
              for (std::size_t j = 0; j < W; ++j)
                dst[i * W + j] = g[(o * 2 * H + 2 * i + a) * W2 + 2 * j + b];
          }
      if (X->requires_grad)
        detail::gemm(false, false, Ci, hw, q, Wt->value.data(), dy.data(),
                     X->grad_buffer().data() + n * Ci * hw, true);
      if (Wt->requires_grad)
        detail::gemm(false, true, Ci, q, hw, X->value.data() + n * Ci * hw, dy.data(),
                     Wt->grad_buffer().data(), true);
      if (B->requires_grad) {
        auto& gb = B->grad_buffer();
        for (std::size_t o = 0; o < Co; ++o) {
          T acc = T(0);
          for (std::size_t p = 0; p < 4 * hw; ++p) acc += dy[o * 4 * hw + p];
          gb[o] += acc;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Pooling

namespace detail {

template <class T>
void require_even_spatial(const char* op, const Tensor<T>& x) {
  require_rank(op, x, 4);
  if (x.dim(2) % 2 || x.dim(3) % 2)
    throw ShapeError(std::string(op) + ": spatial size must be even, got " +
                     shape_str(x.shape()));
}

}  // namespace detail

// 2x2, stride 2. Ties pick the first element in row-major order.
template <class T>
Tensor<T> max_pool2d(const Tensor<T>& x) {
  detail::require_even_spatial("max_pool2d", x);
  const std::size_t P = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t h = H / 2, w = W / 2;
  std::vector<T> out(P * h * w);
  std::vector<std::size_t> arg(out.size());
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        std::size_t best = p * H * W + 2 * i * W + 2 * j;
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t b = 0; b < 2; ++b) {
            const std::size_t idx = p * H * W + (2 * i + a) * W + 2 * j + b;
            if (x.values()[idx] > x.values()[best]) best = idx;
          }
        out[(p * h + i) * w + j] = x.values()[best];
        arg[(p * h + i) * w + j] = best;
      }
  return detail::make_result<T>({x.dim(0), x.dim(1), h, w}, std::move(out), {&x},
                                [arg = std::move(arg)](detail::Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t k = 0; k < arg.size(); ++k) g[arg[k]] += self.grad[k];
  });
}

template <class T>
Tensor<T> avg_pool2d(const Tensor<T>& x) {
  detail::require_even_spatial("avg_pool2d", x);
  const std::size_t P = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t h = H / 2, w = W / 2;
  std::vector<T> out(P * h * w);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const T* s = x.data() + p * H * W + 2 * i * W + 2 * j;
        out[(p * h + i) * w + j] = T(0.25) * ((s[0] + s[1]) + (s[W] + s[W + 1]));
      }
  return detail::make_result<T>({x.dim(0), x.dim(1), h, w}, std::move(out), {&x},
                                [P, H, W, h, w](detail::Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const T v = T(0.25) * self.grad[(p * h + i) * w + j];
          T* d = g.data() + p * H * W + 2 * i * W + 2 * j;
          d[0] += v;
          d[1] += v;
          d[W] += v;
          d[W + 1] += v;
        }
  });
}

// (N, C, H, W) -> (N, C)
template <class T>
Tensor<T> global_max_pool(const Tensor<T>& x) {
  detail::require_rank("global_max_pool", x, 4);
  const std::size_t P = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> out(P);
  std::vector<std::size_t> arg(P);
  for (std::size_t p = 0; p < P; ++p) {
    const T* s = x.data() + p * hw;
    const std::size_t k = static_cast<std::size_t>(std::max_element(s, s + hw) - s);
    out[p] = s[k];
    arg[p] = p * hw + k;
  }
  return detail::make_result<T>({x.dim(0), x.dim(1)}, std::move(out), {&x},
                                [arg = std::move(arg)](detail::Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t p = 0; p < arg.size(); ++p) g[arg[p]] += self.grad[p];
  });
}

template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  detail::require_rank("global_avg_pool", x, 4);
  const std::size_t P = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> out(P);
  for (std::size_t p = 0; p < P; ++p) {
    T acc = T(0);
    for (std::size_t k = 0; k < hw; ++k) acc += x.data()[p * hw + k];
    out[p] = acc / static_cast<T>(hw);
  }
  return detail::make_result<T>({x.dim(0), x.dim(1)}, std::move(out), {&x},
                                [P, hw](detail::Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t p = 0; p < P; ++p) {
      const T v = self.grad[p] / static_cast<T>(hw);
      for (std::size_t k = 0; k < hw; ++k) g[p * hw + k] += v;
    }
  });
}

// ---------------------------------------------------------------------------
// Normalization and activations

// Group norm without affine parameters; groups = 1 normalizes over all
// channels and positions of a sample.
template <class T>
Tensor<T> group_norm(const Tensor<T>& x, std::size_t groups, T eps = T(1e-5)) {
  if (x.rank() < 3) throw ShapeError("group_norm: expected (N, C, ...), got " + shape_str(x.shape()));
  const std::size_t N = x.dim(0), C = x.dim(1);
  if (groups == 0 || C % groups)
    throw ShapeError("group_norm: " + std::to_string(groups) + " groups do not divide " +
                     std::to_string(C) + " channels");
  const std::size_t m = x.numel() / (N * groups);
  std::vector<T> out(x.numel());
  std::vector<T> rstd(N * groups);
  for (std::size_t g = 0; g < N * groups; ++g) {
    const T* s = x.data() + g * m;
    T mu = T(0);
    for (std::size_t k = 0; k < m; ++k) mu += s[k];
    mu /= static_cast<T>(m);
    T var = T(0);
    for (std::size_t k = 0; k < m; ++k) var += (s[k] - mu) * (s[k] - mu);
    var /= static_cast<T>(m);
    const T r = T(1) / std::sqrt(var + eps);
    rstd[g] = r;
    for (std::size_t k = 0; k < m; ++k) out[g * m + k] = (s[k] - mu) * r;
  }
  std::vector<T> xhat = out;
  return detail::make_result<T>(x.shape(), std::move(out), {&x},
                                [m, rstd = std::move(rstd), xhat = std::move(xhat)](
                                    detail::Node<T>& self) {
    auto& gx = self.inputs[0]->grad_buffer();
    for (std::size_t g = 0; g < rstd.size(); ++g) {
      const T* dy = self.grad.data() + g * m;
      const T* xh = xhat.data() + g * m;
      T mdy = T(0), mdyx = T(0);
      for (std::size_t k = 0; k < m; ++k) {
        mdy += dy[k];
        mdyx += dy[k] * xh[k];
      }
      mdy /= static_cast<T>(m);
      mdyx /= static_cast<T>(m);
      for (std::size_t k = 0; k < m; ++k) gx[g * m + k] += rstd[g] * (dy[k] - mdy - xh[k] * mdyx);
    }
  });
}

// Exact GELU: x * Phi(x).
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  std::vector<T> out(x.numel());
  detail::elementwise<T, 1>(x.numel(), {x.data()}, out.data(), false, [&](const auto& v) {
    return T(0.5) * v * (T(1) + (v * inv_sqrt2).erf());
  });
  return detail::make_result<T>(x.shape(), std::move(out), {&x}, [inv_sqrt2](detail::Node<T>& self) {
    const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
    auto& X = self.inputs[0];
    detail::elementwise<T, 2>(
        X->value.size(), {X->value.data(), self.grad.data()}, X->grad_buffer().data(), true,
        [&](const auto& v, const auto& g) {
          return g * (T(0.5) * (T(1) + (v * inv_sqrt2).erf()) +
                      v * inv_sqrt_2pi * (T(-0.5) * v.square()).exp());
        });
  });
}

// Softmax over the last axis.
template <class T>
Tensor<T> softmax(const Tensor<T>& x) {
  if (x.rank() < 1) throw ShapeError("softmax: scalar input");
  const std::size_t K = x.shape().back();
  const std::size_t rows = x.numel() / K;
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* s = x.data() + r * K;
    const T mx = *std::max_element(s, s + K);
    T z = T(0);
    for (std::size_t k = 0; k < K; ++k) z += (out[r * K + k] = std::exp(s[k] - mx));
    for (std::size_t k = 0; k < K; ++k) out[r * K + k] /= z;
  }
  std::vector<T> y = out;
  return detail::make_result<T>(x.shape(), std::move(out), {&x},
                                [K, rows, y = std::move(y)](detail::Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = T(0);
      for (std::size_t k = 0; k < K; ++k) dot += self.grad[r * K + k] * y[r * K + k];
      for (std::size_t k = 0; k < K; ++k)
        g[r * K + k] += y[r * K + k] * (self.grad[r * K + k] - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// Losses (scalar outputs)

template <class T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  const Tensor<T> d = sub(pred, target);
  return mean(mul(d, d));
}

template <class T>
Tensor<T> mae_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::require_same_shape("mae_loss", pred, target);
  const std::size_t n = pred.numel();
  T acc = T(0);
  for (std::size_t k = 0; k < n; ++k) acc += std::abs(pred.values()[k] - target.values()[k]);
  return detail::make_result<T>({1}, {acc / static_cast<T>(n)}, {&pred, &target},
                                [n](detail::Node<T>& self) {
    auto& P = self.inputs[0];
    auto& Q = self.inputs[1];
    const T s = self.grad[0] / static_cast<T>(n);
    for (std::size_t k = 0; k < n; ++k) {
      const T d = P->value[k] - Q->value[k];
      const T sg = d > T(0) ? s : (d < T(0) ? -s : T(0));
      if (P->requires_grad) P->grad_buffer()[k] += sg;
      if (Q->requires_grad) Q->grad_buffer()[k] -= sg;
    }
  });
}

// Mean over (sample, channel) of ||pred - target||_2 / max(||target||_2, eps),
// norms taken over the remaining axes.
template <class T>
Tensor<T> relative_l2_loss(const Tensor<T>& pred, const Tensor<T>& target, T eps) {
  detail::require_same_shape("relative_l2_loss", pred, target);
  if (pred.rank() < 2) throw ShapeError("relative_l2_loss: expected (N, C, ...)");
  const std::size_t P = pred.dim(0) * pred.dim(1);
  const std::size_t m = pred.numel() / P;
  std::vector<T> num(P), den(P), tnorm(P);
  T acc = T(0);
  for (std::size_t p = 0; p < P; ++p) {
    T e = T(0), t = T(0);
    for (std::size_t k = 0; k < m; ++k) {
      const T a = pred.values()[p * m + k], b = target.values()[p * m + k];
      e += (a - b) * (a - b);
      t += b * b;
    }
    num[p] = std::sqrt(e);
    tnorm[p] = std::sqrt(t);
    den[p] = std::max(tnorm[p], eps);
    acc += num[p] / den[p];
  }
  return detail::make_result<T>(
      {1}, {acc / static_cast<T>(P)}, {&pred, &target},
      [P, m, eps, num = std::move(num), den = std::move(den),
       tnorm = std::move(tnorm)](detail::Node<T>& self) {
        auto& A = self.inputs[0];
        auto& B = self.inputs[1];
        const T s = self.grad[0] / static_cast<T>(P);
        for (std::size_t p = 0; p < P; ++p) {
          const T ce = num[p] > T(0) ? s / (num[p] * den[p]) : T(0);
          const bool clamped = !(tnorm[p] > eps);
          const T ct = clamped ? T(0) : s * num[p] / (den[p] * den[p] * tnorm[p]);
          for (std::size_t k = 0; k < m; ++k) {
            const std::size_t i = p * m + k;
            const T d = A->value[i] - B->value[i];
            if (A->requires_grad) A->grad_buffer()[i] += ce * d;
            if (B->requires_grad) B->grad_buffer()[i] += -ce * d - ct * B->value[i];
          }
        }
      });
}

}  // namespace shockcast::ad
