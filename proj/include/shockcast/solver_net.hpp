#pragma once

// Timestep-conditioned one-step surrogate: a small U-Net or a factorized
// Fourier network mapping a z-scored state and a normalized timestep to the
// z-scored next state.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "shockcast/conditioning.hpp"
#include "shockcast/layers.hpp"

namespace shockcast {

enum class Trunk { unet_lite, ffno_lite };
enum class Conditioning { cond_layer_norm, spatial_spectral, euler_residual, moe };

NLOHMANN_JSON_SERIALIZE_ENUM(Trunk, {{Trunk::unet_lite, "unet_lite"},
                                     {Trunk::ffno_lite, "ffno_lite"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Conditioning,
                             {{Conditioning::cond_layer_norm, "cond_layer_norm"},
                              {Conditioning::spatial_spectral, "spatial_spectral"},
                              {Conditioning::euler_residual, "euler_residual"},
                              {Conditioning::moe, "moe"}})

struct SolverNetConfig {
  Trunk trunk = Trunk::unet_lite;
  Conditioning conditioning = Conditioning::cond_layer_norm;
  std::size_t fields = 4;
  std::size_t width = 32;
  std::size_t levels = 2;  // U-Net down/up levels
  std::size_t layers = 4;  // Fourier layers
  std::size_t modes = 8;   // retained modes per dimension
  std::size_t experts = 4;
  bool expert_width_scaling = true;  // expert hidden width divided by sqrt(K)
  std::size_t embed_pairs = 32;
  std::size_t embed_dim = 64;
  std::size_t gate_hidden = 64;
  std::size_t norm_groups = 8;

  void validate() const {
    if (fields == 0 || width < 2) throw ConfigError("solver net: bad fields/width");
    if (trunk == Trunk::unet_lite && conditioning == Conditioning::spatial_spectral)
      throw ConfigError("solver net: spatial_spectral conditioning needs a spectral trunk");
    if (trunk == Trunk::ffno_lite && conditioning == Conditioning::cond_layer_norm)
      throw ConfigError("solver net: the Fourier trunk has no normalization sites");
    if (conditioning == Conditioning::moe && experts == 0)
      throw ConfigError("solver net: moe needs at least one expert");
    if (trunk == Trunk::unet_lite && levels == 0) throw ConfigError("solver net: levels >= 1");
    if (trunk == Trunk::ffno_lite && (layers == 0 || modes == 0))
      throw ConfigError("solver net: layers and modes must be positive");
    if (embed_pairs == 0 || embed_dim == 0 || gate_hidden == 0 || norm_groups == 0)
      throw ConfigError("solver net: embedding and gate sizes must be positive");
  }

  std::size_t expert_count() const { return conditioning == Conditioning::moe ? experts : 1; }

  // Hidden width inside one residual branch.
  std::size_t branch_width(std::size_t channels) const {
    if (conditioning != Conditioning::moe || !expert_width_scaling) return channels;
    const auto w = static_cast<std::size_t>(
        std::lround(static_cast<double>(channels) / std::sqrt(static_cast<double>(experts))));
    return std::max<std::size_t>(w, 2);
  }

  std::string label() const {
    return nlohmann::json(trunk).get<std::string>() + "-" +
           nlohmann::json(conditioning).get<std::string>();
  }
};

inline void to_json(nlohmann::json& j, const SolverNetConfig& c) {
  j = {{"trunk", c.trunk},
       {"conditioning", c.conditioning},
       {"fields", c.fields},
       {"width", c.width},
       {"levels", c.levels},
       {"layers", c.layers},
       {"modes", c.modes},
       {"experts", c.experts},
       {"expert_width_scaling", c.expert_width_scaling},
       {"embed_pairs", c.embed_pairs},
       {"embed_dim", c.embed_dim},
       {"gate_hidden", c.gate_hidden},
       {"norm_groups", c.norm_groups}};
}

inline void from_json(const nlohmann::json& j, SolverNetConfig& c) {
  SolverNetConfig d;
  c.trunk = j.value("trunk", d.trunk);
  c.conditioning = j.value("conditioning", d.conditioning);
  c.fields = j.value("fields", d.fields);
  c.width = j.value("width", d.width);
  c.levels = j.value("levels", d.levels);
  c.layers = j.value("layers", d.layers);
  c.modes = j.value("modes", d.modes);
  c.experts = j.value("experts", d.experts);
  c.expert_width_scaling = j.value("expert_width_scaling", d.expert_width_scaling);
  c.embed_pairs = j.value("embed_pairs", d.embed_pairs);
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.gate_hidden = j.value("gate_hidden", d.gate_hidden);
  c.norm_groups = j.value("norm_groups", d.norm_groups);
}

namespace nn {

template <class T>
struct StepContext {
  Tensor<T> dt;         // (N, 1) normalized timestep
  Tensor<T> embedding;  // (N, E); undefined when no site uses it
};

template <class T>
struct NormSite {
  std::size_t groups = 1;
  std::optional<Linear<T>> film;  // e -> [scale | shift]

  Tensor<T> operator()(const Tensor<T>& z, const StepContext<T>& ctx) const {
    if (!film) return ad::group_norm(z, groups);
    const std::size_t C = z.dim(1);
    Tensor<T> ab = (*film)(ctx.embedding);
    return ad::cond_group_norm(z, ad::slice_channels(ab, 0, C), ad::slice_channels(ab, C, C),
                               groups);
  }
};

template <class T>
struct Gate {
  Linear<T> fc1, fc2;
  Tensor<T> operator()(const Tensor<T>& e) const { return ad::softmax(fc2(ad::gelu(fc1(e)))); }
};

// Residual connection around one or more branch experts.
template <class T, class Branch>
struct ResidualSite {
  std::vector<Branch> branches;
  std::vector<Linear<T>> coef;  // a_k = W_k dt + c_k; empty for a plain residual
  std::optional<Gate<T>> gate;

  Tensor<T> operator()(const Tensor<T>& z, const StepContext<T>& ctx) const {
    if (coef.empty()) return ad::add(z, branches.front()(z, ctx));
    if (!gate) return ad::euler_residual(z, branches.front()(z, ctx), coef.front()(ctx.dt));
    std::vector<Tensor<T>> f, a;
    for (std::size_t k = 0; k < branches.size(); ++k) {
      f.push_back(branches[k](z, ctx));
      a.push_back(coef[k](ctx.dt));
    }
    return ad::moe_residual(z, f, a, (*gate)(ctx.embedding));
  }
};

// Pre-activation conv branch: norm, gelu, conv3x3, norm, gelu, conv3x3.
template <class T>
struct ConvBranch {
  NormSite<T> norm1, norm2;
  Conv<T> conv1, conv2;

  Tensor<T> operator()(const Tensor<T>& z, const StepContext<T>& ctx) const {
    Tensor<T> h = conv1(ad::gelu(norm1(z, ctx)));
    return conv2(ad::gelu(norm2(h, ctx)));
  }
};

// Factorized spectral convolution along x and y followed by a pointwise MLP.
template <class T>
struct SpectralBranch {
  std::size_t modes = 0;
  Tensor<T> weight_x, weight_y;       // (C, C, M, 2)
  std::optional<Linear<T>> xi_x, xi_y;  // e -> M complex multipliers
  Conv<T> mlp1, mlp2;

  Tensor<T> along_last(const Tensor<T>& z, const Tensor<T>& weight,
                       const std::optional<Linear<T>>& xi, const StepContext<T>& ctx) const {
    const std::size_t L = z.shape().back();
    Tensor<T> zh = ad::rfft_last(z, modes);
    if (xi) zh = ad::complex_mul(zh, ad::reshape((*xi)(ctx.embedding), {z.dim(0), modes, 2}));
    return ad::irfft_last(ad::spectral_mix(zh, weight), L);
  }

  Tensor<T> operator()(const Tensor<T>& z, const StepContext<T>& ctx) const {
    Tensor<T> sx = along_last(z, weight_x, xi_x, ctx);
    Tensor<T> sy = ad::swap_last2(along_last(ad::swap_last2(z), weight_y, xi_y, ctx));
    return mlp2(ad::gelu(mlp1(ad::add(sx, sy))));
  }
};

}  // namespace nn

template <class T>
class SolverNet {
 public:
  using Tensor = ad::Tensor<T>;

  SolverNet(const SolverNetConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
    cfg_.validate();
    nn::Builder<T> b(params_, rng_);
    if (uses_embedding())
      embed_ = nn::TimeEmbedding<T>::make(b, "embed", cfg_.embed_pairs, cfg_.embed_dim);
    if (cfg_.trunk == Trunk::unet_lite)
      build_unet(b);
    else
      build_ffno(b);
  }

  SolverNet(const SolverNet&) = delete;
  SolverNet& operator=(const SolverNet&) = delete;
  SolverNet(SolverNet&&) = default;

  const SolverNetConfig& config() const { return cfg_; }
  ad::ParamSet<T>& params() { return params_; }
  const ad::ParamSet<T>& params() const { return params_; }

  // x (N, fields, H, W) z-scored; dt (N, 1) normalized timestep.
  Tensor forward(const Tensor& x, const Tensor& dt) const {
    check_input(x, dt);
    nn::StepContext<T> ctx{dt, {}};
    if (uses_embedding()) ctx.embedding = (*embed_)(dt);
    return cfg_.trunk == Trunk::unet_lite ? forward_unet(x, ctx) : forward_ffno(x, ctx);
  }

  Tensor forward(const Tensor& x, const std::vector<T>& dt) const {
    return forward(x, Tensor({dt.size(), 1}, dt));
  }

 private:
  using ConvSite = nn::ResidualSite<T, nn::ConvBranch<T>>;
  using SpecSite = nn::ResidualSite<T, nn::SpectralBranch<T>>;

  bool uses_embedding() const {
    return cfg_.conditioning == Conditioning::cond_layer_norm ||
           cfg_.conditioning == Conditioning::spatial_spectral ||
           cfg_.conditioning == Conditioning::moe;
  }

  void check_input(const Tensor& x, const Tensor& dt) const {
    if (x.rank() != 4 || x.dim(1) != cfg_.fields)
      throw ShapeError("solver net: expected (N, " + std::to_string(cfg_.fields) +
                       ", H, W), got " + ad::shape_str(x.shape()));
    if (dt.rank() != 2 || dt.dim(0) != x.dim(0) || dt.dim(1) != 1)
      throw ShapeError("solver net: timestep shape " + ad::shape_str(dt.shape()));
    const std::size_t H = x.dim(2), W = x.dim(3);
    if (cfg_.trunk == Trunk::unet_lite) {
      const std::size_t f = std::size_t{1} << cfg_.levels;
      if (H % f || W % f)
        throw ShapeError("solver net: spatial size must be divisible by " + std::to_string(f));
    } else if (cfg_.modes > H / 2 + 1 || cfg_.modes > W / 2 + 1) {
      throw ShapeError("solver net: " + std::to_string(cfg_.modes) + " modes exceed grid " +
                       std::to_string(H) + "x" + std::to_string(W));
    }
  }

  nn::NormSite<T> norm_site(nn::Builder<T>& b, const std::string& name, std::size_t c) {
    nn::NormSite<T> s{nn::group_count(c, cfg_.norm_groups), std::nullopt};
    if (cfg_.conditioning == Conditioning::cond_layer_norm)
      s.film = b.linear(name + ".film", cfg_.embed_dim, 2 * c, nn::Init::small);
    return s;
  }

  // Coefficient heads and gate shared by both trunks.
  template <class Site>
  void residual_heads(nn::Builder<T>& b, const std::string& name, std::size_t c, Site& site) {
    if (cfg_.conditioning != Conditioning::euler_residual && cfg_.conditioning != Conditioning::moe)
      return;
    for (std::size_t k = 0; k < cfg_.expert_count(); ++k) {
      auto lin = b.linear(name + ".e" + std::to_string(k) + ".a", 1, c, nn::Init::fan_in, T(1));
      for (auto& w : lin.weight.values()) w *= T(0.1);
      site.coef.push_back(lin);
    }
    if (cfg_.conditioning == Conditioning::moe)
      site.gate = nn::Gate<T>{b.linear(name + ".gate.fc1", cfg_.embed_dim, cfg_.gate_hidden),
                              b.linear(name + ".gate.fc2", cfg_.gate_hidden, cfg_.expert_count())};
  }

  ConvSite conv_site(nn::Builder<T>& b, const std::string& name, std::size_t c) {
    ConvSite site;
    const std::size_t h = cfg_.branch_width(c);
    for (std::size_t k = 0; k < cfg_.expert_count(); ++k) {
      const std::string p = name + ".e" + std::to_string(k);
      site.branches.push_back({norm_site(b, p + ".norm1", c), norm_site(b, p + ".norm2", h),
                               b.conv(p + ".conv1", c, h, 3), b.conv(p + ".conv2", h, c, 3)});
    }
    residual_heads(b, name, c, site);
    return site;
  }

  SpecSite spec_site(nn::Builder<T>& b, const std::string& name, std::size_t c) {
    SpecSite site;
    const std::size_t M = cfg_.modes;
    const std::size_t hidden = cfg_.branch_width(2 * c);
    const double scale = std::sqrt(1.0 / (2.0 * static_cast<double>(c)));
    for (std::size_t k = 0; k < cfg_.expert_count(); ++k) {
      const std::string p = name + ".e" + std::to_string(k);
      nn::SpectralBranch<T> br;
      br.modes = M;
      br.weight_x = b.tensor(p + ".spec_x", {c, c, M, 2},
                             ad::normal_values<T>(b.rng(), c * c * M * 2, scale));
      br.weight_y = b.tensor(p + ".spec_y", {c, c, M, 2},
                             ad::normal_values<T>(b.rng(), c * c * M * 2, scale));
      if (cfg_.conditioning == Conditioning::spatial_spectral) {
        br.xi_x = xi_head(b, p + ".xi_x");
        br.xi_y = xi_head(b, p + ".xi_y");
      }
      br.mlp1 = b.conv(p + ".mlp1", c, hidden, 1);
      br.mlp2 = b.conv(p + ".mlp2", hidden, c, 1);
      site.branches.push_back(std::move(br));
    }
    residual_heads(b, name, c, site);
    return site;
  }

  // Starts at xi = 1 + 0i for every mode.
  nn::Linear<T> xi_head(nn::Builder<T>& b, const std::string& name) {
    auto lin = b.linear(name, cfg_.embed_dim, 2 * cfg_.modes, nn::Init::small);
    auto& bias = lin.bias.values();
    for (std::size_t m = 0; m < cfg_.modes; ++m) bias[2 * m] = T(1);
    return lin;
  }

  std::size_t level_width(std::size_t l) const { return cfg_.width << l; }

  void build_unet(nn::Builder<T>& b) {
    const std::size_t L = cfg_.levels;
    lift_ = b.conv("lift", cfg_.fields, level_width(0), 3);
    for (std::size_t l = 0; l < L; ++l) {
      const std::string s = std::to_string(l);
      enc_.push_back(conv_site(b, "enc" + s, level_width(l)));
      down_.push_back(b.conv("down" + s, level_width(l), level_width(l + 1), 3));
    }
    mid_ = conv_site(b, "mid", level_width(L));
    for (std::size_t l = L; l-- > 0;) {
      const std::string s = std::to_string(l);
      up_.push_back(b.conv_t("up" + s, level_width(l + 1), level_width(l)));
      merge_.push_back(b.conv("merge" + s, 2 * level_width(l), level_width(l), 1));
      dec_.push_back(conv_site(b, "dec" + s, level_width(l)));
    }
    out_norm_ = norm_site(b, "out_norm", level_width(0));
    head_ = b.conv("head", level_width(0) + cfg_.fields, cfg_.fields, 1, nn::Init::zero);
  }

  Tensor forward_unet(const Tensor& x, const nn::StepContext<T>& ctx) const {
    const std::size_t L = cfg_.levels;
    Tensor h = lift_(x);
    std::vector<Tensor> skips;
    for (std::size_t l = 0; l < L; ++l) {
      h = enc_[l](h, ctx);
      skips.push_back(h);
      h = down_[l](ad::max_pool2d(h));
    }
    h = (*mid_)(h, ctx);
    for (std::size_t i = 0; i < L; ++i) {
      h = up_[i](h);
      h = merge_[i](ad::concat(std::vector<Tensor>{h, skips[L - 1 - i]}));
      h = dec_[i](h, ctx);
    }
    h = ad::gelu(out_norm_(h, ctx));
    return head_(ad::concat(std::vector<Tensor>{h, x}));
  }

  void build_ffno(nn::Builder<T>& b) {
    const std::size_t C = cfg_.width;
    lift_ = b.conv("lift", cfg_.fields + 2, C, 1);
    for (std::size_t l = 0; l < cfg_.layers; ++l)
      spec_.push_back(spec_site(b, "layer" + std::to_string(l), C));
    proj_ = b.conv("proj", C + cfg_.fields, 2 * C, 1);
    head_ = b.conv("head", 2 * C, cfg_.fields, 1, nn::Init::zero);
  }

  // Cell-centre coordinates in [0, 1], appended to the lift input.
  static Tensor coordinates(std::size_t N, std::size_t H, std::size_t W) {
    std::vector<T> v(N * 2 * H * W);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          v[((n * 2 + 0) * H + i) * W + j] = static_cast<T>((j + 0.5) / static_cast<double>(W));
          v[((n * 2 + 1) * H + i) * W + j] = static_cast<T>((i + 0.5) / static_cast<double>(H));
        }
    return Tensor({N, 2, H, W}, std::move(v));
  }

  Tensor forward_ffno(const Tensor& x, const nn::StepContext<T>& ctx) const {
    Tensor h = lift_(ad::concat(std::vector<Tensor>{x, coordinates(x.dim(0), x.dim(2), x.dim(3))}));
    for (const auto& site : spec_) h = site(h, ctx);
    return head_(ad::gelu(proj_(ad::concat(std::vector<Tensor>{h, x}))));
  }

  SolverNetConfig cfg_;
  std::mt19937_64 rng_;
  ad::ParamSet<T> params_;
  std::optional<nn::TimeEmbedding<T>> embed_;
  nn::Conv<T> lift_, head_, proj_;
  std::vector<ConvSite> enc_, dec_;
  std::optional<ConvSite> mid_;
  std::vector<nn::Conv<T>> down_, merge_;
  std::vector<nn::ConvT<T>> up_;
  nn::NormSite<T> out_norm_;
  std::vector<SpecSite> spec_;
};

}  // namespace shockcast
