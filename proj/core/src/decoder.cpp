// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include "muster/decoder.hpp"

#include <memory>

#include "muster/attention.hpp"
#include "muster/error.hpp"
#include "muster/kernels.hpp"
#include "muster/rng.hpp"

namespace muster {

namespace {

constexpr std::int64_t kDefaultHeads[4] = {32, 16, 8, 4};

Var get(const ParamVars& p, const std::string& name) {
  const auto it = p.find(name);
  if (it == p.end()) throw Error(ErrorCode::kValidation, "missing parameter '" + name + "'");
  return it->second;
}

std::int64_t pow2(std::int64_t e) { return std::int64_t{1} << e; }

}  // namespace

const char* to_string(Variant v) noexcept {
  return v == Variant::kMuster ? "muster" : "light";
}

const char* to_string(Upsampler u) noexcept {
  switch (u) {
    case Upsampler::kFuse: return "fuse";
    case Upsampler::kSelfConcat: return "selfconcat";
    case Upsampler::kBilinear: return "bilinear";
    case Upsampler::kTransConv: return "transconv";
  }
  return "unknown";
}

Variant parse_variant(const std::string& s) {
  if (s == "muster") return Variant::kMuster;
  if (s == "light") return Variant::kLight;
  throw Error(ErrorCode::kConfig, "variant must be 'muster' or 'light', got '" + s + "'");
}

Upsampler parse_upsampler(const std::string& s) {
  for (auto u : {Upsampler::kFuse, Upsampler::kSelfConcat, Upsampler::kBilinear,
                 Upsampler::kTransConv}) {
    if (s == to_string(u)) return u;
  }
  throw Error(ErrorCode::kConfig,
              "upsampler must be fuse, selfconcat, bilinear or transconv, got '" + s + "'");
}

std::vector<StageSpec> DecoderConfig::resolved_stages() const {
  if (!stages.empty()) return stages;
  std::vector<StageSpec> out;
  for (std::int64_t i = 0; i < 4; ++i) out.push_back({pow2(3 - i) * base_channels, kDefaultHeads[i]});
  return out;
}

std::int64_t DecoderConfig::stage_count() const {
  return stages.empty() ? 4 : static_cast<std::int64_t>(stages.size());
}

std::int64_t DecoderConfig::stage_output_channels(std::int64_t i) const {
  const auto s = resolved_stages();
  const auto n = static_cast<std::int64_t>(s.size());
  if (i < 0 || i >= n) throw Error(ErrorCode::kConfig, "stage index out of range");
  return i + 1 < n ? s[static_cast<std::size_t>(i + 1)].channels : 2 * s.back().channels;
}

std::int64_t DecoderConfig::image_multiple() const { return 4 * pow2(stage_count() - 1); }

void DecoderConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfig, msg); };
  if (base_channels < 1) fail("base_channels must be positive");
  if (window < 2 || window % 2 != 0) fail("window size must be even and >= 2");
  if (variant == Variant::kLight && window % 4 != 0) {
    fail("light variant needs window % 4 == 0, got " + std::to_string(window));
  }
  if (num_classes < 1) fail("num_classes must be positive");
  const auto s = resolved_stages();
  if (s.empty() || s.size() > 6) fail("stage count must lie in [1, 6]");
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].channels < 1) fail("stage " + std::to_string(i) + " channels must be positive");
    if (s[i].heads < 1 || s[i].channels % s[i].heads != 0) {
      fail("stage " + std::to_string(i) + ": heads " + std::to_string(s[i].heads) +
           " do not divide channels " + std::to_string(s[i].channels));
    }
  }
}

void validate_pyramid(const PyramidFeatures& feats, const DecoderConfig& cfg) {
  const auto s = cfg.resolved_stages();
  const auto n = static_cast<std::int64_t>(s.size());
  if (static_cast<std::int64_t>(feats.levels.size()) != n) {
    throw Error(ErrorCode::kValidation, "pyramid has " + std::to_string(feats.levels.size()) +
                                            " levels, config expects " + std::to_string(n));
  }
  const Tensor& finest = feats.levels.back();
  if (finest.rank() != 3) throw Error(ErrorCode::kValidation, "pyramid levels must be [H, W, C]");
  const std::int64_t hf = finest.dim(0), wf = finest.dim(1), step = pow2(n - 1);
  if (hf % step != 0 || wf % step != 0) {
    throw Error(ErrorCode::kValidation, "finest level " + shape_string(finest.dims()) +
                                            " must be a multiple of " + std::to_string(step));
  }
  for (std::int64_t i = 0; i < n; ++i) {
    const Shape want{hf / pow2(n - 1 - i), wf / pow2(n - 1 - i), s[static_cast<std::size_t>(i)].channels};
    const Tensor& level = feats.levels[static_cast<std::size_t>(i)];
    if (level.dims() != want) {
      throw Error(ErrorCode::kValidation, "pyramid level " + std::to_string(i) + " is " +
                                              shape_string(level.dims()) + ", expected " +
                                              shape_string(want));
    }
  }
}

PyramidFeatures synth_backbone(std::int64_t h_img, std::int64_t w_img,
                               const std::vector<std::int64_t>& level_channels,
                               std::uint64_t seed) {
  const auto n = static_cast<std::int64_t>(level_channels.size());
  if (n < 1) throw Error(ErrorCode::kConfig, "pyramid needs at least one level");
  const std::int64_t multiple = 4 * pow2(n - 1);
  if (h_img < multiple || w_img < multiple || h_img % multiple != 0 || w_img % multiple != 0) {
    throw Error(ErrorCode::kConfig, "image " + std::to_string(h_img) + "x" +
                                        std::to_string(w_img) + " must be a positive multiple of " +
                                        std::to_string(multiple));
  }
  PyramidFeatures out;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t down = 4 * pow2(n - 1 - i);
    Rng rng = Rng::derive(seed, "F_" + std::to_string(i));
    out.levels.push_back(
        rng.normal_tensor({h_img / down, w_img / down, level_channels[static_cast<std::size_t>(i)]}, 1.0)
            .cast<float>());
  }
  return out;
}

PyramidFeatures synth_backbone(std::int64_t h_img, std::int64_t w_img, std::int64_t channels,
                               std::uint64_t seed) {
  if (channels < 1) throw Error(ErrorCode::kConfig, "base channels must be positive");
  return synth_backbone(h_img, w_img, {8 * channels, 4 * channels, 2 * channels, channels}, seed);
}

PyramidFeatures synth_backbone(const DecoderConfig& cfg, std::int64_t h_img, std::int64_t w_img) {
  cfg.validate();
  std::vector<std::int64_t> channels;
  for (const auto& s : cfg.resolved_stages()) channels.push_back(s.channels);
  return synth_backbone(h_img, w_img, channels, cfg.seed);
}

std::string stage_prefix(std::int64_t stage) { return "stage" + std::to_string(stage) + "."; }

std::vector<ParamSpec> block_param_specs(const BlockSpec& spec, const std::string& prefix) {
  const std::int64_t c = spec.channels, h = spec.heads, M = spec.window;
  std::vector<ParamSpec> out;
  auto norm = [&](const std::string& name) {
    out.push_back({prefix + name + ".gamma", {c}, ParamInit::kOnes});
    out.push_back({prefix + name + ".beta", {c}, ParamInit::kZeros});
  };
  auto attn = [&](const std::string& name) {
    const std::string a = prefix + name + ".";
    out.push_back({a + "wq", {c, c}});
    if (spec.variant == Variant::kMuster) {
      out.push_back({a + "wk", {c, c}});
      out.push_back({a + "wv", {c, c}});
      out.push_back({a + "wo", {c, c}});
      out.push_back({a + "rel_pos", {(2 * M - 1) * (2 * M - 1), h}});
    } else {
      const std::int64_t tq = M * M, tk = (M / 2) * (M / 2);
      out.push_back({a + "dw_weight", {2, 2, c}});
      out.push_back({a + "dw_bias", {c}, ParamInit::kZeros});
      out.push_back({a + "inner_bias", {h, tq, tk}});
      out.push_back({a + "outer_bias", {h, tq, tk}});
    }
  };
  auto mlp = [&](const std::string& name) {
    const std::string a = prefix + name + ".";
    out.push_back({a + "fc1.w", {c, kMlpRatio * c}});
    out.push_back({a + "fc1.b", {kMlpRatio * c}, ParamInit::kZeros});
    out.push_back({a + "fc2.w", {kMlpRatio * c, c}});
    out.push_back({a + "fc2.b", {c}, ParamInit::kZeros});
  };
  norm("norm1");
  norm("norm1_kv");
  attn("attn1");
  norm("norm2");
  mlp("mlp1");
  norm("norm3");
  norm("norm3_kv");
  attn("attn2");
  norm("norm4");
  mlp("mlp2");
  return out;
}

std::vector<ParamSpec> param_specs(const DecoderConfig& cfg) {
  cfg.validate();
  const auto s = cfg.resolved_stages();
  const auto n = static_cast<std::int64_t>(s.size());
  std::vector<ParamSpec> out;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::string prefix = stage_prefix(i);
    const std::int64_t c = s[static_cast<std::size_t>(i)].channels;
    for (auto spec : block_param_specs({c, s[static_cast<std::size_t>(i)].heads, cfg.window,
                                        cfg.variant},
                                       prefix)) {
      spec.stage = i;
      out.push_back(std::move(spec));
    }
    const std::int64_t next = cfg.stage_output_channels(i);
    Shape w;
    if (i + 1 == n) {
      w = {2 * c, next};
    } else {
      switch (cfg.upsampler) {
        case Upsampler::kFuse:
        case Upsampler::kSelfConcat: w = {2 * c, 4 * next}; break;
        case Upsampler::kBilinear: w = {c, next}; break;
        case Upsampler::kTransConv: w = {2, 2, c, next}; break;
      }
    }
    const std::int64_t bias = w.back();
    out.push_back({prefix + "fuse.w", std::move(w), ParamInit::kNormal, i});
    out.push_back({prefix + "fuse.b", {bias}, ParamInit::kZeros, i});
  }
  const std::int64_t last = cfg.stage_output_channels(n - 1);
  out.push_back({"head.w", {last, cfg.num_classes}, ParamInit::kNormal, n});
  out.push_back({"head.b", {cfg.num_classes}, ParamInit::kZeros, n});
  return out;
}

ParamMap init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed) {
  ParamMap out;
  for (const auto& spec : specs) {
    Tensor64 value;
    switch (spec.init) {
      case ParamInit::kNormal:
        value = Rng::derive(seed, spec.name).normal_tensor(spec.shape, kInitStddev);
        break;
      case ParamInit::kZeros: value = Tensor64::zeros(spec.shape); break;
      case ParamInit::kOnes: value = Tensor64::full(spec.shape, 1.0); break;
    }
    if (!out.emplace(spec.name, std::move(value)).second) {
      throw Error(ErrorCode::kConfig, "duplicate parameter '" + spec.name + "'");
    }
  }
  return out;
}

ParamMap init_params(const DecoderConfig& cfg) { return init_params(param_specs(cfg), cfg.seed); }

void validate_params(const ParamMap& params, const std::vector<ParamSpec>& specs) {
  for (const auto& spec : specs) {
    const auto it = params.find(spec.name);
    if (it == params.end()) {
      throw Error(ErrorCode::kValidation, "missing parameter '" + spec.name + "'");
    }
    if (it->second.dims() != spec.shape) {
      throw Error(ErrorCode::kValidation, "parameter '" + spec.name + "' is " +
                                              shape_string(it->second.dims()) + ", expected " +
                                              shape_string(spec.shape));
    }
  }
  if (params.size() != specs.size()) {
    throw Error(ErrorCode::kValidation, "parameter map has " + std::to_string(params.size()) +
                                            " entries, expected " + std::to_string(specs.size()));
  }
}

template <typename T>
ParamVars register_params(Tape<T>& tape, const ParamMap& params) {
  ParamVars vars;
  for (const auto& [name, value] : params) {
    vars.emplace(name, tape.parameter(name, value.template cast<T>()));
  }
  return vars;
}

template <typename T>
Var skip_swin_block(Tape<T>& tape, Var f, Var m, const ParamVars& p, const std::string& prefix,
                    const BlockSpec& spec) {
  const Shape fd = tape.value(f).dims();
  const Shape md = tape.value(m).dims();
  if (fd != md) {
    throw Error(ErrorCode::kWiring, "skip block operands differ: query " + shape_string(fd) +
                                        ", key/value " + shape_string(md));
  }
  if (fd.size() != 3 || fd[2] != spec.channels) {
    throw Error(ErrorCode::kWiring, "skip block expects [H, W, " +
                                        std::to_string(spec.channels) + "], got " +
                                        shape_string(fd));
  }
  auto ln = [&](Var x, const std::string& name) {
    return tape.layer_norm(x, get(p, prefix + name + ".gamma"), get(p, prefix + name + ".beta"),
                           kLayerNormEps);
  };
  auto attn = [&](Var q, Var kv, const std::string& name, bool shifted) {
    const std::string a = prefix + name + ".";
    if (spec.variant == Variant::kMuster) {
      const MskaVars v{spec.heads, spec.window, get(p, a + "wq"), get(p, a + "wk"),
                       get(p, a + "wv"), get(p, a + "wo"), get(p, a + "rel_pos")};
      return mska_map(tape, q, kv, v, shifted);
    }
    const LightVars v{spec.heads, spec.window, get(p, a + "wq"), get(p, a + "dw_weight"),
                      get(p, a + "dw_bias"), get(p, a + "inner_bias"), get(p, a + "outer_bias")};
    return light_map(tape, q, kv, v, shifted);
  };
  auto mlp = [&](Var x, const std::string& name) {
    const std::string a = prefix + name + ".";
    const Var hidden = tape.gelu(tape.conv1x1(x, get(p, a + "fc1.w"), get(p, a + "fc1.b")));
    return tape.conv1x1(hidden, get(p, a + "fc2.w"), get(p, a + "fc2.b"));
  };

  const Var z1 = tape.add(f, attn(ln(f, "norm1"), ln(m, "norm1_kv"), "attn1", false));
  const Var z2 = tape.add(z1, mlp(ln(z1, "norm2"), "mlp1"));
  const Var z3 = tape.add(z2, attn(ln(z2, "norm3"), ln(m, "norm3_kv"), "attn2", true));
  return tape.add(z3, mlp(ln(z3, "norm4"), "mlp2"));
}

template <typename T>
Var upsample_stage(Tape<T>& tape, Var f_hat, Var f, const ParamVars& p,
                   const std::string& prefix, Upsampler kind) {
  const Var w = get(p, prefix + "fuse.w"), b = get(p, prefix + "fuse.b");
  switch (kind) {
    case Upsampler::kFuse:
      return tape.pixel_shuffle(tape.conv1x1(tape.concat_channels(f_hat, f), w, b), 2);
    case Upsampler::kSelfConcat:
      return tape.pixel_shuffle(tape.conv1x1(tape.concat_channels(f_hat, f_hat), w, b), 2);
    case Upsampler::kBilinear:
      return tape.upsample_bilinear(tape.conv1x1(f_hat, w, b), 2);
    case Upsampler::kTransConv:
      return tape.transposed_conv2x2(f_hat, w, b);
  }
  throw Error(ErrorCode::kConfig, "unknown upsampler");
}

template <typename T>
DecoderGraph build_decoder(Tape<T>& tape, const std::vector<Var>& levels, const ParamVars& p,
                           const DecoderConfig& cfg) {
  const auto s = cfg.resolved_stages();
  const auto n = static_cast<std::int64_t>(s.size());
  if (static_cast<std::int64_t>(levels.size()) != n) {
    throw Error(ErrorCode::kValidation, "decoder expects " + std::to_string(n) + " levels, got " +
                                            std::to_string(levels.size()));
  }
  DecoderGraph g;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& stage = s[static_cast<std::size_t>(i)];
    const std::string prefix = stage_prefix(i);
    const Var f = levels[static_cast<std::size_t>(i)];
    const Var m = i == 0 ? f : g.fused.back();
    const Var f_hat =
        skip_swin_block(tape, f, m, p, prefix, {stage.channels, stage.heads, cfg.window, cfg.variant});
    g.blocks.push_back(f_hat);
    if (i + 1 < n) {
      g.fused.push_back(upsample_stage(tape, f_hat, f, p, prefix, cfg.upsampler));
    } else {
      g.fused.push_back(tape.conv1x1(tape.concat_channels(f_hat, f), get(p, prefix + "fuse.w"),
                                     get(p, prefix + "fuse.b")));
    }
  }
  g.logits = tape.upsample_bilinear(
      tape.conv1x1(g.fused.back(), get(p, "head.w"), get(p, "head.b")), 4);
  return g;
}

DecoderOutput decoder_forward(const PyramidFeatures& feats, const DecoderConfig& cfg,
                              const ParamMap& params) {
  cfg.validate();
  validate_pyramid(feats, cfg);
  validate_params(params, param_specs(cfg));

  Tape<float> tape;
  const ParamVars vars = register_params(tape, params);
  std::vector<Var> levels;
  for (const auto& level : feats.levels) levels.push_back(tape.constant(level));
  const DecoderGraph g = build_decoder(tape, levels, vars, cfg);

  DecoderOutput out;
  out.logits = tape.value(g.logits);
  for (std::size_t i = 0; i < g.blocks.size(); ++i) {
    out.stages.push_back({tape.value(g.fused[i]), tape.value(g.blocks[i])});
  }
  return out;
}

Tensor skip_swin_block(const Tensor& f, const Tensor& m, const ParamMap& params,
                       const std::string& prefix, const BlockSpec& spec) {
  validate_params(params, block_param_specs(spec, prefix));
  Tape<float> tape;
  const ParamVars vars = register_params(tape, params);
  return tape.value(skip_swin_block(tape, tape.constant(f), tape.constant(m), vars, prefix, spec));
}

Tensor fuse_upsample(const Tensor& f_hat, const Tensor& f, const Tensor& w, const Tensor& b) {
  return pixel_shuffle(conv1x1(concat_channels(f_hat, f), w, b), 2);
}

Tensor fuse_block(const Tensor& f_hat, const Tensor& f, const Tensor& w, const Tensor& b) {
  return conv1x1(concat_channels(f_hat, f), w, b);
}

std::vector<StageShape> plan_shapes(const DecoderConfig& cfg, std::int64_t h_img,
                                    std::int64_t w_img) {
  cfg.validate();
  const std::int64_t multiple = cfg.image_multiple();
  if (h_img < multiple || w_img < multiple || h_img % multiple != 0 || w_img % multiple != 0) {
    throw Error(ErrorCode::kConfig, "image " + std::to_string(h_img) + "x" +
                                        std::to_string(w_img) + " must be a positive multiple of " +
                                        std::to_string(multiple));
  }
  const auto s = cfg.resolved_stages();
  const auto n = static_cast<std::int64_t>(s.size());
  std::vector<StageShape> out;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t down = 4 * pow2(n - 1 - i);
    const std::int64_t h = h_img / down, w = w_img / down;
    StageShape st;
    st.block = {h, w, s[static_cast<std::size_t>(i)].channels};
    const std::int64_t up = i + 1 < n ? 2 : 1;
    st.fused = {h * up, w * up, cfg.stage_output_channels(i)};
    st.rate = h_img / (h * up);
    out.push_back(std::move(st));
  }
  return out;
}

std::vector<GroupCheck> decoder_gradcheck(const DecoderConfig& cfg, std::int64_t h_img,
                                          std::int64_t w_img, double eps,
                                          std::int64_t samples_per_group) {
  const PyramidFeatures feats = synth_backbone(cfg, h_img, w_img);
  const ParamMap params = init_params(cfg);
  std::vector<Tensor64> levels;
  for (const auto& level : feats.levels) levels.push_back(level.cast<double>());
  auto weights = std::make_shared<const Tensor64>(
      Rng::derive(cfg.seed, "loss_weights").normal_tensor({h_img, w_img, cfg.num_classes}, 1.0));

  const LossBuilder loss = [&](Tape<double>& tape, const ParamVars& vars) {
    std::vector<Var> inputs;
    for (const auto& level : levels) inputs.push_back(tape.constant(level));
    return tape.weighted_sum(build_decoder(tape, inputs, vars, cfg).logits, weights);
  };
  return check_gradients(params, loss, eps, samples_per_group, cfg.seed);
}

#define MUSTER_INSTANTIATE_DECODER(T)                                                           \
  template ParamVars register_params(Tape<T>&, const ParamMap&);                                \
  template Var skip_swin_block(Tape<T>&, Var, Var, const ParamVars&, const std::string&,        \
                               const BlockSpec&);                                               \
  template Var upsample_stage(Tape<T>&, Var, Var, const ParamVars&, const std::string&,         \
                              Upsampler);                                                       \
  template DecoderGraph build_decoder(Tape<T>&, const std::vector<Var>&, const ParamVars&,      \
                                      const DecoderConfig&);

MUSTER_INSTANTIATE_DECODER(float)
MUSTER_INSTANTIATE_DECODER(double)

#undef MUSTER_INSTANTIATE_DECODER

}  // namespace muster
