// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0
//
// Stage wiring for the MUSTER / Light-MUSTER decoders.
//
// With n stages and a finest patch grid of h x w (image / 4), level i of the
// backbone pyramid is (h / 2^(n-1-i)) x (w / 2^(n-1-i)) with channels c_i
// (2^(n-1-i) * C by default). Stage i runs one skip-swin block with F_i as
// query and the previous stage output as key/value (F_0 for stage 0), then
// fuses with F_i and upsamples 2x into c_(i+1) channels. The last stage fuses
// without upsampling into 2 * c_(n-1) channels, followed by a 1x1 classifier
// and a 4x bilinear upsample to image resolution.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "muster/autodiff.hpp"
#include "muster/gradcheck.hpp"
#include "muster/tensor.hpp"

namespace muster {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr std::int64_t kMlpRatio = 4;
inline constexpr double kInitStddev = 0.02;

enum class Variant { kMuster, kLight };
enum class Upsampler { kFuse, kSelfConcat, kBilinear, kTransConv };

const char* to_string(Variant v) noexcept;
const char* to_string(Upsampler u) noexcept;
Variant parse_variant(const std::string& s);
Upsampler parse_upsampler(const std::string& s);

struct StageSpec {
  std::int64_t channels = 0;  // channels of backbone level F_i
  std::int64_t heads = 1;
};

struct DecoderConfig {
  std::int64_t base_channels = 128;
  std::int64_t window = 12;
  Variant variant = Variant::kMuster;
  Upsampler upsampler = Upsampler::kFuse;
  std::int64_t num_classes = 150;
  std::uint64_t seed = 0;
  /// Empty: four stages, channels [8C, 4C, 2C, C], heads [32, 16, 8, 4].
  std::vector<StageSpec> stages;

  std::vector<StageSpec> resolved_stages() const;
  std::int64_t stage_count() const;
  /// Channels after stage i (fused, possibly upsampled).
  std::int64_t stage_output_channels(std::int64_t i) const;
  /// Image extents must be a multiple of this.
  std::int64_t image_multiple() const;
  /// Throws kConfig on any inconsistency.
  void validate() const;
};

struct PyramidFeatures {
  std::vector<Tensor> levels;  // coarsest first, each [h_i, w_i, c_i]
};

/// Checks pyramid extents against cfg. Throws kValidation.
void validate_pyramid(const PyramidFeatures& feats, const DecoderConfig& cfg);

/// Seeded standard-normal pyramid for an h_img x w_img image. The generic
/// overload takes per-level channels (coarsest first).
PyramidFeatures synth_backbone(std::int64_t h_img, std::int64_t w_img, std::int64_t channels,
                               std::uint64_t seed);
PyramidFeatures synth_backbone(std::int64_t h_img, std::int64_t w_img,
                               const std::vector<std::int64_t>& level_channels,
                               std::uint64_t seed);
PyramidFeatures synth_backbone(const DecoderConfig& cfg, std::int64_t h_img, std::int64_t w_img);

// ---- parameters ----

enum class ParamInit { kNormal, kZeros, kOnes };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamInit init = ParamInit::kNormal;
  std::int64_t stage = 0;  // stage_count() for the classifier
};

struct BlockSpec {
  std::int64_t channels = 0;
  std::int64_t heads = 1;
  std::int64_t window = 12;
  Variant variant = Variant::kMuster;
};

std::vector<ParamSpec> block_param_specs(const BlockSpec& spec, const std::string& prefix);
std::vector<ParamSpec> param_specs(const DecoderConfig& cfg);
ParamMap init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed);
ParamMap init_params(const DecoderConfig& cfg);
/// Throws kValidation if params does not hold exactly the expected entries.
void validate_params(const ParamMap& params, const std::vector<ParamSpec>& specs);

std::string stage_prefix(std::int64_t stage);

// ---- graph builders ----

template <typename T>
ParamVars register_params(Tape<T>& tape, const ParamMap& params);

template <typename T>
Var skip_swin_block(Tape<T>& tape, Var f, Var m, const ParamVars& p, const std::string& prefix,
                    const BlockSpec& spec);

/// Upsampling path of stage `stage` (< n-1) with the configured variant.
template <typename T>
Var upsample_stage(Tape<T>& tape, Var f_hat, Var f, const ParamVars& p,
                   const std::string& prefix, Upsampler kind);

struct DecoderGraph {
  Var logits;
  std::vector<Var> blocks;  // F-hat per stage
  std::vector<Var> fused;   // M_i per stage
};

template <typename T>
DecoderGraph build_decoder(Tape<T>& tape, const std::vector<Var>& levels, const ParamVars& p,
                           const DecoderConfig& cfg);

// ---- eager entry points (32-bit) ----

struct StageOutput {
  Tensor fused;  // M_i
  Tensor block;  // F-hat
};

struct DecoderOutput {
  Tensor logits;  // [4h, 4w, classes]
  std::vector<StageOutput> stages;
};

DecoderOutput decoder_forward(const PyramidFeatures& feats, const DecoderConfig& cfg,
                              const ParamMap& params);

Tensor skip_swin_block(const Tensor& f, const Tensor& m, const ParamMap& params,
                       const std::string& prefix, const BlockSpec& spec);

/// pixel_shuffle(conv1x1(concat(f_hat, f)), 2).
Tensor fuse_upsample(const Tensor& f_hat, const Tensor& f, const Tensor& w, const Tensor& b);
/// conv1x1(concat(f_hat, f)).
Tensor fuse_block(const Tensor& f_hat, const Tensor& f, const Tensor& w, const Tensor& b);

struct StageShape {
  Shape block;
  Shape fused;
  std::int64_t rate = 0;  // image extent / fused extent
};

/// Shape propagation without evaluation.
std::vector<StageShape> plan_shapes(const DecoderConfig& cfg, std::int64_t h_img,
                                    std::int64_t w_img);

/// Central-difference check of every parameter group on a synthetic input.
/// The loss is a seeded random weighting of the logits.
std::vector<GroupCheck> decoder_gradcheck(const DecoderConfig& cfg, std::int64_t h_img,
                                          std::int64_t w_img, double eps = kDefaultFdEpsilon,
                                          std::int64_t samples_per_group = 8);

}  // namespace muster
