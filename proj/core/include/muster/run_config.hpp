// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON run configuration:
//
//   {
//     "image": {"h": 96, "w": 96},      required
//     "base_channels": 128,
//     "window_size": 12,
//     "variant": "muster" | "light",
//     "upsampler": "fuse" | "selfconcat" | "bilinear" | "transconv",
//     "num_classes": 150,
//     "seed": 0,
//     "stages": [{"channels": 1024, "heads": 32}, ...]   optional, coarsest first
//   }
//
// Unknown keys and wrongly typed values are rejected.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "muster/decoder.hpp"

namespace muster {

struct RunConfig {
  std::int64_t image_h = 0;
  std::int64_t image_w = 0;
  DecoderConfig decoder;

  /// Throws kConfig if the image extents do not fit the stage count.
  void validate() const;
};

/// Throws kSchema on malformed JSON or schema violations, kConfig on
/// semantically invalid values.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string to_json(const RunConfig& cfg);

}  // namespace muster
