// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0
//
// MTSR tensor files:
//   "MTSR" | u8 version=1 | u8 dtype=0 (f32) | u16 reserved=0 | u32 ndim |
//   ndim x u64 dims | row-major f32 payload
// All integers and floats little-endian.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "muster/tensor.hpp"

namespace muster {

inline constexpr std::uint8_t kTensorFileVersion = 1;
inline constexpr std::uint8_t kTensorFileDtypeF32 = 0;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
/// Throws kBadMagic, kBadVersion, kBadDtype, kBadHeader or kTruncated.
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace muster
