// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include "muster/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "muster/error.hpp"

namespace muster {

namespace {

constexpr char kMagic[4] = {'M', 'T', 'S', 'R'};
constexpr std::size_t kFixedHeader = 12;

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U>
U get(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(in[pos + i]) << (8 * i));
  pos += sizeof(U);
  return v;
}

void need(const std::vector<std::uint8_t>& in, std::size_t pos, std::size_t n, const char* what) {
  if (in.size() < pos || in.size() - pos < n) {
    throw Error(ErrorCode::kTruncated, std::string("tensor file truncated in ") + what);
  }
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(kFixedHeader + 8 * t.dims().size() + 4 * static_cast<std::size_t>(t.size()));
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put<std::uint8_t>(out, kTensorFileVersion);
  put<std::uint8_t>(out, kTensorFileDtypeF32);
  put<std::uint16_t>(out, 0);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims().size()));
  for (auto d : t.dims()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  for (float v : t.data()) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  need(bytes, pos, 4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::kBadMagic, "not a tensor file (magic mismatch)");
  }
  pos = 4;
  need(bytes, pos, kFixedHeader - 4, "header");
  const auto version = get<std::uint8_t>(bytes, pos);
  if (version != kTensorFileVersion) {
    throw Error(ErrorCode::kBadVersion, "unsupported tensor file version " + std::to_string(version));
  }
  const auto dtype = get<std::uint8_t>(bytes, pos);
  if (dtype != kTensorFileDtypeF32) {
    throw Error(ErrorCode::kBadDtype, "unsupported tensor dtype " + std::to_string(dtype));
  }
  const auto reserved = get<std::uint16_t>(bytes, pos);
  const auto ndim = get<std::uint32_t>(bytes, pos);
  if (reserved != 0 || ndim < 1 || ndim > 5) {
    throw Error(ErrorCode::kBadHeader, "bad tensor header (reserved " + std::to_string(reserved) +
                                           ", ndim " + std::to_string(ndim) + ")");
  }
  need(bytes, pos, 8 * std::size_t{ndim}, "dims");
  Shape dims;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const auto d = get<std::uint64_t>(bytes, pos);
    if (d < 1 || d > (std::uint64_t{1} << 40) || count > (std::uint64_t{1} << 40) / d) {
      throw Error(ErrorCode::kBadHeader, "bad tensor extent " + std::to_string(d));
    }
    count *= d;
    dims.push_back(static_cast<std::int64_t>(d));
  }
  need(bytes, pos, 4 * count, "payload");
  if (bytes.size() - pos != 4 * count) {
    throw Error(ErrorCode::kBadHeader, "trailing bytes after tensor payload");
  }
  std::vector<float> data(count);
  for (auto& v : data) v = std::bit_cast<float>(get<std::uint32_t>(bytes, pos));
  return Tensor(std::move(dims), std::move(data));
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "failed writing '" + path.string() + "'");
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

}  // namespace muster
