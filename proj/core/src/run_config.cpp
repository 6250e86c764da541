// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include "muster/run_config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"
#include "muster/error.hpp"

namespace muster {

namespace {

using nlohmann::json;

[[noreturn]] void schema(const std::string& msg) { throw Error(ErrorCode::kSchema, msg); }

void only_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) schema(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) schema("unknown key '" + key + "' in " + where);
  }
}

std::int64_t integer(const json& obj, const char* key, const std::string& where, std::int64_t fallback,
                     bool required = false) {
  if (!obj.contains(key)) {
    if (required) schema("missing key '" + std::string(key) + "' in " + where);
    return fallback;
  }
  const json& v = obj.at(key);
  if (!v.is_number_integer()) schema(where + "." + key + " must be an integer");
  return v.get<std::int64_t>();
}

std::string text(const json& obj, const char* key, const std::string& where,
                 const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) schema(where + "." + key + " must be a string");
  return v.get<std::string>();
}

}  // namespace

void RunConfig::validate() const {
  decoder.validate();
  const std::int64_t multiple = decoder.image_multiple();
  if (image_h < multiple || image_w < multiple || image_h % multiple != 0 ||
      image_w % multiple != 0) {
    throw Error(ErrorCode::kConfig, "image " + std::to_string(image_h) + "x" +
                                        std::to_string(image_w) + " must be a positive multiple of " +
                                        std::to_string(multiple));
  }
}

RunConfig parse_run_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    schema(std::string("invalid JSON: ") + e.what());
  }
  only_keys(root,
            {"image", "base_channels", "window_size", "variant", "upsampler", "num_classes", "seed",
             "stages"},
            "config");

  RunConfig cfg;
  if (!root.contains("image")) schema("missing key 'image' in config");
  const json& image = root.at("image");
  only_keys(image, {"h", "w"}, "image");
  cfg.image_h = integer(image, "h", "image", 0, true);
  cfg.image_w = integer(image, "w", "image", 0, true);

  DecoderConfig& d = cfg.decoder;
  d.base_channels = integer(root, "base_channels", "config", d.base_channels);
  d.window = integer(root, "window_size", "config", d.window);
  d.num_classes = integer(root, "num_classes", "config", d.num_classes);
  const std::int64_t seed = integer(root, "seed", "config", 0);
  if (seed < 0) schema("config.seed must be non-negative");
  d.seed = static_cast<std::uint64_t>(seed);
  d.variant = parse_variant(text(root, "variant", "config", "muster"));
  d.upsampler = parse_upsampler(text(root, "upsampler", "config", "fuse"));

  if (root.contains("stages")) {
    const json& stages = root.at("stages");
    if (!stages.is_array() || stages.empty()) schema("config.stages must be a non-empty array");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const std::string where = "stages[" + std::to_string(i) + "]";
      only_keys(stages[i], {"channels", "heads"}, where);
      d.stages.push_back({integer(stages[i], "channels", where, 0, true),
                          integer(stages[i], "heads", where, 0, true)});
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_json(const RunConfig& cfg) {
  const DecoderConfig& d = cfg.decoder;
  json root = {
      {"image", {{"h", cfg.image_h}, {"w", cfg.image_w}}},
      {"base_channels", d.base_channels},
      {"window_size", d.window},
      {"variant", to_string(d.variant)},
      {"upsampler", to_string(d.upsampler)},
      {"num_classes", d.num_classes},
      {"seed", d.seed},
  };
  if (!d.stages.empty()) {
    json stages = json::array();
    for (const auto& s : d.stages) stages.push_back({{"channels", s.channels}, {"heads", s.heads}});
    root["stages"] = std::move(stages);
  }
  return root.dump(2);
}

}  // namespace muster
