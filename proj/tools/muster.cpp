// Copyright 2026 The muster authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "muster/analyzer.hpp"
#include "muster/decoder.hpp"
#include "muster/error.hpp"
#include "muster/run_config.hpp"
#include "muster/tensor_file.hpp"
#include "muster/windowing.hpp"
#include "oracle.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace muster {
namespace {

constexpr double kGradTolerance = 1e-3;

void emit_error(std::string_view code, const std::string& message) {
  const json line = {{"error", std::string(code)}, {"message", message}};
  std::cerr << line.dump() << std::endl;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorCode::kIo, "cannot create directory '" + dir.string() + "'");
  }
}

fs::path level_path(const fs::path& dir, std::int64_t i) {
  return dir / ("F_" + std::to_string(i) + ".mtsr");
}

int cmd_gen_features(const std::string& config, const std::string& out) {
  const RunConfig rc = load_run_config(config);
  const PyramidFeatures feats = synth_backbone(rc.decoder, rc.image_h, rc.image_w);
  ensure_dir(out);
  for (std::size_t i = 0; i < feats.levels.size(); ++i) {
    const fs::path p = level_path(out, static_cast<std::int64_t>(i));
    write_tensor(p, feats.levels[i]);
    std::cout << p.string() << " " << shape_string(feats.levels[i].dims()) << "\n";
  }
  return 0;
}

int cmd_forward(const std::string& config, const std::string& features, const std::string& out,
                const std::string& dump_dir) {
  const RunConfig rc = load_run_config(config);
  PyramidFeatures feats;
  for (std::int64_t i = 0; i < rc.decoder.stage_count(); ++i) {
    feats.levels.push_back(read_tensor(level_path(features, i)));
  }
  const DecoderOutput result = decoder_forward(feats, rc.decoder, init_params(rc.decoder));
  const fs::path out_path(out);
  if (out_path.has_parent_path()) ensure_dir(out_path.parent_path());
  write_tensor(out_path, result.logits);
  std::cout << "logits " << shape_string(result.logits.dims()) << " -> " << out << "\n";
  if (!dump_dir.empty()) {
    ensure_dir(dump_dir);
    for (std::size_t i = 0; i < result.stages.size(); ++i) {
      const std::string tag = "stage" + std::to_string(i);
      write_tensor(fs::path(dump_dir) / (tag + "_block.mtsr"), result.stages[i].block);
      write_tensor(fs::path(dump_dir) / (tag + "_fused.mtsr"), result.stages[i].fused);
      std::cout << tag << " block " << shape_string(result.stages[i].block.dims()) << " fused "
                << shape_string(result.stages[i].fused.dims()) << "\n";
    }
  }
  return 0;
}

std::string mask_grid_text(const Tensor& m) {
  std::string s;
  for (std::int64_t q = 0; q < m.dim(0); ++q) {
    for (std::int64_t k = 0; k < m.dim(1); ++k) s += m.at(q, k) == 0.0f ? '.' : '#';
    s += '\n';
  }
  return s;
}

int cmd_masks(std::int64_t window, const std::string& variant, const std::string& out) {
  MaskFamily family;
  if (variant == "standard") {
    family = MaskFamily::kStandard;
  } else if (variant == "light") {
    family = MaskFamily::kLight;
  } else {
    throw Error(ErrorCode::kConfig, "variant must be standard or light, got '" + variant + "'");
  }
  const WindowGrid grid{2 * window, 2 * window, window, window / 2};
  const MaskSet set = family == MaskFamily::kStandard ? build_sw_mask(grid)
                                                      : build_light_sw_mask(grid);
  ensure_dir(out);
  static const char* kNames[] = {"interior", "right", "bottom", "corner"};
  for (std::size_t id = 0; id < set.masks.size(); ++id) {
    const Tensor& m = set.masks[id].matrix;
    const std::string stem = "mask_" + std::to_string(id);
    write_tensor(fs::path(out) / (stem + ".mtsr"), m);
    std::ofstream txt(fs::path(out) / (stem + ".txt"));
    if (!txt) throw Error(ErrorCode::kIo, "cannot write mask text grid in '" + out + "'");
    txt << mask_grid_text(m);
    std::int64_t masked = 0;
    for (float v : m.data()) masked += v != 0.0f ? 1 : 0;
    std::cout << stem << " (" << kNames[id] << ") " << shape_string(m.dims()) << " masked "
              << masked << "\n";
  }
  return 0;
}

std::vector<std::pair<std::int64_t, std::int64_t>> parse_sizes(const std::string& text) {
  std::vector<std::pair<std::int64_t, std::int64_t>> sizes;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto x = item.find('x');
    try {
      if (x == std::string::npos) throw std::invalid_argument(item);
      std::size_t used_h = 0, used_w = 0;
      const std::string hs = item.substr(0, x), ws = item.substr(x + 1);
      const std::int64_t h = std::stoll(hs, &used_h), w = std::stoll(ws, &used_w);
      if (used_h != hs.size() || used_w != ws.size()) throw std::invalid_argument(item);
      sizes.emplace_back(h, w);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kUsage, "--sizes expects HxW[,HxW...] patch grids, got '" + item + "'");
    }
  }
  return sizes;
}

json report_json(const FlopReport& r) {
  json entries = json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"op", e.op},
                       {"stage", e.stage},
                       {"macs", e.macs},
                       {"elementwise_flops", e.elementwise_flops},
                       {"params", e.params},
                       {"attention_term", e.attention_term}});
  }
  json stages = json::array();
  for (std::size_t i = 0; i < r.stage_macs.size(); ++i) {
    stages.push_back({{"stage", i}, {"macs", r.stage_macs[i]}, {"flops", r.stage_flops[i]}});
  }
  return {{"h", r.h},
          {"w", r.w},
          {"variant", to_string(r.variant)},
          {"total_macs", r.total_macs},
          {"total_elementwise_flops", r.total_elementwise_flops},
          {"total_flops", r.total_flops()},
          {"total_params", r.total_params},
          {"attention_macs", r.attention_macs},
          {"projection_macs", r.projection_macs},
          {"stages", std::move(stages)},
          {"entries", std::move(entries)}};
}

void print_report(const FlopReport& r) {
  std::cout << "variant " << to_string(r.variant) << ", patch grid " << r.h << "x" << r.w << "\n";
  std::cout << std::left << std::setw(12) << "stage" << std::right << std::setw(18) << "MACs"
            << std::setw(18) << "FLOPs" << "\n";
  for (std::size_t i = 0; i < r.stage_macs.size(); ++i) {
    const std::string name =
        i + 1 == r.stage_macs.size() ? "classifier" : "stage" + std::to_string(i);
    std::cout << std::left << std::setw(12) << name << std::right << std::setw(18)
              << r.stage_macs[i] << std::setw(18) << r.stage_flops[i] << "\n";
  }
  std::cout << std::left << std::setw(12) << "total" << std::right << std::setw(18) << r.total_macs
            << std::setw(18) << r.total_flops() << "\n";
  std::cout << "params " << r.total_params << ", attention MACs " << r.attention_macs
            << ", projection MACs " << r.projection_macs << "\n";
}

int cmd_flops(const std::string& config, const std::string& sizes_text,
              const std::string& json_out) {
  const RunConfig rc = load_run_config(config);
  const std::int64_t h = rc.image_h / 4, w = rc.image_w / 4;
  // Default fit grids need no padding on any level, so counts are exactly affine.
  const std::int64_t u = rc.decoder.window * (rc.decoder.image_multiple() / 4);
  const auto sizes = sizes_text.empty()
                         ? std::vector<std::pair<std::int64_t, std::int64_t>>{{u, u},
                                                                              {2 * u, u},
                                                                              {2 * u, 2 * u}}
                         : parse_sizes(sizes_text);
  const FlopReport report = count_model(rc.decoder, h, w);
  const ComplexityFit fit = verify_complexity_law(rc.decoder, sizes);

  DecoderConfig full = rc.decoder, light = rc.decoder;
  full.variant = Variant::kMuster;
  light.variant = Variant::kLight;
  json comparison = nullptr;
  bool light_ok = true;
  try {
    light.validate();
  } catch (const Error&) {
    light_ok = false;
  }
  print_report(report);
  std::cout << std::setprecision(12) << "fit: flops = " << fit.slope << " * hw + "
            << fit.intercept << ", max relative residual " << fit.max_rel_residual << "\n";
  if (light_ok) {
    const auto a = count_model(full, h, w), b = count_model(light, h, w);
    const double pct = light_reduction_percent(rc.decoder, h, w);
    comparison = {{"muster_flops", a.total_flops()},
                  {"light_flops", b.total_flops()},
                  {"reduction_percent", pct},
                  {"reference_percent", 18.0}};
    std::cout << std::setprecision(4) << "light vs muster: " << b.total_flops() << " vs "
              << a.total_flops() << " FLOPs, " << pct << "% lower (reference figure 18%)\n";
  }
  if (!json_out.empty()) {
    json points = json::array();
    for (const auto& [area, flops] : fit.points) points.push_back({{"hw", area}, {"flops", flops}});
    const json doc = {{"report", report_json(report)},
                      {"fit",
                       {{"slope", fit.slope},
                        {"intercept", fit.intercept},
                        {"max_rel_residual", fit.max_rel_residual},
                        {"points", std::move(points)}}},
                      {"light_comparison", comparison}};
    std::ofstream f(json_out);
    if (!f) throw Error(ErrorCode::kIo, "cannot write '" + json_out + "'");
    f << doc.dump(2) << "\n";
  }
  return 0;
}

int cmd_gradcheck(const std::string& config, double eps, std::int64_t samples) {
  const RunConfig rc = load_run_config(config);
  const auto groups = decoder_gradcheck(rc.decoder, rc.image_h, rc.image_w, eps, samples);
  double worst = 0.0;
  for (const auto& g : groups) {
    std::cout << std::left << std::setw(40) << g.name << std::right << std::setw(8) << g.elements
              << "  " << std::scientific << std::setprecision(3) << g.max_rel_error
              << std::defaultfloat << "\n";
    worst = std::max(worst, g.max_rel_error);
  }
  const bool ok = worst < kGradTolerance;
  std::cout << (ok ? "PASS" : "FAIL") << " max relative error " << std::scientific << worst
            << " over " << groups.size() << " groups\n";
  return ok ? 0 : 1;
}

int cmd_selftest() {
  bool ok = true;
  for (const auto& s : oracle::run_selftests()) {
    std::cout << (s.passed ? "PASS " : "FAIL ") << s.name << ": " << s.detail << "\n";
    ok = ok && s.passed;
  }
  return ok ? 0 : 1;
}

int run(int argc, char** argv) {
  CLI::App app{"MUSTER / Light-MUSTER decoder tool"};
  app.require_subcommand(1);

  std::string config, out, features, dump_dir, variant = "standard", sizes, json_out;
  std::int64_t window = 4, samples = 8;
  double eps = 1e-4;

  auto* gen = app.add_subcommand("gen-features", "Write synthetic pyramid features F_i.mtsr");
  gen->add_option("--config", config, "Run config JSON")->required();
  gen->add_option("--out", out, "Output directory")->required();

  auto* fwd = app.add_subcommand("forward", "Run the decoder on feature files");
  fwd->add_option("--config", config, "Run config JSON")->required();
  fwd->add_option("--features", features, "Directory holding F_i.mtsr")->required();
  fwd->add_option("--out", out, "Logits tensor file")->required();
  fwd->add_option("--dump-stages", dump_dir, "Directory for per-stage tensors");

  auto* masks = app.add_subcommand("masks", "Write the four shifted-window masks");
  masks->add_option("--window", window, "Window size M")->required();
  masks->add_option("--variant", variant, "standard or light");
  masks->add_option("--out", out, "Output directory")->required();

  auto* flops = app.add_subcommand("flops", "Analytic MAC/FLOP report and linearity fit");
  flops->add_option("--config", config, "Run config JSON")->required();
  flops->add_option("--sizes", sizes,
                    "Patch grids for the fit, e.g. 24x24,48x24,48x48 (default: padding-free grids)");
  flops->add_option("--json", json_out, "Write the report as JSON");

  auto* grad = app.add_subcommand("gradcheck", "Central-difference gradient check");
  grad->add_option("--config", config, "Run config JSON")->required();
  grad->add_option("--eps", eps, "Finite-difference step");
  grad->add_option("--samples", samples, "Entries checked per group (<= 0: all)");

  auto* self = app.add_subcommand("selftest", "Run the oracle suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error(to_string(ErrorCode::kUsage), e.what());
    return 2;
  }

  if (*gen) return cmd_gen_features(config, out);
  if (*fwd) return cmd_forward(config, features, out, dump_dir);
  if (*masks) return cmd_masks(window, variant, out);
  if (*flops) return cmd_flops(config, sizes, json_out);
  if (*grad) return cmd_gradcheck(config, eps, samples);
  if (*self) return cmd_selftest();
  return 2;
}

}  // namespace
}  // namespace muster

int main(int argc, char** argv) {
  try {
    return muster::run(argc, argv);
  } catch (const muster::Error& e) {
    muster::emit_error(muster::to_string(e.code()), e.what());
    return e.code() == muster::ErrorCode::kUsage ? 2 : 1;
  } catch (const std::exception& e) {
    muster::emit_error("internal", e.what());
    return 1;
  }
}
