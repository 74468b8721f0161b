#pragma once

// Pipeline configuration text and parameter files.
//
// Parameter file layout:
//   "DPP1\n"
//   manifest lines "key=value\n" (fusion variant, dims, seed, ...)
//   "\n"
//   repeated sections: "<name> <byte count>\n" followed by one DPT1 block
//
// Serialization is canonical, so decode followed by encode reproduces the
// input bytes.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dualview/io.hpp"
#include "dualview/pipeline.hpp"

namespace dualview::io {

// ---------------------------------------------------------------------------
// Config text

inline PipelineConfig parse_config(const std::string& text) {
  PipelineConfig c;
  for (const auto& [key, value] : parse_key_values(text)) {
    if (key == "encoder_w") c.encoder.input_w = parse_u64(value, key);
    else if (key == "encoder_h") c.encoder.input_h = parse_u64(value, key);
    else if (key == "patch") c.encoder.patch = parse_u64(value, key);
    else if (key == "dim") c.encoder.dim = parse_u64(value, key);
    else if (key == "channels") c.encoder.channels = parse_u64(value, key);
    else if (key == "fusion") c.fusion = parse_fusion(value);
    else if (key == "ablation") c.ablation = parse_ablation(value);
    else if (key == "shared_branches") c.shared_branches = parse_bool(value, key);
    else if (key == "multires") c.multires = parse_bool(value, key);
    else if (key == "low_res_w") c.low_res_w = parse_u64(value, key);
    else if (key == "low_res_h") c.low_res_h = parse_u64(value, key);
    else if (key == "seed") c.seed = parse_u64(value, key);
    else if (key == "projector_out") c.projector_out = parse_u64(value, key);
    else throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
  }
  validate(c);
  return c;
}

inline std::string format_config(const PipelineConfig& c) {
  return format_key_values({
      {"encoder_w", std::to_string(c.encoder.input_w)},
      {"encoder_h", std::to_string(c.encoder.input_h)},
      {"patch", std::to_string(c.encoder.patch)},
      {"dim", std::to_string(c.encoder.dim)},
      {"channels", std::to_string(c.encoder.channels)},
      {"fusion", to_string(c.fusion)},
      {"ablation", to_string(c.ablation)},
      {"shared_branches", c.shared_branches ? "1" : "0"},
      {"multires", c.multires ? "1" : "0"},
      {"low_res_w", std::to_string(c.low_res_w)},
      {"low_res_h", std::to_string(c.low_res_h)},
      {"seed", std::to_string(c.seed)},
      {"projector_out", std::to_string(c.projector_out)},
  });
}

inline PipelineConfig load_config(const std::filesystem::path& path) { return parse_config(read_text(path)); }

// ---------------------------------------------------------------------------
// Params file

inline constexpr const char* kParamsMagic = "DPP1";

struct ParamsFile {
  KeyValues manifest;
  std::vector<std::pair<std::string, Tensor>> sections;

  const Tensor& section(const std::string& name) const {
    for (const auto& [n, t] : sections)
      if (n == name) return t;
    throw Error(ErrorCode::CorruptFile, "params file has no section '" + name + "'");
  }
  bool has_section(const std::string& name) const {
    for (const auto& s : sections)
      if (s.first == name) return true;
    return false;
  }
};

inline Bytes encode_params_file(const ParamsFile& f) {
  std::string head = std::string(kParamsMagic) + "\n";
  for (const auto& [k, v] : f.manifest) {
    if (k.empty() || k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "manifest entry '" + k + "' is not line-safe");
    }
    head += k + "=" + v + "\n";
  }
  head += "\n";
  Bytes out(head.begin(), head.end());
  for (const auto& [name, tensor] : f.sections) {
    if (name.empty() || name.find_first_of(" \n") != std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "section name '" + name + "' is not line-safe");
    }
    const Bytes block = encode_tensor(tensor);
    const std::string line = name + " " + std::to_string(block.size()) + "\n";
    out.insert(out.end(), line.begin(), line.end());
    out.insert(out.end(), block.begin(), block.end());
  }
  return out;
}

inline ParamsFile decode_params_file(std::span<const std::uint8_t> in) {
  std::size_t at = 0;
  auto next_line = [&]() -> std::string {
    std::size_t end = at;
    while (end < in.size() && in[end] != '\n') ++end;
    if (end >= in.size()) throw Error(ErrorCode::CorruptFile, "params file truncated in header");
    std::string line(in.begin() + static_cast<std::ptrdiff_t>(at), in.begin() + static_cast<std::ptrdiff_t>(end));
    at = end + 1;
    return line;
  };

  if (next_line() != kParamsMagic) throw Error(ErrorCode::CorruptFile, "missing DPP1 header");
  ParamsFile f;
  for (std::string line = next_line(); !line.empty(); line = next_line()) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::CorruptFile, "bad manifest line '" + line + "'");
    f.manifest.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  while (at < in.size()) {
    const std::string line = next_line();
    const auto sp = line.find(' ');
    if (sp == std::string::npos || sp == 0) throw Error(ErrorCode::CorruptFile, "bad section line '" + line + "'");
    std::uint64_t n = 0;
    try {
      n = parse_u64(line.substr(sp + 1), "section size");
    } catch (const Error&) {
      throw Error(ErrorCode::CorruptFile, "bad section size in '" + line + "'");
    }
    if (in.size() - at < n) throw Error(ErrorCode::CorruptFile, "section '" + line.substr(0, sp) + "' truncated");
    f.sections.emplace_back(line.substr(0, sp), decode_tensor(in.subspan(at, static_cast<std::size_t>(n))));
    at += static_cast<std::size_t>(n);
  }
  return f;
}

namespace detail {

inline void add_linear(ParamsFile& f, const std::string& name, const LinearParams& l) {
  f.sections.emplace_back(name + ".weight", l.weight);
  if (l.bias) f.sections.emplace_back(name + ".bias", *l.bias);
}

inline LinearParams get_linear(const ParamsFile& f, const std::string& name) {
  LinearParams l{f.section(name + ".weight"), std::nullopt};
  if (f.has_section(name + ".bias")) l.bias = f.section(name + ".bias");
  return l;
}

}  // namespace detail

inline ParamsFile to_params_file(const PipelineConfig& c, const PipelineParams& p, std::uint64_t seed) {
  ParamsFile f;
  f.manifest = {
      {"fusion", to_string(p.dem.fusion)},
      {"dim", std::to_string(c.encoder.dim)},
      {"encoder_w", std::to_string(c.encoder.input_w)},
      {"encoder_h", std::to_string(c.encoder.input_h)},
      {"patch", std::to_string(c.encoder.patch)},
      {"channels", std::to_string(c.encoder.channels)},
      {"projector_out", std::to_string(c.projector_out)},
      {"shared_branches", p.dem.shared_branches ? "1" : "0"},
      {"seed", std::to_string(seed)},
  };
  detail::add_linear(f, "encoder.patch_proj", p.encoder.patch_proj);
  f.sections.emplace_back("encoder.position", p.encoder.position);
  detail::add_linear(f, "dem.glo.q", p.dem.glo.q);
  detail::add_linear(f, "dem.glo.k", p.dem.glo.k);
  detail::add_linear(f, "dem.glo.v", p.dem.glo.v);
  detail::add_linear(f, "dem.loc.q", p.dem.loc.q);
  detail::add_linear(f, "dem.loc.k", p.dem.loc.k);
  detail::add_linear(f, "dem.loc.v", p.dem.loc.v);
  detail::add_linear(f, "dem.fuse_glo", p.dem.fuse_glo);
  detail::add_linear(f, "dem.fuse_loc", p.dem.fuse_loc);
  f.sections.emplace_back("dem.mix_logits", p.dem.mix_logits);
  f.sections.emplace_back("dem.conv.weight", p.dem.conv_weight);
  f.sections.emplace_back("dem.conv.bias", p.dem.conv_bias);
  detail::add_linear(f, "projector", p.projector);
  return f;
}

// Overlays the manifest's geometry on `base` and rebuilds the parameters.
inline std::pair<PipelineConfig, PipelineParams> from_params_file(const ParamsFile& f, PipelineConfig base = {}) {
  const KeyValues& m = f.manifest;
  base.fusion = parse_fusion(require_value(m, "fusion"));
  base.encoder.dim = parse_u64(require_value(m, "dim"), "dim");
  base.encoder.input_w = parse_u64(require_value(m, "encoder_w"), "encoder_w");
  base.encoder.input_h = parse_u64(require_value(m, "encoder_h"), "encoder_h");
  base.encoder.patch = parse_u64(require_value(m, "patch"), "patch");
  base.encoder.channels = parse_u64(require_value(m, "channels"), "channels");
  base.projector_out = parse_u64(require_value(m, "projector_out"), "projector_out");
  base.shared_branches = parse_bool(require_value(m, "shared_branches"), "shared_branches");
  base.seed = parse_u64(require_value(m, "seed"), "seed");

  PipelineParams p;
  p.encoder.patch_proj = detail::get_linear(f, "encoder.patch_proj");
  p.encoder.position = f.section("encoder.position");
  p.dem.dim = base.encoder.dim;
  p.dem.fusion = base.fusion;
  p.dem.shared_branches = base.shared_branches;
  p.dem.glo = {detail::get_linear(f, "dem.glo.q"), detail::get_linear(f, "dem.glo.k"),
               detail::get_linear(f, "dem.glo.v")};
  p.dem.loc = {detail::get_linear(f, "dem.loc.q"), detail::get_linear(f, "dem.loc.k"),
               detail::get_linear(f, "dem.loc.v")};
  p.dem.fuse_glo = detail::get_linear(f, "dem.fuse_glo");
  p.dem.fuse_loc = detail::get_linear(f, "dem.fuse_loc");
  p.dem.mix_logits = f.section("dem.mix_logits");
  p.dem.conv_weight = f.section("dem.conv.weight");
  p.dem.conv_bias = f.section("dem.conv.bias");
  p.projector = detail::get_linear(f, "projector");
  validate(base);
  validate(p.dem);
  return {base, p};
}

inline void save_params(const std::filesystem::path& path, const PipelineConfig& c, const PipelineParams& p,
                        std::uint64_t seed) {
  write_bytes_atomic(path, encode_params_file(to_params_file(c, p, seed)));
}

inline std::pair<PipelineConfig, PipelineParams> load_params(const std::filesystem::path& path,
                                                             PipelineConfig base = {}) {
  return from_params_file(decode_params_file(read_bytes(path)), std::move(base));
}

}  // namespace dualview::io
