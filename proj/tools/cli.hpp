#pragma once

// Command-line front end. run_cli() is the whole program; main() only wires
// it to the process streams. Exit codes: 0 success, 1 data error, 2 usage.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dualview/dualview.hpp"
#include "dualview/verify/toy.hpp"
#include "selftest.hpp"

namespace dualview::tools {

inline constexpr double kGradTolerance = 1e-3;

namespace fs = std::filesystem;

inline std::string sub_file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sub_%03zu.dpt", i);
  return buf;
}

inline constexpr const char* kGridManifest = "grid.txt";

inline int cmd_load(std::ostream& out, const fs::path& in, const fs::path& dst, const std::vector<std::size_t>& multiple,
                    io::ResizePolicy policy) {
  const ImageTensor img = io::load_image(in, policy, multiple[0], multiple[1]);
  io::write_tensor(dst, io::image_to_tensor(img));
  out << "height=" << img.height() << "\nwidth=" << img.width() << "\nchannels=" << img.channels() << "\n";
  return 0;
}

inline int cmd_crop(std::ostream& out, Perspective mode, const std::vector<std::size_t>& enc, const fs::path& in,
                    const fs::path& dir, io::ResizePolicy policy) {
  const ImageTensor img = io::load_image(in, policy, enc[0], enc[1]);
  const GridSpec g = compute_grid(img.width(), img.height(), enc[0], enc[1]);
  const auto subs = mode == Perspective::local ? local_crop(img, g) : global_crop(img, g);
  fs::create_directories(dir);
  for (std::size_t i = 0; i < subs.items.size(); ++i) {
    io::write_tensor(dir / sub_file_name(i), io::image_to_tensor(subs.items[i]));
  }
  io::write_text_atomic(dir / kGridManifest, io::format_key_values({
                                                 {"mode", to_string(mode)},
                                                 {"img_w", std::to_string(g.img_w)},
                                                 {"img_h", std::to_string(g.img_h)},
                                                 {"enc_w", std::to_string(g.enc_w)},
                                                 {"enc_h", std::to_string(g.enc_h)},
                                                 {"n_w", std::to_string(g.n_w)},
                                                 {"n_h", std::to_string(g.n_h)},
                                                 {"channels", std::to_string(img.channels())},
                                                 {"count", std::to_string(g.count())},
                                             }));
  out << "mode=" << to_string(mode) << "\nn_w=" << g.n_w << "\nn_h=" << g.n_h << "\ncount=" << g.count() << "\n";
  return 0;
}

inline int cmd_recombine(std::ostream& out, Perspective mode, const fs::path& dir, const fs::path& dst) {
  const io::KeyValues m = io::parse_key_values(io::read_text(dir / kGridManifest));
  const Perspective stored = parse_perspective(io::require_value(m, "mode"));
  if (stored != mode) {
    throw Error(ErrorCode::WrongPerspective, dir.string() + " holds a " + to_string(stored) + " crop, not " +
                                                 to_string(mode));
  }
  auto num = [&](const char* key) { return static_cast<std::size_t>(io::parse_u64(io::require_value(m, key), key)); };
  const GridSpec g{num("img_w"), num("img_h"), num("enc_w"), num("enc_h"), num("n_w"), num("n_h")};
  if (g.n_w * g.enc_w != g.img_w || g.n_h * g.enc_h != g.img_h || num("count") != g.count()) {
    throw Error(ErrorCode::CorruptFile, "inconsistent grid manifest in " + dir.string());
  }
  SubImageSet<ImageTensor> subs{g, mode, {}};
  for (std::size_t i = 0; i < g.count(); ++i) subs.items.push_back(io::tensor_to_image(io::read_tensor(dir / sub_file_name(i))));
  const ImageTensor img = recombine(subs);
  io::write_tensor(dst, io::image_to_tensor(img));
  out << "height=" << img.height() << "\nwidth=" << img.width() << "\n";
  return 0;
}

struct PipelineArgs {
  std::optional<fs::path> config;
  fs::path in;
  std::optional<fs::path> params;
  fs::path out;
  std::optional<std::string> ablation;
  std::optional<std::uint64_t> seed;
  io::ResizePolicy resize = io::ResizePolicy::reject;
};

inline PipelineConfig resolve_config(const std::optional<fs::path>& path, const std::optional<std::string>& ablation,
                                     const std::optional<std::uint64_t>& seed) {
  PipelineConfig cfg = path ? io::load_config(*path) : PipelineConfig{};
  if (ablation) cfg.ablation = parse_ablation(*ablation);
  if (seed) cfg.seed = *seed;
  return cfg;
}

inline int cmd_pipeline(std::ostream& out, const PipelineArgs& a) {
  PipelineConfig cfg = resolve_config(a.config, a.ablation, a.seed);
  PipelineParams params;
  if (a.params) {
    auto loaded = io::load_params(*a.params, cfg);
    cfg = loaded.first;
    params = std::move(loaded.second);
    if (a.seed) cfg.seed = *a.seed;
  } else {
    params = init_pipeline_params(cfg, cfg.seed);
  }
  const ImageTensor img = io::load_image(a.in, a.resize, cfg.encoder.input_w, cfg.encoder.input_h);
  PipelineTrace trace;
  const TokenSequence tokens = Pipeline(cfg, params).run(img, &trace);
  io::write_tensor(a.out, tokens.tokens);
  out << "ablation=" << to_string(cfg.ablation) << "\nfusion=" << to_string(cfg.fusion)
      << "\nencoder_calls=" << trace.encoder_calls << "\ntokens=" << tokens.size()
      << "\ntoken_dim=" << tokens.tokens.dim(1) << "\n";
  return 0;
}

inline int cmd_init_params(std::ostream& out, const std::optional<fs::path>& config, const fs::path& dst,
                           const std::optional<std::uint64_t>& seed) {
  const PipelineConfig cfg = resolve_config(config, std::nullopt, seed);
  io::save_params(dst, cfg, init_pipeline_params(cfg, cfg.seed), cfg.seed);
  out << "seed=" << cfg.seed << "\nfusion=" << to_string(cfg.fusion) << "\n";
  return 0;
}

inline int cmd_tokens(std::ostream& out, const std::vector<std::size_t>& res, const std::vector<std::size_t>& enc,
                      std::size_t patch, std::size_t dim, bool multires) {
  PipelineConfig cfg;
  cfg.encoder = VisionEncoderSpec{enc[0], enc[1], patch, dim, 3};
  cfg.multires = multires;
  const BudgetReport r = budget(res[0], res[1], cfg);
  out << "n_sub_images=" << r.n_sub_images << "\n"
      << "encoder_calls=" << r.encoder_calls << "\n"
      << "tokens_before_pool=" << r.tokens_before_pool << "\n"
      << "tokens_final=" << r.tokens_final << "\n"
      << "attention_flops_global=" << r.attention_flops_global << "\n"
      << "attention_flops_local=" << r.attention_flops_local << "\n"
      << "attention_flops_total=" << r.attention_flops_total << "\n";
  return 0;
}

inline int cmd_gradcheck(std::ostream& out, std::uint64_t seed, const std::string& variant, double step) {
  std::vector<FusionVariant> variants;
  if (variant == "all") {
    variants.assign(std::begin(kAllFusionVariants), std::end(kAllFusionVariants));
  } else {
    variants.push_back(parse_fusion(variant));
  }
  double worst = 0.0;
  for (FusionVariant v : variants) {
    const auto tc = verify::make_toy_case(seed, v);
    const GradCheckReport r = check_dem_gradients(tc.f_glo, tc.f_loc, tc.cells, tc.params, step);
    out << "variant=" << to_string(v) << " coordinates=" << r.coordinates << " max_rel_error=" << sci(r.max_rel_error)
        << "\n";
    worst = std::max(worst, r.max_rel_error);
  }
  out << "max_rel_error=" << sci(worst) << "\n";
  return worst < kGradTolerance ? 0 : 1;
}

inline int cmd_selftest(std::ostream& out, std::uint64_t seed) {
  bool ok = true;
  for (const SuiteResult& r : run_selftest(seed)) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Dual-perspective cropping and enhancement for high-resolution vision features", "dualview"};
  app.require_subcommand(1);

  auto add_seed = [](CLI::App* cmd, std::optional<std::uint64_t>& seed) {
    cmd->add_option("--seed", seed, "RNG seed (default: $DUALVIEW_SEED, then the config's seed)")
        ->envname("DUALVIEW_SEED");
  };
  auto add_resize = [](CLI::App* cmd, std::string& policy) {
    cmd->add_option("--resize", policy, "resize policy for non-multiple images")
        ->check(CLI::IsMember({"reject", "nearest", "bilinear"}));
  };

  std::string resize = "reject";
  std::string mode;
  std::vector<std::size_t> enc_res, res;
  std::string in, out_path;

  auto* load = app.add_subcommand("load", "decode and normalize a PPM image into a DPT1 tensor");
  std::vector<std::size_t> multiple{1, 1};
  load->add_option("--in", in, "input PPM")->required();
  load->add_option("--out", out_path, "output DPT1 file")->required();
  load->add_option("--encoder-res", multiple, "size the image must be a multiple of")->expected(2);
  add_resize(load, resize);

  auto* crop = app.add_subcommand("crop", "cut an image into local or global sub-images");
  crop->add_option("--mode", mode)->required()->check(CLI::IsMember({"local", "global"}));
  crop->add_option("--encoder-res", enc_res, "encoder input W H")->required()->expected(2);
  crop->add_option("--in", in, "input PPM")->required();
  crop->add_option("--out", out_path, "output directory")->required();
  add_resize(crop, resize);

  auto* recomb = app.add_subcommand("recombine", "invert a crop directory back into one tensor");
  recomb->add_option("--mode", mode)->required()->check(CLI::IsMember({"local", "global"}));
  recomb->add_option("--in", in, "crop directory")->required();
  recomb->add_option("--out", out_path, "output DPT1 file")->required();

  PipelineArgs pa;
  std::string pa_config, pa_params, pa_ablation;
  auto* pipe = app.add_subcommand("pipeline", "run the full visual path and write the token matrix");
  pipe->add_option("--config", pa_config, "key=value configuration file");
  pipe->add_option("--in", in, "input PPM")->required();
  pipe->add_option("--params", pa_params, "parameter file (default: initialize from the seed)");
  pipe->add_option("--out", out_path, "output DPT1 token file")->required();
  pipe->add_option("--ablation", pa_ablation)
      ->check(CLI::IsMember({"full", "dcm_local_only", "dcm_global_only", "dcm_add"}));
  add_seed(pipe, pa.seed);
  add_resize(pipe, resize);

  std::optional<std::uint64_t> init_seed;
  std::string init_config;
  auto* init = app.add_subcommand("init-params", "write freshly initialized parameters");
  init->add_option("--config", init_config, "key=value configuration file");
  init->add_option("--out", out_path, "output parameter file")->required();
  add_seed(init, init_seed);

  std::size_t patch = 0, dim = 1024;
  bool multires = false;
  auto* tokens = app.add_subcommand("tokens", "print the token and attention budget for an input size");
  tokens->add_option("--res", res, "image W H")->required()->expected(2);
  tokens->add_option("--encoder-res", enc_res, "encoder input W H")->required()->expected(2);
  tokens->add_option("--patch", patch, "encoder patch size")->required();
  tokens->add_option("--dim", dim, "feature dim")->capture_default_str();
  tokens->add_flag("--multires", multires, "count the extra low-resolution encoder call");

  std::optional<std::uint64_t> gc_seed;
  bool toy = false;
  std::string variant = "linear_concat";
  double step = 1e-4;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of all enhancement gradients");
  add_seed(grad, gc_seed);
  grad->add_flag("--toy", toy, "toy problem: d=4, 2x2 grid of 2x2 token sub-grids (the only size offered)");
  grad->add_option("--variant", variant, "fusion variant or 'all'");
  grad->add_option("--step", step, "central-difference step");

  std::optional<std::uint64_t> st_seed;
  auto* self = app.add_subcommand("selftest", "round-trip, permutation, attention and oracle suites");
  add_seed(self, st_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    const io::ResizePolicy policy = io::parse_resize_policy(resize);
    if (*load) return cmd_load(out, in, out_path, multiple, policy);
    if (*crop) return cmd_crop(out, parse_perspective(mode), enc_res, in, out_path, policy);
    if (*recomb) return cmd_recombine(out, parse_perspective(mode), in, out_path);
    if (*pipe) {
      if (!pa_config.empty()) pa.config = pa_config;
      if (!pa_params.empty()) pa.params = pa_params;
      if (!pa_ablation.empty()) pa.ablation = pa_ablation;
      pa.in = in;
      pa.out = out_path;
      pa.resize = policy;
      return cmd_pipeline(out, pa);
    }
    if (*init) {
      return cmd_init_params(out, init_config.empty() ? std::nullopt : std::optional<fs::path>(init_config),
                             out_path, init_seed);
    }
    if (*tokens) return cmd_tokens(out, res, enc_res, patch, dim, multires);
    if (*grad) return cmd_gradcheck(out, gc_seed.value_or(0), variant, step);
    if (*self) return cmd_selftest(out, st_seed.value_or(0));
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace dualview::tools
