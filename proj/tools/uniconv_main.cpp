// Command-line front end: model description, ERF analysis, receptive-field
// verification, gradient checking, and the learnability smoke run.
//
// Exit codes: 0 success, 1 verification FAIL, 2 usage or input error.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uniconv/analysis.hpp"
#include "uniconv/grad_check.hpp"
#include "uniconv/io.hpp"
#include "uniconv/model.hpp"

using namespace uniconv;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError("cannot open " + path + " for writing");
  return out;
}

int env_threads() {
  const char *v = std::getenv("UNICONV_THREADS");
  if (!v)
    return 1;
  const int n = std::atoi(v);
  return n < 1 ? 1 : n;
}

struct CommonOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string precision = "f32";
  std::string out;
};

void add_common(CLI::App *cmd, CommonOpts &opts, bool precision_flag = true) {
  cmd->add_option("--config", opts.config_path, "Model config JSON")->required();
  cmd->add_option("--seed", opts.seed, "Override the config seed")
      ->each([&opts](const std::string &) { opts.seed_set = true; });
  if (precision_flag)
    cmd->add_option("--precision", opts.precision, "Compute precision")
        ->check(CLI::IsMember({"f32", "f64"}));
  cmd->add_option("--out", opts.out, "Output path (base path for multi-file commands)");
}

ParsedConfig load_with_seed(const CommonOpts &opts) {
  ParsedConfig cfg = load_config_file(opts.config_path);
  if (opts.seed_set)
    cfg.seed = opts.seed;
  return cfg;
}

// ---------------------------------------------------------------------------

void write_describe_csv(const std::string &path, const CostBreakdown &costs) {
  std::ofstream out = open_out(path);
  out << "category,params,macs,elementwise_ops\n";
  const std::pair<const char *, const CostBreakdown::Entry *> rows[] = {
      {"rfa", &costs.rfa},
      {"small_conv", &costs.small_conv},
      {"ffn", &costs.ffn},
      {"stem_downsample", &costs.stem_downsample},
      {"head", &costs.head},
  };
  for (const auto &[name, entry] : rows)
    out << name << "," << entry->params << "," << entry->macs << "," << entry->elementwise << "\n";
  const CostBreakdown::Entry total = costs.total();
  out << "total," << total.params << "," << total.macs << "," << total.elementwise << "\n";
}

int cmd_describe(const CommonOpts &opts, int input_size) {
  const ParsedConfig cfg = load_with_seed(opts);
  if (input_size % 32 != 0) {
    std::cerr << "error: --input-size must be divisible by 32, got " << input_size << "\n";
    return 2;
  }
  Rng rng(cfg.seed);
  Model<float> m = build_model<float>(cfg.model, rng);
  const CostBreakdown costs =
      CostBreakdown::merge(count_params(m), count_flops(m, input_size, input_size));

  std::printf("%-16s %14s %16s %16s\n", "category", "params", "macs", "elementwise");
  const std::pair<const char *, const CostBreakdown::Entry *> rows[] = {
      {"rfa", &costs.rfa},
      {"small_conv", &costs.small_conv},
      {"ffn", &costs.ffn},
      {"stem_downsample", &costs.stem_downsample},
      {"head", &costs.head},
  };
  for (const auto &[name, entry] : rows)
    std::printf("%-16s %14lld %16lld %16lld\n", name, static_cast<long long>(entry->params),
                static_cast<long long>(entry->macs), static_cast<long long>(entry->elementwise));
  const CostBreakdown::Entry total = costs.total();
  std::printf("%-16s %14lld %16lld %16lld\n", "total", static_cast<long long>(total.params),
              static_cast<long long>(total.macs), static_cast<long long>(total.elementwise));
  std::printf("input %dx%d  params %.3fM  macs %.4fG\n", input_size, input_size,
              total.params / 1e6, total.macs / 1e9);

  if (!opts.out.empty())
    write_describe_csv(opts.out, costs);
  return 0;
}

// ---------------------------------------------------------------------------

template <typename T>
ErfMap erf_for(const ParsedConfig &cfg, int samples, int input_size, InputKind kind,
               const std::string &image_dir) {
  Rng rng(cfg.seed);
  Model<T> m = build_model<T>(cfg.model, rng);

  ErfProgressFn progress = [](int done, int total) {
    if (done == total || done % 32 == 0)
      std::fprintf(stderr, "erf: sample %d/%d\n", done, total);
  };

  std::vector<Tensor4<T>> images;
  if (kind == InputKind::kImageDir) {
    std::vector<std::filesystem::path> paths;
    if (std::filesystem::is_directory(image_dir))
      for (const auto &entry : std::filesystem::directory_iterator(image_dir))
        if (entry.path().extension() == ".ppm")
          paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    for (const auto &p : paths) {
      Tensor4<T> img = read_ppm<T>(p.string());
      if (img.shape().h != input_size || img.shape().w != input_size)
        throw IoError("image " + p.string() + " is " + img.shape().to_string() + ", expected " +
                      std::to_string(input_size) + "x" + std::to_string(input_size));
      images.push_back(std::move(img));
    }
    if (images.empty())
      throw IoError("no readable .ppm images in " + image_dir);
  }
  return compute_erf_model(m, samples, kind, cfg.seed, input_size, input_size, images,
                           env_threads(), progress);
}

void write_erf_outputs(const std::string &base, const ErfMap &map, const AgdMetrics &metrics,
                       double gamma) {
  write_pgm(render_heatmap(map, gamma), base + ".pgm");

  {
    std::ofstream out = open_out(base + ".metrics.csv");
    const auto [ah, aw] = map.argmax();
    out << "sample_count,input_kind,center_h,center_w,argmax_h,argmax_w,peak,"
           "monotonicity_violation,gauss_sigma,gauss_r2,area_ratio_20,area_ratio_50,"
           "area_ratio_90\n";
    out << map.sample_count << ","
        << (map.input_kind == InputKind::kRandomUniform ? "random_uniform" : "image_dir") << ","
        << map.center_h << "," << map.center_w << "," << ah << "," << aw << "," << fmt(map.max())
        << "," << fmt(metrics.monotonicity_violation) << "," << fmt(metrics.gauss_sigma) << ","
        << fmt(metrics.gauss_r2) << "," << fmt(metrics.area_ratio.at(0.2)) << ","
        << fmt(metrics.area_ratio.at(0.5)) << "," << fmt(metrics.area_ratio.at(0.9)) << "\n";
  }
  {
    std::ofstream out = open_out(base + ".profile.csv");
    out << "radius,mean_value\n";
    for (const auto &[r, v] : metrics.radial_profile)
      out << fmt(r) << "," << fmt(v) << "\n";
  }
  {
    std::ofstream out = open_out(base + ".grid.csv");
    for (int r = 0; r < map.h; ++r) {
      for (int c = 0; c < map.w; ++c)
        out << (c ? "," : "") << fmt(map.at(r, c));
      out << "\n";
    }
  }
}

int cmd_erf(const CommonOpts &opts, int samples, int input_size, const std::string &kind_name,
            const std::string &image_dir, double gamma) {
  const ParsedConfig cfg = load_with_seed(opts);
  if (opts.out.empty()) {
    std::cerr << "error: erf requires --out BASE\n";
    return 2;
  }
  const InputKind kind =
      kind_name == "image-dir" ? InputKind::kImageDir : InputKind::kRandomUniform;

  std::cerr << "erf: " << samples << " samples at " << input_size << "x" << input_size << " ("
            << opts.precision << ", threads " << env_threads() << ")\n";
  const ErfMap map = opts.precision == "f64"
                         ? erf_for<double>(cfg, samples, input_size, kind, image_dir)
                         : erf_for<float>(cfg, samples, input_size, kind, image_dir);
  const AgdMetrics metrics = agd_metrics(map);
  write_erf_outputs(opts.out, map, metrics, gamma);

  const auto [ah, aw] = map.argmax();
  std::printf("erf: %d samples, argmax (%d,%d), center (%d,%d)\n", map.sample_count, ah, aw,
              map.center_h, map.center_w);
  std::printf("agd: monotonicity_violation %.4f, gauss_sigma %.3f, gauss_r2 %.4f\n",
              metrics.monotonicity_violation, metrics.gauss_sigma, metrics.gauss_r2);
  return 0;
}

// ---------------------------------------------------------------------------

struct SupportCase {
  std::string name;
  int expected;
  SupportBox box;
  bool pass() const {
    return !box.touches_border && box.height() == expected && box.width() == expected;
  }
};

int cmd_rf_support(const CommonOpts &opts) {
  const ParsedConfig cfg = load_with_seed(opts);
  RfaConfig rfa_cfg = cfg.model.rfa.with_channels(2 * (cfg.model.rfa.layer_count + 1));
  rfa_cfg.validate();
  const TheoreticalRf rf = theoretical_rf(rfa_cfg);
  Rng rng(cfg.seed);

  ParamStore<double> store;
  const RfaRefs refs = build_rfa(store, "rfa", rfa_cfg, rng, Category::kRfa,
                                 InitSpec{InitSpec::Kind::kUniform, 0.02, 0.1, 0.3, true});

  const int amp_c = rfa_cfg.layer_count * rfa_cfg.head_channels();
  const int input_single = rf.amp_chain_rf + 6;
  ForwardFn single = [&](Tape<double> &tape, NodeId x) {
    Bound<double> b = bind(tape, store);
    return rfa_forward(b, refs, x, rfa_cfg);
  };
  std::vector<SupportBox> boxes = empirical_rf_support(
      single, {1, rfa_cfg.channels, input_single, input_single},
      {{"amp", 0, amp_c}, {"dis", amp_c, rfa_cfg.channels}}, rng);

  std::vector<SupportCase> cases;
  cases.push_back({"rfa.amp_chain", rf.amp_chain_rf, boxes[0]});
  cases.push_back({"rfa.dis_last", rf.dis_rf_per_layer.back(), boxes[1]});

  // Two stacked aggregators: the amp-of-amp path doubles the growth.
  ParamStore<double> store2;
  const RfaRefs refs2 = build_rfa(store2, "rfa2", rfa_cfg, rng, Category::kRfa,
                                  InitSpec{InitSpec::Kind::kUniform, 0.02, 0.1, 0.3, true});
  const int stacked_rf = 2 * rf.amp_chain_rf - 1;
  const int input_stacked = stacked_rf + 6;
  ForwardFn stacked = [&](Tape<double> &tape, NodeId x) {
    Bound<double> b1 = bind(tape, store);
    Bound<double> b2 = bind(tape, store2);
    return rfa_forward(b2, refs2, rfa_forward(b1, refs, x, rfa_cfg), rfa_cfg);
  };
  std::vector<SupportBox> boxes2 =
      empirical_rf_support(stacked, {1, rfa_cfg.channels, input_stacked, input_stacked},
                           {{"amp", 0, amp_c}}, rng);
  cases.push_back({"stacked.amp_chain", stacked_rf, boxes2[0]});

  bool all_pass = true;
  std::printf("%-20s %10s %12s %8s\n", "group", "expected", "measured", "status");
  for (const SupportCase &c : cases) {
    all_pass = all_pass && c.pass();
    std::printf("%-20s %7dx%-3d %8dx%-4d %8s\n", c.name.c_str(), c.expected, c.expected,
                c.box.height(), c.box.width(), c.pass() ? "PASS" : "FAIL");
    if (c.box.touches_border)
      std::printf("  warning: %s support touches the input border\n", c.name.c_str());
  }
  if (!opts.out.empty()) {
    std::ofstream out = open_out(opts.out);
    out << "group,expected,measured_h,measured_w,touches_border,pass\n";
    for (const SupportCase &c : cases)
      out << c.name << "," << c.expected << "," << c.box.height() << "," << c.box.width() << ","
          << (c.box.touches_border ? 1 : 0) << "," << (c.pass() ? 1 : 0) << "\n";
  }
  std::printf("rf-support: %s\n", all_pass ? "PASS" : "FAIL");
  return all_pass ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct GradCase {
  std::string name;
  double tol;
  GradCheckReport report;
};

int cmd_grad_check(const CommonOpts &opts, bool full_model) {
  const ParsedConfig cfg = load_with_seed(opts);
  Rng rng(cfg.seed);
  std::vector<GradCase> cases;
  const double eps = 1e-4;

  auto check = [&](const std::string &name, double tol, const GradCheckOp &op,
                   std::vector<Shape4> shapes, GradCheckOptions opt = {}) {
    cases.push_back({name, tol, grad_check(op, std::move(shapes), rng, eps, tol, opt)});
  };

  using kernels::ConvMeta;
  check("conv2d.depthwise7", 1e-5,
        [](Tape<double> &t, const std::vector<NodeId> &in) {
          return ops::conv2d(t, in[0], in[1], in[2], ConvMeta{1, 3, 4});
        },
        {{1, 4, 9, 9}, {4, 1, 7, 7}, {1, 4, 1, 1}});
  check("conv2d.pointwise", 1e-5,
        [](Tape<double> &t, const std::vector<NodeId> &in) {
          return ops::conv2d(t, in[0], in[1], in[2], ConvMeta{1, 0, 1});
        },
        {{1, 4, 5, 5}, {8, 4, 1, 1}, {1, 8, 1, 1}});
  check("conv2d.strided", 1e-5,
        [](Tape<double> &t, const std::vector<NodeId> &in) {
          return ops::conv2d(t, in[0], in[1], in[2], ConvMeta{2, 1, 1});
        },
        {{1, 3, 8, 8}, {5, 3, 3, 3}, {1, 5, 1, 1}});
  {
    GradCheckOptions opt;
    opt.resample_below = 1e-3;
    check("gelu", 1e-5,
          [](Tape<double> &t, const std::vector<NodeId> &in) { return ops::gelu(t, in[0]); },
          {{2, 3, 5, 5}}, opt);
  }
  check("layer_norm", 1e-5,
        [](Tape<double> &t, const std::vector<NodeId> &in) {
          return ops::layer_norm_channels(t, in[0], in[1], in[2]);
        },
        {{2, 5, 3, 3}, {1, 5, 1, 1}, {1, 5, 1, 1}});
  check("elementwise_mul", 1e-5,
        [](Tape<double> &t, const std::vector<NodeId> &in) {
          return ops::elementwise_mul(t, in[0], in[1]);
        },
        {{1, 3, 4, 4}, {1, 3, 4, 4}});
  check("add", 1e-5,
        [](Tape<double> &t, const std::vector<NodeId> &in) { return ops::add(t, in[0], in[1]); },
        {{1, 3, 4, 4}, {1, 3, 4, 4}});
  check("scale_channels", 1e-5,
        [](Tape<double> &t, const std::vector<NodeId> &in) {
          return ops::scale_channels(t, in[0], in[1]);
        },
        {{2, 4, 3, 3}, {1, 4, 1, 1}});
  check("global_avg_pool", 1e-5,
        [](Tape<double> &t, const std::vector<NodeId> &in) {
          return ops::global_avg_pool(t, in[0]);
        },
        {{2, 3, 4, 4}});
  check("linear", 1e-5,
        [](Tape<double> &t, const std::vector<NodeId> &in) {
          return ops::linear(t, in[0], in[1], in[2]);
        },
        {{2, 6, 1, 1}, {4, 6, 1, 1}, {1, 4, 1, 1}});

  // Composites from the configured RFA geometry at reduced channels.
  RfaConfig rfa_small = cfg.model.rfa.with_channels(2 * (cfg.model.rfa.layer_count + 1));
  rfa_small.validate();
  {
    ParamStore<double> store;
    const RfaRefs refs = build_rfa(store, "rfa", rfa_small, rng);
    GradCheckOptions opt;
    opt.max_coords_per_input = 64;
    const int c = rfa_small.head_channels();
    check("layer_operator", 1e-4,
          [&](Tape<double> &t, const std::vector<NodeId> &in) {
            Bound<double> b = bind(t, store);
            return layer_operator_forward(b, refs.layers[0], in[0], in[1], 1, rfa_small);
          },
          {{1, c, 15, 15}, {1, c, 15, 15}}, opt);
    const int input_hw = theoretical_rf(rfa_small).amp_chain_rf + 6;
    check("rfa", 1e-4,
          [&](Tape<double> &t, const std::vector<NodeId> &in) {
            Bound<double> b = bind(t, store);
            return rfa_forward(b, refs, in[0], rfa_small);
          },
          {{1, rfa_small.channels, input_hw, input_hw}}, opt);
  }
  {
    ModelConfig block_cfg = cfg.model;
    block_cfg.layer_scale_init = 0.05; // measurable branch gradients
    Rng block_rng(cfg.seed);
    Model<double> m = build_model<double>(block_cfg, block_rng);
    GradCheckOptions opt;
    opt.max_coords_per_input = 64;
    check("basic_block", 1e-4,
          [&](Tape<double> &t, const std::vector<NodeId> &in) {
            Bound<double> b = bind(t, m.params);
            return basic_block_forward(b, m.refs.stages[0][0], in[0], block_cfg.stage_rfa(0));
          },
          {{1, block_cfg.stage_channels[0], 16, 16}}, opt);

    if (full_model) {
      GradCheckOptions mopt;
      mopt.max_coords_per_input = 48;
      check("model", 1e-3,
            [&](Tape<double> &t, const std::vector<NodeId> &in) {
              Bound<double> b = bind(t, m.params);
              return model_forward(b, m, in[0]);
            },
            {{1, 3, 64, 64}}, mopt);
    }
  }

  bool all_pass = true;
  std::printf("%-18s %14s %10s %8s\n", "check", "max_rel_err", "tolerance", "status");
  for (const GradCase &c : cases) {
    all_pass = all_pass && c.report.pass;
    std::printf("%-18s %14.3e %10.0e %8s\n", c.name.c_str(), c.report.max_rel_err, c.tol,
                c.report.pass ? "PASS" : "FAIL");
  }
  if (!opts.out.empty()) {
    std::ofstream out = open_out(opts.out);
    out << "check,max_rel_err,tolerance,pass\n";
    for (const GradCase &c : cases)
      out << c.name << "," << fmt(c.report.max_rel_err) << "," << fmt(c.tol) << ","
          << (c.report.pass ? 1 : 0) << "\n";
  }
  std::printf("grad-check: %s\n", all_pass ? "PASS" : "FAIL");
  return all_pass ? 0 : 1;
}

// ---------------------------------------------------------------------------

int cmd_overfit(const CommonOpts &opts, int steps, double lr, int samples, int input_size) {
  const ParsedConfig cfg = load_with_seed(opts);
  std::vector<double> losses =
      opts.precision == "f64"
          ? run_overfit<double>(cfg.model, cfg.seed, samples, input_size, steps, lr)
          : run_overfit<float>(cfg.model, cfg.seed, samples, input_size, steps,
                               static_cast<float>(lr));
  if (!opts.out.empty()) {
    std::ofstream out = open_out(opts.out);
    out << "step,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i)
      out << i << "," << fmt(losses[i]) << "\n";
  }
  std::printf("overfit: %d steps, lr %g, %d samples at %dx%d: loss %.6f -> %.6f\n", steps, lr,
              samples, input_size, input_size, losses.front(), losses.back());
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_render(const std::string &grid_path, const std::string &out_path, double gamma) {
  std::ifstream in(grid_path, std::ios::binary);
  if (!in)
    throw IoError("cannot open " + grid_path);
  ErfMap map;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    int cols = 0;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos)
        comma = line.size();
      try {
        map.grid.push_back(std::stod(line.substr(pos, comma - pos)));
      } catch (const std::exception &) {
        throw IoError("malformed grid value in " + grid_path);
      }
      ++cols;
      pos = comma + 1;
    }
    if (map.w == 0)
      map.w = cols;
    else if (cols != map.w)
      throw IoError("ragged rows in " + grid_path);
    ++map.h;
  }
  if (map.grid.empty())
    throw IoError("empty grid in " + grid_path);
  write_pgm(render_heatmap(map, gamma), out_path);
  std::printf("render: %dx%d -> %s (gamma %g)\n", map.h, map.w, out_path.c_str(), gamma);
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"UniConvNet receptive-field analysis toolkit"};
  app.require_subcommand(1);

  CommonOpts describe_opts, erf_opts, rf_opts, grad_opts, overfit_opts;

  auto *describe = app.add_subcommand("describe", "Parameter and MAC accounting (CSV columns: "
                                                  "category,params,macs,elementwise_ops)");
  add_common(describe, describe_opts, false);
  int describe_input = 224;
  describe->add_option("--input-size", describe_input, "Input extent (divisible by 32)");

  auto *erf = app.add_subcommand(
      "erf",
      "Effective receptive field of the stage-4 features; writes BASE.pgm, BASE.metrics.csv "
      "(sample_count,input_kind,center_h,center_w,argmax_h,argmax_w,peak,monotonicity_violation,"
      "gauss_sigma,gauss_r2,area_ratio_20,area_ratio_50,area_ratio_90), BASE.profile.csv "
      "(radius,mean_value), BASE.grid.csv (raw map)");
  add_common(erf, erf_opts);
  int erf_samples = 256, erf_input = 64;
  double erf_gamma = 0.5;
  std::string erf_kind = "random", erf_image_dir;
  erf->add_option("--samples", erf_samples, "Number of input samples");
  erf->add_option("--input-size", erf_input, "Input extent (divisible by 32)");
  erf->add_option("--input-kind", erf_kind, "random | image-dir")
      ->check(CLI::IsMember({"random", "image-dir"}));
  erf->add_option("--image-dir", erf_image_dir, "Directory of .ppm inputs (P6, input-size sized)");
  erf->add_option("--gamma", erf_gamma, "Heatmap gamma");

  auto *rf = app.add_subcommand(
      "rf-support", "Theoretical vs measured gradient-support boxes (always 64-bit); CSV columns: "
                    "group,expected,measured_h,measured_w,touches_border,pass");
  add_common(rf, rf_opts, false);

  auto *grad = app.add_subcommand(
      "grad-check", "Finite-difference gradient suite (always 64-bit); CSV columns: "
                    "check,max_rel_err,tolerance,pass");
  add_common(grad, grad_opts, false);
  bool grad_full_model = false;
  grad->add_flag("--full-model", grad_full_model, "Include the (slow) whole-model check");

  auto *overfit = app.add_subcommand("overfit", "Two-class learnability smoke run; CSV columns: "
                                                "step,loss");
  add_common(overfit, overfit_opts);
  int overfit_steps = 300, overfit_samples = 16, overfit_input = 32;
  double overfit_lr = 0.05;
  overfit->add_option("--steps", overfit_steps, "Gradient steps");
  overfit->add_option("--lr", overfit_lr, "Learning rate");
  overfit->add_option("--samples", overfit_samples, "Batch size");
  overfit->add_option("--input-size", overfit_input, "Input extent (divisible by 32)");

  auto *render = app.add_subcommand("render", "Re-render a saved ERF grid CSV as a PGM heatmap");
  std::string render_grid, render_out;
  double render_gamma = 0.5;
  render->add_option("--grid", render_grid, "Grid CSV from the erf command")->required();
  render->add_option("--out", render_out, "Output PGM path")->required();
  render->add_option("--gamma", render_gamma, "Heatmap gamma");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (describe->parsed())
      return cmd_describe(describe_opts, describe_input);
    if (erf->parsed())
      return cmd_erf(erf_opts, erf_samples, erf_input, erf_kind, erf_image_dir, erf_gamma);
    if (rf->parsed())
      return cmd_rf_support(rf_opts);
    if (grad->parsed())
      return cmd_grad_check(grad_opts, grad_full_model);
    if (overfit->parsed())
      return cmd_overfit(overfit_opts, overfit_steps, overfit_lr, overfit_samples, overfit_input);
    if (render->parsed())
      return cmd_render(render_grid, render_out, render_gamma);
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
