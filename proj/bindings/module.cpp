// Python bindings for the f32 stack: the core operators, the model, and the
// receptive-field analysis entry points.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "uniconv/analysis.hpp"
#include "uniconv/io.hpp"
#include "uniconv/model.hpp"

namespace py = pybind11;
using namespace uniconv;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor4<float> to_tensor(const FloatArray &arr, const char *name) {
  if (arr.ndim() != 4)
    throw ShapeError(std::string(name) + " must be a rank-4 (B,C,H,W) array");
  Shape4 shape{static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
               static_cast<int>(arr.shape(2)), static_cast<int>(arr.shape(3))};
  std::vector<float> data(arr.data(), arr.data() + arr.size());
  return Tensor4<float>(shape, std::move(data));
}

py::array_t<float> from_tensor(const Tensor4<float> &t) {
  const Shape4 s = t.shape();
  py::array_t<float> out({s.b, s.c, s.h, s.w});
  std::copy(t.data(), t.data() + t.numel(), out.mutable_data());
  return out;
}

py::dict breakdown_to_dict(const CostBreakdown &costs) {
  py::dict out;
  auto entry = [](const CostBreakdown::Entry &e) {
    py::dict d;
    d["params"] = e.params;
    d["macs"] = e.macs;
    d["elementwise_ops"] = e.elementwise;
    return d;
  };
  out["rfa"] = entry(costs.rfa);
  out["small_conv"] = entry(costs.small_conv);
  out["ffn"] = entry(costs.ffn);
  out["stem_downsample"] = entry(costs.stem_downsample);
  out["head"] = entry(costs.head);
  out["total"] = entry(costs.total());
  return out;
}

py::dict metrics_to_dict(const AgdMetrics &m) {
  py::dict out;
  out["monotonicity_violation"] = m.monotonicity_violation;
  out["gauss_sigma"] = m.gauss_sigma;
  out["gauss_r2"] = m.gauss_r2;
  py::dict ratios;
  for (const auto &[threshold, ratio] : m.area_ratio)
    ratios[py::float_(threshold)] = ratio;
  out["area_ratio"] = ratios;
  std::vector<std::pair<double, double>> profile(m.radial_profile.begin(), m.radial_profile.end());
  out["radial_profile"] = profile;
  return out;
}

// Python-facing wrapper owning a built model.
class PyModel {
public:
  PyModel(const std::string &config_json, std::optional<std::uint64_t> seed) {
    ParsedConfig cfg = parse_config(config_json);
    if (seed)
      cfg.seed = *seed;
    seed_ = cfg.seed;
    Rng rng(cfg.seed);
    model_ = build_model<float>(cfg.model, rng);
  }

  py::array_t<float> forward(const FloatArray &x) const {
    Tape<float> tape;
    Bound<float> b = bind(tape, model_.params);
    NodeId logits = model_forward(b, model_, tape.leaf(to_tensor(x, "x")));
    return from_tensor(tape.value(logits));
  }

  py::array_t<float> features(const FloatArray &x) const {
    Tape<float> tape;
    Bound<float> b = bind(tape, model_.params);
    NodeId feat = model_features_forward(b, model_, tape.leaf(to_tensor(x, "x")));
    return from_tensor(tape.value(feat));
  }

  py::dict count_params() const { return breakdown_to_dict(uniconv::count_params(model_)); }

  py::dict count_flops(int input_h, int input_w) const {
    return breakdown_to_dict(uniconv::count_flops(model_, input_h, input_w));
  }

  py::list parameters() const {
    py::list out;
    for (const auto &entry : model_.params.items()) {
      const Shape4 s = entry.value.shape();
      out.append(py::make_tuple(entry.name, py::make_tuple(s.b, s.c, s.h, s.w)));
    }
    return out;
  }

  py::array_t<double> compute_erf(int samples, int input_size, std::optional<std::uint64_t> seed,
                                  int threads) const {
    const ErfMap map = compute_erf_model(model_, samples, InputKind::kRandomUniform,
                                         seed.value_or(seed_), input_size, input_size, {}, threads);
    py::array_t<double> grid({map.h, map.w});
    std::copy(map.grid.begin(), map.grid.end(), grid.mutable_data());
    return grid;
  }

  void save_weights(const std::string &path) const { uniconv::save_weights(model_, path); }
  void load_weights(const std::string &path) { uniconv::load_weights(model_, path); }

  std::uint64_t seed() const { return seed_; }

private:
  Model<float> model_;
  std::uint64_t seed_ = 0;
};

} // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "UniConvNet layers and receptive-field analysis";

  py::register_exception<Error>(m, "UniconvError");

  m.def("kernel_schedule", &kernel_schedule, py::arg("n"),
        "Progressive large-kernel size for layer n: K = 2n + 5");

  m.def(
      "theoretical_rf",
      [](const std::vector<int> &large_kernels, int small_kernel) {
        RfaConfig cfg;
        cfg.layer_count = static_cast<int>(large_kernels.size());
        cfg.channels = 2 * (cfg.layer_count + 1);
        cfg.large_kernels = large_kernels;
        cfg.small_kernel = small_kernel;
        const TheoreticalRf rf = theoretical_rf(cfg);
        py::dict out;
        out["amp_chain_rf"] = rf.amp_chain_rf;
        out["dis_rf_per_layer"] = rf.dis_rf_per_layer;
        return out;
      },
      py::arg("large_kernels"), py::arg("small_kernel") = 3,
      "Theoretical receptive field of one aggregator");

  m.def(
      "gelu",
      [](const FloatArray &x) { return from_tensor(kernels::gelu_forward(to_tensor(x, "x"))); },
      py::arg("x"), "Exact erf-based GELU, elementwise over a (B,C,H,W) array");

  m.def(
      "conv2d",
      [](const FloatArray &x, const FloatArray &weight, std::optional<FloatArray> bias, int stride,
         int padding, int groups) {
        const Tensor4<float> xt = to_tensor(x, "x");
        const Tensor4<float> wt = to_tensor(weight, "weight");
        std::optional<Tensor4<float>> bt;
        if (bias)
          bt = to_tensor(*bias, "bias");
        return from_tensor(kernels::conv2d_forward(xt, wt, bt ? &*bt : nullptr,
                                                   kernels::ConvMeta{stride, padding, groups}));
      },
      py::arg("x"), py::arg("weight"), py::arg("bias") = py::none(), py::arg("stride") = 1,
      py::arg("padding") = 0, py::arg("groups") = 1,
      "Grouped cross-correlation; weight is (C_out, C_in/groups, Kh, Kw)");

  m.def(
      "layer_norm",
      [](const FloatArray &x, const FloatArray &gamma, const FloatArray &beta, float eps) {
        return from_tensor(kernels::layer_norm_forward(to_tensor(x, "x"), to_tensor(gamma, "gamma"),
                                                       to_tensor(beta, "beta"), eps));
      },
      py::arg("x"), py::arg("gamma"), py::arg("beta"), py::arg("eps") = 1e-6f,
      "Per-position channel LayerNorm; gamma/beta are (1,C,1,1)");

  m.def(
      "agd_metrics",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast> &grid,
         std::optional<std::pair<int, int>> center) {
        if (grid.ndim() != 2)
          throw ShapeError("grid must be a 2-d array");
        ErfMap map;
        map.h = static_cast<int>(grid.shape(0));
        map.w = static_cast<int>(grid.shape(1));
        map.grid.assign(grid.data(), grid.data() + grid.size());
        map.center_h = center ? center->first : map.h / 2;
        map.center_w = center ? center->second : map.w / 2;
        return metrics_to_dict(agd_metrics(map));
      },
      py::arg("grid"), py::arg("center") = py::none(),
      "Radial profile, Gaussian fit and area ratios of an ERF grid");

  m.def(
      "run_overfit",
      [](const std::string &config_json, int steps, double lr, int samples, int input_size,
         std::optional<std::uint64_t> seed) {
        ParsedConfig cfg = parse_config(config_json);
        if (seed)
          cfg.seed = *seed;
        return run_overfit<float>(cfg.model, cfg.seed, samples, input_size, steps,
                                  static_cast<float>(lr));
      },
      py::arg("config_json"), py::arg("steps") = 300, py::arg("lr") = 0.05,
      py::arg("samples") = 16, py::arg("input_size") = 32, py::arg("seed") = py::none(),
      "Two-class learnability smoke run; returns the per-step batch loss");

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::string &, std::optional<std::uint64_t>>(), py::arg("config_json"),
           py::arg("seed") = py::none())
      .def("forward", &PyModel::forward, py::arg("x"),
           "Logits (B, num_classes, 1, 1) for a (B,3,H,W) input")
      .def("features", &PyModel::features, py::arg("x"), "Stage-4 feature map (pre-pooling)")
      .def("count_params", &PyModel::count_params)
      .def("count_flops", &PyModel::count_flops, py::arg("input_h") = 224, py::arg("input_w") = 224)
      .def("parameters", &PyModel::parameters, "List of (name, shape) pairs")
      .def("compute_erf", &PyModel::compute_erf, py::arg("samples") = 256,
           py::arg("input_size") = 64, py::arg("seed") = py::none(), py::arg("threads") = 1)
      .def("save_weights", &PyModel::save_weights, py::arg("path"))
      .def("load_weights", &PyModel::load_weights, py::arg("path"))
      .def_property_readonly("seed", &PyModel::seed);

#ifdef UNICONV_VERSION
#define UNICONV_STR2(x) #x
#define UNICONV_STR(x) UNICONV_STR2(x)
  m.attr("__version__") = UNICONV_STR(UNICONV_VERSION);
#else
  m.attr("__version__") = "0.1.0";
#endif
}
