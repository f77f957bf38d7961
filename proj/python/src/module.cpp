#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>

#include "flamecam/archive.hpp"
#include "flamecam/complexity.hpp"
#include "flamecam/error.hpp"
#include "flamecam/geometry.hpp"
#include "flamecam/graph.hpp"
#include "flamecam/infer.hpp"
#include "flamecam/metrics.hpp"
#include "flamecam/pipeline.hpp"
#include "flamecam/prune.hpp"
#include "flamecam/quantize.hpp"
#include "flamecam/synth.hpp"

namespace py = pybind11;
using namespace flamecam;

namespace {

using U8 = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;
using F32 = py::array_t<float, py::array::c_style | py::array::forcecast>;

Image to_image(const U8& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw py::value_error("image must be HxW or HxWxC");
  Image im = make_image(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                        a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1);
  std::copy(a.data(), a.data() + a.size(), im.pixels.begin());
  return im;
}

py::array_t<uint8_t> from_image(const Image& im) {
  std::vector<py::ssize_t> shape{im.height, im.width};
  if (im.channels != 1) shape.push_back(im.channels);
  py::array_t<uint8_t> out(shape);
  std::copy(im.pixels.begin(), im.pixels.end(), out.mutable_data());
  return out;
}

SegMask to_mask(const U8& a) {
  if (a.ndim() != 2) throw py::value_error("mask must be HxW");
  SegMask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.labels.begin());
  return m;
}

py::array_t<uint8_t> from_mask(const SegMask& m) {
  py::array_t<uint8_t> out({m.height, m.width});
  std::copy(m.labels.begin(), m.labels.end(), out.mutable_data());
  return out;
}

Tensor to_tensor(const F32& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy(t.f32().begin(), t.f32().end(), out.mutable_data());
  return out;
}

ActShape to_shape(const std::array<int64_t, 3>& s) { return {s[0], s[1], s[2]}; }

py::dict geometry_dict(const FlameGeometry& g) {
  py::dict d;
  d["length_m"] = g.length_m;
  d["liftoff_m"] = g.liftoff_m;
  d["area_m2"] = g.area_m2;
  d["flame_px"] = g.flame_px_count;
  d["bbox"] = py::make_tuple(g.bounding_box.x0, g.bounding_box.y0, g.bounding_box.x1,
                             g.bounding_box.y1);
  d["components"] = g.component_count;
  d["zone_px"] = g.zone_px_count;
  return d;
}

SceneCalib make_calib(double mpp, int nozzle_x, int nozzle_y, bool vertical,
                      int64_t min_px) {
  SceneCalib c;
  c.metres_per_pixel = mpp;
  c.nozzle_x = nozzle_x;
  c.nozzle_y = nozzle_y;
  c.axis = vertical ? FlameAxis::kVertical : FlameAxis::kHorizontal;
  c.min_component_px = min_px;
  return c;
}

std::vector<Tensor> to_frames(const std::vector<F32>& xs) {
  std::vector<Tensor> out;
  for (const auto& x : xs) out.push_back(to_tensor(x));
  return out;
}

py::dict stats_dict(const PipelineStats& s) {
  py::dict d;
  d["fps"] = s.throughput_fps;
  d["frames"] = s.frames_processed;
  d["dropped"] = s.frames_dropped;
  py::dict stages;
  for (int i = 0; i < kNumStages; ++i) {
    const auto& l = s.stages[i];
    py::dict st;
    st["mean_ms"] = l.mean_ms;
    st["p50_ms"] = l.p50_ms;
    st["p95_ms"] = l.p95_ms;
    st["min_ms"] = l.min_ms;
    stages[kStageNames[i]] = st;
  }
  d["stages"] = stages;
  py::list geo;
  for (const auto& f : s.frames) {
    if (f.geometry) geo.append(geometry_dict(*f.geometry));
    else geo.append(py::none());
  }
  d["geometry"] = geo;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Flame segmentation, compression and measurement core";

  static py::exception<Error> exc(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(exc.ptr(), (std::string(errc_name(e.code())) + ": " + e.what()).c_str());
    }
  });

  py::class_<CalibrationStats>(m, "CalibrationStats")
      .def_readonly("frames", &CalibrationStats::frames)
      .def("to_json", &stats_to_json)
      .def_static("from_json", &stats_from_json)
      .def("merge", &merge_stats);

  py::class_<ModelGraph>(m, "Model")
      .def_static(
          "unet",
          [](int depth, int64_t base_filters, std::array<int64_t, 3> input_shape,
             bool batchnorm, uint64_t seed, double dead_fraction) {
            UnetOptions o;
            o.depth = depth;
            o.base_filters = base_filters;
            o.input_shape = to_shape(input_shape);
            o.with_batchnorm = batchnorm;
            o.seed = seed;
            o.dead_fraction = dead_fraction;
            return build_unet(o);
          },
          py::arg("depth") = 2, py::arg("base_filters") = 8,
          py::arg("input_shape") = std::array<int64_t, 3>{64, 64, 3},
          py::arg("batchnorm") = false, py::arg("seed") = 1, py::arg("dead_fraction") = 0.0)
      .def_static("load", &read_model_archive, py::arg("path"))
      .def("save", [](const ModelGraph& g, const std::string& p) { write_model_archive(g, p); })
      .def_static("from_bytes", [](const py::bytes& b) {
        const std::string s = b;
        return decode_model_archive(std::vector<uint8_t>(s.begin(), s.end()));
      })
      .def("to_bytes", [](const ModelGraph& g) {
        const auto v = encode_model_archive(g);
        return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
      })
      .def_property_readonly("input_shape", [](const ModelGraph& g) {
        return py::make_tuple(g.input_shape.h, g.input_shape.w, g.input_shape.c);
      })
      .def_property_readonly("num_classes", [](const ModelGraph& g) { return g.num_classes; })
      .def_property_readonly("quantized", &ModelGraph::quantized)
      .def_property_readonly("has_batchnorm", &ModelGraph::has_batchnorm)
      .def_property_readonly("num_layers", [](const ModelGraph& g) { return g.layers.size(); })
      .def_property_readonly("param_count", &count_parameters)
      .def("fold_batchnorm", &fold_batchnorm)
      .def("equalize", &equalize_cross_layer, py::arg("passes") = 30)
      .def("calibrate",
           [](const ModelGraph& g, const std::vector<F32>& frames, bool histogram) {
             return calibrate(g, to_frames(frames), histogram);
           },
           py::arg("frames"), py::arg("histogram") = false)
      .def("quantize",
           [](const ModelGraph& g, const CalibrationStats& s, const std::string& scheme,
              double percentile) {
             QuantizeOptions o;
             if (scheme == "minmax") o.scheme = CalibrationScheme::kMinMax;
             else if (scheme == "percentile") o.scheme = CalibrationScheme::kPercentile;
             else throw py::value_error("scheme must be 'minmax' or 'percentile'");
             o.percentile = percentile;
             return quantize_model(g, s, o);
           },
           py::arg("stats"), py::arg("scheme") = "minmax", py::arg("percentile") = 99.9)
      .def("predict",
           [](const ModelGraph& g, const F32& x) { return from_tensor(run_model(g, to_tensor(x))); },
           py::arg("input"), "Class probabilities (H, W, classes) for a float (H, W, 3) input")
      .def("segment",
           [](const ModelGraph& g, const U8& frame) {
             const Tensor x = preprocess(to_bgr_frame(to_image(frame)),
                                         static_cast<int>(g.input_shape.h),
                                         static_cast<int>(g.input_shape.w));
             return from_mask(postprocess(run_model(g, x)));
           },
           py::arg("frame"), "Mask for a uint8 frame at twice the model resolution")
      .def("complexity",
           [](const ModelGraph& g) {
             const auto r = model_complexity(g);
             py::list rows;
             for (const auto& row : r.rows) {
               py::dict d;
               d["layer"] = row.layer_id;
               d["kind"] = layer_kind_name(row.kind);
               d["macs"] = row.cost.macs;
               d["flops"] = row.cost.flops;
               rows.append(d);
             }
             py::dict out;
             out["rows"] = rows;
             out["macs"] = r.total.macs;
             out["flops"] = r.total.flops;
             return out;
           })
      .def("complexity_csv", [](const ModelGraph& g) { return report_to_csv(model_complexity(g)); })
      .def(
          "prune",
          [](const ModelGraph& g, const std::vector<F32>& frames, const std::vector<U8>& reference,
             double step, double max_drop, int max_rounds) {
            PruneOptions o;
            o.step_fraction = step;
            o.max_drop = max_drop;
            o.max_rounds = max_rounds;
            std::vector<SegMask> ref;
            for (const auto& r : reference) ref.push_back(to_mask(r));
            PruneLoopResult res;
            {
              const auto xs = to_frames(frames);
              py::gil_scoped_release nogil;
              res = prune_loop(g, xs, ref, o);
            }
            py::list hist;
            for (const auto& h : res.history) {
              py::dict d;
              d["round"] = h.round;
              d["removed"] = h.removed;
              d["params"] = h.params;
              d["macs"] = h.macs;
              d["flops"] = h.flops;
              d["dice"] = h.dice;
              d["accepted"] = h.accepted;
              hist.append(d);
            }
            return py::make_tuple(res.graph, hist);
          },
          py::arg("frames"), py::arg("reference"), py::arg("step") = 0.03,
          py::arg("max_drop") = 0.03, py::arg("max_rounds") = 1000)
      .def("bench",
           [](const ModelGraph& g, int reps) {
             const auto r = bench_model(g, g.input_shape, reps);
             return py::make_tuple(r.mean_ms, r.min_ms);
           },
           py::arg("reps") = 10)
      .def(py::self == py::self);

  m.def("preprocess",
        [](const U8& frame, int h, int w) {
          return from_tensor(preprocess(to_bgr_frame(to_image(frame)), h, w));
        },
        py::arg("frame"), py::arg("height") = 240, py::arg("width") = 320);
  m.def("postprocess", [](const F32& probs) { return from_mask(postprocess(to_tensor(probs))); });

  m.def("class_weight", &class_weight);
  m.def(
      "dice",
      [](const U8& p, const U8& t, bool flame_only) {
        return dice_macro(to_mask(p), to_mask(t),
                          flame_only ? MacroScope::kFlameOnly : MacroScope::kAllClasses);
      },
      py::arg("pred"), py::arg("truth"), py::arg("flame_only") = false);
  m.def(
      "jaccard",
      [](const U8& p, const U8& t, bool flame_only) {
        return jaccard_macro(to_mask(p), to_mask(t),
                             flame_only ? MacroScope::kFlameOnly : MacroScope::kAllClasses);
      },
      py::arg("pred"), py::arg("truth"), py::arg("flame_only") = false);
  m.def("dice_per_class", [](const U8& p, const U8& t) { return dice_per_class(to_mask(p), to_mask(t)); });
  m.def("mape", [](const std::vector<double>& p, const std::vector<double>& t) { return mape(p, t); });
  m.def("rmspe", [](const std::vector<double>& p, const std::vector<double>& t) { return rmspe(p, t); });

  m.def("connected_components", [](const U8& binary) {
    if (binary.ndim() != 2) throw py::value_error("binary image must be HxW");
    const int h = static_cast<int>(binary.shape(0)), w = static_cast<int>(binary.shape(1));
    const auto c = connected_components(std::vector<uint8_t>(binary.data(), binary.data() + binary.size()), h, w);
    py::array_t<int32_t> labels({h, w});
    std::copy(c.labels.begin(), c.labels.end(), labels.mutable_data());
    return py::make_tuple(labels, c.sizes);
  });
  m.def(
      "characterize",
      [](const U8& mask, double mpp, int nozzle_x, int nozzle_y, bool vertical,
         int64_t min_px) -> py::object {
        const auto g = characterize(to_mask(mask), make_calib(mpp, nozzle_x, nozzle_y, vertical, min_px));
        if (!g) return py::none();
        return geometry_dict(*g);
      },
      py::arg("mask"), py::arg("mpp"), py::arg("nozzle_x"), py::arg("nozzle_y"),
      py::arg("vertical") = false, py::arg("min_px") = 50);

  m.def(
      "generate_scene",
      [](uint64_t seed, int height, int width, int nozzle_x, int nozzle_y, int liftoff_px,
         int length_px, int max_width_px, double noise_sigma, double mpp) {
        FlameSceneSpec s;
        s.seed = seed;
        s.height = height;
        s.width = width;
        s.nozzle_x = nozzle_x;
        s.nozzle_y = nozzle_y;
        s.liftoff_px = liftoff_px;
        s.length_px = length_px;
        s.max_width_px = max_width_px;
        s.noise_sigma = noise_sigma;
        s.metres_per_pixel = mpp;
        const FlameScene sc = generate_scene(s);
        return py::make_tuple(from_image(sc.frame), from_mask(sc.mask), geometry_dict(sc.truth));
      },
      py::arg("seed") = 1, py::arg("height") = 480, py::arg("width") = 640,
      py::arg("nozzle_x") = 40, py::arg("nozzle_y") = 240, py::arg("liftoff_px") = 40,
      py::arg("length_px") = 300, py::arg("max_width_px") = 120, py::arg("noise_sigma") = 6.0,
      py::arg("mpp") = 0.01);
  m.def(
      "write_dataset",
      [](const std::string& dir, int n, uint64_t seed, int height, int width) {
        FlameSceneSpec s;
        s.seed = seed;
        s.height = height;
        s.width = width;
        s.nozzle_x = width / 16;
        s.nozzle_y = height / 2;
        return write_dataset(dir, n, s, default_split(n)).size();
      },
      py::arg("dir"), py::arg("n"), py::arg("seed") = 1, py::arg("height") = 480,
      py::arg("width") = 640);

  m.def(
      "run_pipeline",
      [](const std::string& mode, int frames, const ModelGraph* model,
         int model_height, int model_width, int warmup, size_t queue,
         std::array<double, kNumStages> delays_ms, uint64_t seed) {
        PipelineConfig c;
        if (mode == "single") c.mode = PipelineMode::kSingle;
        else if (mode == "multi") c.mode = PipelineMode::kMulti;
        else throw py::value_error("mode must be 'single' or 'multi'");
        c.frame_count = frames;
        if (model) c.model = std::make_shared<const ModelGraph>(*model);
        c.model_height = c.model ? static_cast<int>(c.model->input_shape.h) : model_height;
        c.model_width = c.model ? static_cast<int>(c.model->input_shape.w) : model_width;
        c.synthetic_spec.height = 2 * c.model_height;
        c.synthetic_spec.width = 2 * c.model_width;
        c.synthetic_spec.nozzle_x = c.synthetic_spec.width / 16;
        c.synthetic_spec.nozzle_y = c.synthetic_spec.height / 2;
        c.synthetic_spec.length_px = c.synthetic_spec.width / 2;
        c.synthetic_spec.liftoff_px = c.synthetic_spec.width / 16;
        c.synthetic_spec.max_width_px = c.synthetic_spec.height / 4;
        c.synthetic_spec.seed = seed;
        c.warmup_frames = warmup;
        c.queue_capacity = queue;
        c.stage_delay_ms = delays_ms;
        PipelineStats s;
        {
          py::gil_scoped_release nogil;
          s = run_pipeline(c);
        }
        return stats_dict(s);
      },
      py::arg("mode") = "single", py::arg("frames") = 50, py::arg("model") = nullptr,
      py::arg("model_height") = 240, py::arg("model_width") = 320, py::arg("warmup") = 10,
      py::arg("queue") = 4, py::arg("delays_ms") = std::array<double, kNumStages>{},
      py::arg("seed") = 1);
}
