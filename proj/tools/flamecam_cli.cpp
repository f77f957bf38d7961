// flamecam command-line toolchain.
#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "flamecam/archive.hpp"
#include "flamecam/complexity.hpp"
#include "flamecam/error.hpp"
#include "flamecam/geometry.hpp"
#include "flamecam/infer.hpp"
#include "flamecam/metrics.hpp"
#include "flamecam/overlay.hpp"
#include "flamecam/pipeline.hpp"
#include "flamecam/prune.hpp"
#include "flamecam/quantize.hpp"
#include "flamecam/synth.hpp"

namespace fs = std::filesystem;
using namespace flamecam;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

struct CalibFlags {
  double mpp = 0.01;
  int nozzle_x = -1;
  int nozzle_y = -1;
  std::string axis = "h";
  int64_t min_px = 50;

  void add(CLI::App* app, const std::string& image = "mask") {
    app->add_option("--mpp", mpp, "Metres per pixel of the " + image);
    app->add_option("--nozzle-x", nozzle_x, "Nozzle column (default: 1/16 of width)");
    app->add_option("--nozzle-y", nozzle_y, "Nozzle row (default: half height)");
    app->add_option("--axis", axis, "Flame axis: h (+x) or v (upward)")
        ->check(CLI::IsMember({"h", "v"}));
    app->add_option("--min-px", min_px, "Minimum component size in pixels");
  }

  SceneCalib resolve(int height, int width) const {
    SceneCalib c;
    c.metres_per_pixel = mpp;
    c.nozzle_x = nozzle_x >= 0 ? nozzle_x : width / 16;
    c.nozzle_y = nozzle_y >= 0 ? nozzle_y : height / 2;
    c.axis = axis == "v" ? FlameAxis::kVertical : FlameAxis::kHorizontal;
    c.min_component_px = min_px;
    return c;
  }
};

struct DataFlags {
  std::string dir;
  std::string split = "train";
  int limit = 16;

  void add(CLI::App* app, bool required = true) {
    auto* o = app->add_option("--data", dir, "Dataset directory (with manifest.csv)");
    if (required) o->required();
    app->add_option("--split", split, "Split to read: train, val, test or all");
    app->add_option("--limit", limit, "Maximum number of frames (0 = no limit)");
  }

  std::vector<ManifestRow> rows() const {
    std::vector<ManifestRow> out;
    const fs::path m = fs::is_directory(dir) ? fs::path(dir) / "manifest.csv" : fs::path(dir);
    for (auto& r : read_manifest(m.string())) {
      if (split != "all" && r.split != split) continue;
      out.push_back(std::move(r));
      if (limit > 0 && static_cast<int>(out.size()) >= limit) break;
    }
    if (out.empty()) fail(Errc::kEmptyInput, "no frames in split '" + split + "'");
    return out;
  }

  std::vector<Tensor> frames(const ModelGraph& g) const {
    std::vector<Tensor> out;
    for (const auto& r : rows())
      out.push_back(preprocess(to_bgr_frame(read_netpbm(r.frame_path)),
                               static_cast<int>(g.input_shape.h),
                               static_cast<int>(g.input_shape.w)));
    return out;
  }
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream os(path);
  if (!os) fail(Errc::kIo, "cannot write '" + path + "'");
  os << text;
}

std::string read_text(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(Errc::kIo, "cannot read '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      out.push_back(std::stod(cell));
    } catch (const std::logic_error&) {
      fail(Errc::kInvalidArgument, "bad number '" + cell + "' in list '" + text + "'");
    }
  }
  return out;
}

std::string geometry_csv_header() {
  return "frame,flame,L_m,S_m,A_m2,flame_px,components,x0,y0,x1,y1\n";
}

std::string geometry_csv_row(const std::string& name, const std::optional<FlameGeometry>& g) {
  std::ostringstream os;
  os << std::setprecision(10) << name << ',';
  if (!g) {
    os << "0,,,,0,0,,,,\n";
    return os.str();
  }
  const auto& b = g->bounding_box;
  os << "1," << g->length_m << ',' << g->liftoff_m << ',' << g->area_m2 << ','
     << g->flame_px_count << ',' << g->component_count << ',' << b.x0 << ',' << b.y0 << ','
     << b.x1 << ',' << b.y1 << '\n';
  return os.str();
}

// Reads JSON config keys for the subcommand and turns them into flags that
// precede the command line, so explicit flags win.
std::vector<std::string> config_args(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::kInvalidArgument, "config '" + path + "': " + e.what());
  }
  if (!j.is_object()) fail(Errc::kInvalidArgument, "config must be a JSON object");
  std::vector<std::string> args;
  for (const auto& [key, value] : j.items()) {
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_string()) {
      args.push_back(flag);
      args.push_back(value.get<std::string>());
    } else if (value.is_number()) {
      args.push_back(flag);
      args.push_back(value.dump());
    } else {
      fail(Errc::kInvalidArgument, "config key '" + key + "' must be a scalar");
    }
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flamecam: jet-fire segmentation and geometry toolchain"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;
  app.add_option("--config", config_path, "JSON file whose keys mirror subcommand flags");

  std::function<void()> action;
  auto sub = [&](const char* name, const char* help) {
    auto* s = app.add_subcommand(name, help);
    s->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    return s;
  };

  // init
  UnetOptions unet;
  std::string shape_text = "240x320x3", out_path;
  {
    auto* s = sub("init", "Build a seeded random-weight UNet archive");
    s->add_option("--out", out_path)->required();
    s->add_option("--depth", unet.depth);
    s->add_option("--filters", unet.base_filters, "Filters in the first encoder block");
    s->add_option("--input", shape_text, "Input shape HxWxC");
    s->add_flag("--batchnorm", unet.with_batchnorm);
    s->add_option("--dead-fraction", unet.dead_fraction,
                  "Fraction of inert filters per prunable conv");
    s->add_option("--seed", unet.seed);
    s->callback([&] {
      action = [&] {
        unet.input_shape = parse_act_shape(shape_text);
        const ModelGraph g = build_unet(unet);
        write_model_archive(g, out_path);
        std::cout << "params " << count_parameters(g) << '\n';
      };
    });
  }

  // gen
  int gen_n = 201;
  std::string split_text;
  FlameSceneSpec scene;
  {
    auto* s = sub("gen", "Generate a synthetic jet-fire dataset");
    s->add_option("--n", gen_n);
    s->add_option("--out", out_path)->required();
    s->add_option("--seed", scene.seed);
    s->add_option("--height", scene.height);
    s->add_option("--width", scene.width);
    auto* nx = s->add_option("--nozzle-x", scene.nozzle_x);
    auto* ny = s->add_option("--nozzle-y", scene.nozzle_y);
    s->add_option("--noise", scene.noise_sigma);
    s->add_option("--mpp", scene.metres_per_pixel);
    s->add_option("--split", split_text, "train,val,test counts");
    s->callback([&, nx, ny] {
      action = [&, nx, ny] {
        if (!nx->count()) scene.nozzle_x = scene.width / 16;
        if (!ny->count()) scene.nozzle_y = scene.height / 2;
        DatasetSplit split = default_split(gen_n);
        if (!split_text.empty()) {
          const auto v = parse_list(split_text);
          if (v.size() != 3) fail(Errc::kInvalidArgument, "--split needs three counts");
          split = {static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2])};
        }
        const auto rows = write_dataset(out_path, gen_n, scene, split);
        std::cout << "wrote " << rows.size() << " scenes to " << out_path << '\n';
      };
    });
  }

  // analyze
  std::string model_path;
  bool as_csv = false;
  {
    auto* s = sub("analyze", "Per-layer MACs/FLOPs report");
    s->add_option("--model", model_path)->required();
    auto* in = s->add_option("--input", shape_text, "Input shape HxWxC (default: model's)");
    s->add_flag("--csv", as_csv);
    s->add_option("--out", out_path, "Write the report here instead of stdout");
    s->callback([&, in] {
      action = [&, in] {
        const ModelGraph g = read_model_archive(model_path);
        const auto report = in->count() ? model_complexity(g, parse_act_shape(shape_text))
                                        : model_complexity(g);
        write_text(out_path, as_csv ? report_to_csv(report) : report_to_table(report));
      };
    });
  }

  // fold-bn
  {
    auto* s = sub("fold-bn", "Fold BatchNorm layers into the preceding convolutions");
    s->add_option("--model", model_path)->required();
    s->add_option("--out", out_path)->required();
    s->callback([&] {
      action = [&] { write_model_archive(fold_batchnorm(read_model_archive(model_path)), out_path); };
    });
  }

  // equalize
  int passes = 30;
  {
    auto* s = sub("equalize", "Cross-layer weight range equalization");
    s->add_option("--model", model_path)->required();
    s->add_option("--out", out_path)->required();
    s->add_option("--passes", passes);
    s->callback([&] {
      action = [&] {
        write_model_archive(equalize_cross_layer(read_model_archive(model_path), passes),
                            out_path);
      };
    });
  }

  // calibrate
  DataFlags data;
  bool histogram = false;
  {
    auto* s = sub("calibrate", "Record activation ranges over calibration frames");
    s->add_option("--model", model_path)->required();
    data.add(s);
    s->add_flag("--histogram", histogram, "Also record histograms (needed for percentile)");
    s->add_option("--out", out_path)->required();
    s->callback([&] {
      action = [&] {
        const ModelGraph g = read_model_archive(model_path);
        write_text(out_path, stats_to_json(calibrate(g, data.frames(g), histogram)));
      };
    });
  }

  // quantize
  std::string stats_path, scheme = "minmax";
  QuantizeOptions qopt;
  {
    auto* s = sub("quantize", "Post-training int8 quantization");
    s->add_option("--model", model_path)->required();
    s->add_option("--stats", stats_path)->required();
    s->add_option("--scheme", scheme)->check(CLI::IsMember({"minmax", "percentile"}));
    s->add_option("--percentile", qopt.percentile);
    s->add_option("--out", out_path)->required();
    s->callback([&] {
      action = [&] {
        qopt.scheme = scheme == "percentile" ? CalibrationScheme::kPercentile
                                             : CalibrationScheme::kMinMax;
        const ModelGraph g = read_model_archive(model_path);
        write_model_archive(quantize_model(g, stats_from_json(read_text(stats_path)), qopt),
                            out_path);
      };
    });
  }

  // prune
  PruneOptions popt;
  std::string history_path, reference = "model", quant_out;
  {
    auto* s = sub("prune", "Iterative APoZ filter pruning of a float model");
    s->add_option("--model", model_path)->required();
    data.add(s);
    s->add_option("--step", popt.step_fraction);
    s->add_option("--max-drop", popt.max_drop, "Relative Dice budget");
    s->add_option("--max-rounds", popt.max_rounds);
    s->add_option("--reference", reference, "model: float outputs, truth: dataset masks")
        ->check(CLI::IsMember({"model", "truth"}));
    s->add_option("--out", out_path)->required();
    s->add_option("--history", history_path, "CSV of per-round statistics");
    s->add_option("--quantized-out", quant_out,
                  "Also calibrate and write an int8 copy of the pruned model");
    s->add_option("--scheme", scheme)->check(CLI::IsMember({"minmax", "percentile"}));
    s->callback([&] {
      action = [&] {
        const ModelGraph g = read_model_archive(model_path);
        const auto frames = data.frames(g);
        std::vector<SegMask> refs;
        if (reference == "truth") {
          for (const auto& r : data.rows()) {
            const SegMask full = image_to_mask(read_netpbm(r.mask_path));
            SegMask half(full.height / 2, full.width / 2);
            for (int y = 0; y < half.height; ++y)
              for (int x = 0; x < half.width; ++x) half.at(y, x) = full.at(2 * y, 2 * x);
            refs.push_back(std::move(half));
          }
        } else {
          for (const auto& f : frames) refs.push_back(postprocess(forward_f32(g, f)));
        }
        const auto result = prune_loop(g, frames, refs, popt);
        write_model_archive(result.graph, out_path);
        if (!history_path.empty()) write_text(history_path, history_to_csv(result.history));
        const auto& first = result.history.front();
        std::cout << "params " << first.params << " -> " << count_parameters(result.graph)
                  << ", rounds " << result.history.size() - 1 << '\n';
        if (!quant_out.empty()) {
          qopt.scheme = scheme == "percentile" ? CalibrationScheme::kPercentile
                                               : CalibrationScheme::kMinMax;
          const auto stats = calibrate(result.graph, frames,
                                       qopt.scheme == CalibrationScheme::kPercentile);
          write_model_archive(quantize_model(result.graph, stats, qopt), quant_out);
        }
      };
    });
  }

  // infer
  std::string frame_path, mask_out, overlay_out;
  CalibFlags calib;
  {
    auto* s = sub("infer", "Segment one frame");
    s->add_option("--model", model_path)->required();
    s->add_option("--frame", frame_path, "PGM/PPM capture frame")->required();
    s->add_option("--mask", mask_out, "Write the class mask as PGM");
    s->add_option("--overlay", overlay_out, "Write a colour overlay as PPM");
    calib.add(s, "capture frame");
    s->callback([&] {
      action = [&] {
        const ModelGraph g = read_model_archive(model_path);
        const Image frame = read_netpbm(frame_path);
        const SegMask mask = postprocess(run_model(
            g, preprocess(to_bgr_frame(frame), static_cast<int>(g.input_shape.h),
                          static_cast<int>(g.input_shape.w))));
        SceneCalib c = calib.resolve(frame.height, frame.width);
        c.metres_per_pixel *= 2.0;
        c.nozzle_x /= 2;
        c.nozzle_y /= 2;
        c.min_component_px = (c.min_component_px + 3) / 4;
        const auto geom = characterize(mask, c);
        if (!mask_out.empty()) write_netpbm(mask_to_image(mask), mask_out);
        if (!overlay_out.empty()) write_netpbm(render_overlay(mask, geom), overlay_out);
        std::cout << geometry_csv_header() << geometry_csv_row(frame_path, geom);
      };
    });
  }

  // pipeline
  PipelineConfig pcfg;
  std::string mode = "single", source_text = "synthetic", sink_text = "none", delays_text;
  std::string stats_csv;
  bool with_calib = false;
  {
    auto* s = sub("pipeline", "Run the capture/preprocess/inference/postprocess pipeline");
    s->add_option("--mode", mode)->check(CLI::IsMember({"single", "multi"}));
    s->add_option("--model", model_path, "Model archive (default: no-op model)");
    s->add_option("--source", source_text)->check(CLI::IsMember({"synthetic", "dir"}));
    s->add_option("--source-dir", pcfg.source_dir);
    s->add_option("--frames", pcfg.frame_count, "Synthetic frame count");
    s->add_option("--seed", pcfg.synthetic_spec.seed);
    s->add_option("--height", pcfg.model_height, "Model input height (no-op model)");
    s->add_option("--width", pcfg.model_width, "Model input width (no-op model)");
    s->add_option("--fps", pcfg.replay_fps, "Replay rate, 0 = unthrottled");
    s->add_option("--warmup", pcfg.warmup_frames);
    s->add_option("--queue", pcfg.queue_capacity);
    s->add_option("--sink", sink_text)->check(CLI::IsMember({"none", "masks", "overlays"}));
    s->add_option("--out", pcfg.output_dir, "Sink directory");
    s->add_option("--log", pcfg.frame_log_path, "JSON-lines frame log");
    s->add_flag("--timestamps", pcfg.log_timings, "Include completion time and stage latencies in the log");
    s->add_option("--delays", delays_text, "Extra per-stage sleep in ms, e.g. 10,20,40,10");
    s->add_option("--stats-csv", stats_csv);
    s->add_flag("--geometry", with_calib, "Characterize every frame");
    calib.add(s, "capture frame");
    s->callback([&] {
      action = [&] {
        pcfg.mode = mode == "multi" ? PipelineMode::kMulti : PipelineMode::kSingle;
        pcfg.source = source_text == "dir" ? SourceKind::kDirectory : SourceKind::kSynthetic;
        pcfg.sink = sink_text == "masks"      ? SinkKind::kMasks
                    : sink_text == "overlays" ? SinkKind::kOverlays
                                              : SinkKind::kNone;
        if (!model_path.empty()) {
          auto g = std::make_shared<ModelGraph>(read_model_archive(model_path));
          pcfg.model_height = static_cast<int>(g->input_shape.h);
          pcfg.model_width = static_cast<int>(g->input_shape.w);
          pcfg.model = std::move(g);
        }
        auto& spec = pcfg.synthetic_spec;
        const uint64_t seed = spec.seed;
        spec = FlameSceneSpec{};
        spec.seed = seed;
        spec.height = 2 * pcfg.model_height;
        spec.width = 2 * pcfg.model_width;
        spec.nozzle_x = spec.width / 16;
        spec.nozzle_y = spec.height / 2;
        spec.liftoff_px = spec.width / 16;
        spec.length_px = spec.width / 2;
        spec.max_width_px = spec.height / 4;
        if (!delays_text.empty()) {
          const auto v = parse_list(delays_text);
          if (v.size() != kNumStages) fail(Errc::kInvalidArgument, "--delays needs 4 values");
          std::copy(v.begin(), v.end(), pcfg.stage_delay_ms.begin());
        }
        if (with_calib) pcfg.calib = calib.resolve(spec.height, spec.width);
        pcfg.stop = &g_stop;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        const auto stats = run_pipeline(pcfg);
        std::cout << stats_to_table(stats);
        if (!stats_csv.empty()) write_text(stats_csv, stats_to_csv(stats));
      };
    });
  }

  // characterize
  std::vector<std::string> mask_paths;
  {
    auto* s = sub("characterize", "Flame geometry from class masks");
    s->add_option("masks", mask_paths, "Mask PGM files or directories")->required();
    calib.add(s);
    s->add_option("--out", out_path, "CSV path (default stdout)");
    s->callback([&] {
      action = [&] {
        std::vector<std::string> files;
        for (const auto& p : mask_paths) {
          if (fs::is_directory(p)) {
            std::vector<std::string> found;
            for (const auto& e : fs::directory_iterator(p))
              if (e.path().extension() == ".pgm") found.push_back(e.path().string());
            std::sort(found.begin(), found.end());
            files.insert(files.end(), found.begin(), found.end());
          } else {
            files.push_back(p);
          }
        }
        std::string csv = geometry_csv_header();
        for (const auto& f : files) {
          const SegMask m = image_to_mask(read_netpbm(f));
          csv += geometry_csv_row(f, characterize(m, calib.resolve(m.height, m.width)));
        }
        write_text(out_path, csv);
      };
    });
  }

  // eval
  std::string pred_dir, pred_pattern;
  {
    auto* s = sub("eval", "Score predicted masks against dataset ground truth");
    data.add(s);
    s->add_option("--pred", pred_dir,
                  "Directory of predicted masks named like the dataset masks "
                  "(default: the ground truth itself)");
    s->add_option("--out", out_path, "CSV path (default stdout)");
    s->callback([&, s] {
      data.split = data.split == "train" && s->get_option("--split")->count() == 0 ? "test"
                                                                                   : data.split;
      action = [&, s] {
        auto saved_limit = data.limit;
        if (s->get_option("--limit")->count() == 0) data.limit = 0;
        const auto rows = data.rows();
        data.limit = saved_limit;
        std::ostringstream os;
        os << std::setprecision(10);
        os << "frame,dice,jaccard,L_true,L_pred,S_true,S_pred,A_true,A_pred\n";
        std::vector<double> tl, pl, ts, ps, ta, pa;
        double dsum = 0.0, jsum = 0.0;
        for (const auto& r : rows) {
          const SegMask truth_full = image_to_mask(read_netpbm(r.mask_path));
          const std::string pred_file =
              pred_dir.empty() ? r.mask_path
                               : (fs::path(pred_dir) / fs::path(r.mask_path).filename()).string();
          const SegMask pred = image_to_mask(read_netpbm(pred_file));
          const int factor = truth_full.width / std::max(1, pred.width);
          if (factor < 1 || pred.width * factor != truth_full.width ||
              pred.height * factor != truth_full.height)
            fail(Errc::kShapeMismatch, "prediction '" + pred_file + "' has an unusable size");
          SegMask truth(pred.height, pred.width);
          for (int y = 0; y < pred.height; ++y)
            for (int x = 0; x < pred.width; ++x)
              truth.at(y, x) = truth_full.at(factor * y, factor * x);
          const double d = dice_macro(pred, truth), j = jaccard_macro(pred, truth);
          dsum += d;
          jsum += j;
          SceneCalib c = calib_for(r.spec);
          c.metres_per_pixel *= factor;
          c.nozzle_x /= factor;
          c.nozzle_y /= factor;
          c.min_component_px = (c.min_component_px + factor * factor - 1) / (factor * factor);
          const auto g = characterize(pred, c);
          const double lp = g ? g->length_m : 0.0, sp = g ? g->liftoff_m : 0.0,
                       ap = g ? g->area_m2 : 0.0;
          tl.push_back(r.length_m);
          pl.push_back(lp);
          ts.push_back(r.liftoff_m);
          ps.push_back(sp);
          ta.push_back(r.area_m2);
          pa.push_back(ap);
          os << fs::path(r.mask_path).filename().string() << ',' << d << ',' << j << ','
             << r.length_m << ',' << lp << ',' << r.liftoff_m << ',' << sp << ',' << r.area_m2
             << ',' << ap << '\n';
        }
        const double n = static_cast<double>(rows.size());
        os << "mean," << dsum / n << ',' << jsum / n << ",,,,,,\n";
        auto pct = [](const std::vector<double>& p, const std::vector<double>& t,
                      double (*f)(std::span<const double>, std::span<const double>)) {
          std::vector<double> pp, tt;
          for (size_t i = 0; i < t.size(); ++i)
            if (t[i] != 0.0) {
              pp.push_back(p[i]);
              tt.push_back(t[i]);
            }
          return tt.empty() ? 0.0 : f(pp, tt);
        };
        os << "mape_pct,,," << pct(pl, tl, mape) << ",,," << pct(ps, ts, mape) << ",,"
           << pct(pa, ta, mape) << '\n';
        os << "rmspe_pct,,," << pct(pl, tl, rmspe) << ",,," << pct(ps, ts, rmspe) << ",,"
           << pct(pa, ta, rmspe) << '\n';
        write_text(out_path, os.str());
      };
    });
  }

  // bench
  int reps = 10;
  {
    auto* s = sub("bench", "Time model inference");
    s->add_option("--model", model_path)->required();
    auto* in = s->add_option("--input", shape_text, "Input shape HxWxC (default: model's)");
    s->add_option("--reps", reps);
    s->callback([&, in] {
      action = [&, in] {
        const ModelGraph g = read_model_archive(model_path);
        const ActShape shape = in->count() ? parse_act_shape(shape_text) : g.input_shape;
        const auto r = bench_model(g, shape, reps);
        std::cout << std::fixed << std::setprecision(3) << "reps " << r.reps << "\nmean_ms "
                  << r.mean_ms << "\nmin_ms " << r.min_ms << "\nfps "
                  << (r.mean_ms > 0 ? 1000.0 / r.mean_ms : 0.0) << '\n';
      };
    });
  }

  // --config is resolved before parsing so its keys can be spliced in
  // right after the subcommand name.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    for (size_t i = 0; i + 1 < args.size(); ++i) {
      if (args[i] != "--config") continue;
      const std::string path = args[i + 1];
      args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
      size_t at = args.size();
      for (size_t k = 0; k < args.size(); ++k)
        if (app.get_subcommand_no_throw(args[k])) {
          at = k + 1;
          break;
        }
      const auto extra = config_args(path);
      args.insert(args.begin() + static_cast<long>(at), extra.begin(), extra.end());
      break;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (action) action();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
