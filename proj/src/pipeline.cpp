#include "flamecam/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "flamecam/error.hpp"
#include "flamecam/infer.hpp"
#include "flamecam/overlay.hpp"
#include "flamecam/rng.hpp"
#include "json.hpp"

namespace flamecam {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

void sleep_ms(double ms) {
  if (ms > 0.0) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
}

struct Packet {
  int64_t id = 0;
  Image frame;
  Tensor input;
  Tensor probs;
  std::array<double, kNumStages> stage_ms{};
};

class Runner {
 public:
  explicit Runner(const PipelineConfig& cfg) : cfg_(cfg) {
    if (cfg.queue_capacity < 1) fail(Errc::kInvalidArgument, "queue capacity must be >= 1");
    if (cfg.warmup_frames < 0) fail(Errc::kInvalidArgument, "warmup must be >= 0");
    if (cfg.replay_fps < 0.0) fail(Errc::kInvalidArgument, "replay fps must be >= 0");
    for (double d : cfg.stage_delay_ms)
      if (d < 0.0) fail(Errc::kInvalidArgument, "stage delay must be >= 0");

    if (cfg.source == SourceKind::kDirectory) {
      std::error_code ec;
      for (const auto& e : fs::directory_iterator(cfg.source_dir, ec)) {
        const auto ext = e.path().extension().string();
        if (ext == ".pgm" || ext == ".ppm") files_.push_back(e.path().string());
      }
      if (ec) fail(Errc::kIo, "cannot list '" + cfg.source_dir + "'");
      std::sort(files_.begin(), files_.end());
      total_ = static_cast<int64_t>(files_.size());
    } else {
      validate_scene_spec(cfg.synthetic_spec);
      total_ = cfg.frame_count;
    }
    if (total_ <= cfg.warmup_frames)
      fail(Errc::kInvalidArgument, "frame count must exceed the warmup frames");

    if (cfg.model) {
      model_h_ = static_cast<int>(cfg.model->input_shape.h);
      model_w_ = static_cast<int>(cfg.model->input_shape.w);
      if (cfg.model->input_shape.c != 3)
        fail(Errc::kShapeMismatch, "model input must have 3 channels");
    } else {
      model_h_ = cfg.model_height;
      model_w_ = cfg.model_width;
    }
    if (cfg.source == SourceKind::kSynthetic &&
        (cfg.synthetic_spec.height != 2 * model_h_ || cfg.synthetic_spec.width != 2 * model_w_))
      fail(Errc::kShapeMismatch, "capture frame must be twice the model input size");

    if (cfg.calib) {
      calib_ = *cfg.calib;
      calib_->metres_per_pixel *= 2.0;
      calib_->nozzle_x /= 2;
      calib_->nozzle_y /= 2;
      calib_->min_component_px = (calib_->min_component_px + 3) / 4;
    }
    if (cfg.sink != SinkKind::kNone) {
      std::error_code ec;
      fs::create_directories(cfg.output_dir, ec);
      if (ec || !fs::is_directory(cfg.output_dir))
        fail(Errc::kIo, "cannot create output directory '" + cfg.output_dir + "'");
    }
    if (!cfg.frame_log_path.empty()) {
      log_.open(cfg.frame_log_path);
      if (!log_) fail(Errc::kIo, "cannot open frame log '" + cfg.frame_log_path + "'");
    }
  }

  PipelineStats run() {
    start_ = Clock::now();
    if (cfg_.mode == PipelineMode::kSingle)
      run_single();
    else
      run_multi();
    return finish();
  }

 private:
  bool stopped() const { return cfg_.stop && cfg_.stop->load(); }

  std::optional<Packet> capture(int64_t i) {
    if (stopped()) return std::nullopt;
    if (cfg_.replay_fps > 0.0)
      std::this_thread::sleep_until(
          start_ + std::chrono::duration_cast<Clock::duration>(
                       std::chrono::duration<double>(i / cfg_.replay_fps)));
    const auto t0 = Clock::now();
    Packet p;
    p.id = i;
    if (cfg_.source == SourceKind::kSynthetic) {
      FlameSceneSpec spec = cfg_.synthetic_spec;
      spec.seed += static_cast<uint64_t>(i);
      p.frame = to_bgr_frame(generate_scene(spec).frame);
    } else {
      p.frame = to_bgr_frame(read_netpbm(files_[static_cast<size_t>(i)]));
    }
    sleep_ms(cfg_.stage_delay_ms[0]);
    p.stage_ms[0] = ms_between(t0, Clock::now());
    return p;
  }

  void preprocess_stage(Packet& p) {
    const auto t0 = Clock::now();
    p.input = preprocess(p.frame, model_h_, model_w_);
    p.frame = Image{};
    sleep_ms(cfg_.stage_delay_ms[1]);
    p.stage_ms[1] = ms_between(t0, Clock::now());
  }

  void inference_stage(Packet& p) {
    const auto t0 = Clock::now();
    if (cfg_.model) {
      p.probs = run_model(*cfg_.model, p.input);
    } else {
      p.probs = Tensor(Shape{model_h_, model_w_, kNumFlameClasses},
                       std::vector<float>(static_cast<size_t>(model_h_) * model_w_ *
                                              kNumFlameClasses,
                                          1.0f / kNumFlameClasses));
    }
    p.input = Tensor{};
    sleep_ms(cfg_.stage_delay_ms[2]);
    p.stage_ms[2] = ms_between(t0, Clock::now());
  }

  void postprocess_stage(Packet& p) {
    const auto t0 = Clock::now();
    const SegMask mask = postprocess(p.probs);
    p.probs = Tensor{};
    FrameResult r;
    r.frame_id = p.id;
    if (calib_) r.geometry = characterize(mask, *calib_);
    if (cfg_.sink != SinkKind::kNone) {
      char name[32];
      const bool masks = cfg_.sink == SinkKind::kMasks;
      std::snprintf(name, sizeof name, masks ? "mask_%06lld.pgm" : "overlay_%06lld.ppm",
                    static_cast<long long>(p.id));
      const Image out = masks ? mask_to_image(mask) : render_overlay(mask, r.geometry);
      write_netpbm(out, (fs::path(cfg_.output_dir) / name).string());
    }
    sleep_ms(cfg_.stage_delay_ms[3]);
    const auto t1 = Clock::now();
    p.stage_ms[3] = ms_between(t0, t1);
    r.stage_ms = p.stage_ms;
    r.done_s = ms_between(start_, t1) / 1000.0;
    if (log_.is_open()) {
      nlohmann::json j{{"frame", r.frame_id}};
      if (cfg_.log_timings) {
        j["done_s"] = r.done_s;
        for (int s = 0; s < kNumStages; ++s) j[std::string(kStageNames[s]) + "_ms"] = r.stage_ms[s];
      }
      if (r.geometry) {
        j["L_m"] = r.geometry->length_m;
        j["S_m"] = r.geometry->liftoff_m;
        j["A_m2"] = r.geometry->area_m2;
      } else {
        j["flame"] = false;
      }
      log_ << j.dump() << '\n';
    }
    results_.push_back(std::move(r));
  }

  void run_single() {
    for (int64_t i = 0; i < total_; ++i) {
      auto p = capture(i);
      if (!p) break;
      preprocess_stage(*p);
      inference_stage(*p);
      postprocess_stage(*p);
    }
  }

  void run_multi() {
    BoundedQueue<Packet> q1(cfg_.queue_capacity), q2(cfg_.queue_capacity),
        q3(cfg_.queue_capacity);
    std::vector<BoundedQueue<Packet>*> all{&q1, &q2, &q3};
    std::mutex err_mutex;
    std::exception_ptr error;
    auto guarded = [&](auto&& body) {
      return [&, body] {
        try {
          body();
        } catch (...) {
          {
            std::lock_guard lock(err_mutex);
            if (!error) error = std::current_exception();
          }
          for (auto* q : all) q->abort();
        }
      };
    };
    auto relay = [](BoundedQueue<Packet>& in, BoundedQueue<Packet>& out, auto&& work) {
      while (auto p = in.pop()) {
        work(*p);
        if (!out.push(std::move(*p))) return;
      }
      out.close();
    };

    std::thread capture_t(guarded([&] {
      for (int64_t i = 0; i < total_; ++i) {
        auto p = capture(i);
        if (!p || !q1.push(std::move(*p))) break;
      }
      q1.close();
    }));
    std::thread pre_t(guarded([&] { relay(q1, q2, [&](Packet& p) { preprocess_stage(p); }); }));
    std::thread inf_t(guarded([&] { relay(q2, q3, [&](Packet& p) { inference_stage(p); }); }));
    std::thread post_t(guarded([&] {
      while (auto p = q3.pop()) postprocess_stage(*p);
    }));
    capture_t.join();
    pre_t.join();
    inf_t.join();
    post_t.join();
    if (error) std::rethrow_exception(error);
  }

  PipelineStats finish() {
    PipelineStats st;
    st.frames_processed = static_cast<int64_t>(results_.size());
    st.frames_dropped = 0;
    const size_t w = static_cast<size_t>(cfg_.warmup_frames);
    for (int s = 0; s < kNumStages; ++s) {
      std::vector<double> samples;
      for (size_t i = w; i < results_.size(); ++i) samples.push_back(results_[i].stage_ms[s]);
      if (!samples.empty()) st.stages[s] = summarize_latencies(std::move(samples));
    }
    if (results_.size() > w) {
      const double t_end = results_.back().done_s;
      const double t_begin = w > 0 ? results_[w - 1].done_s : 0.0;
      if (t_end > t_begin)
        st.throughput_fps = static_cast<double>(results_.size() - w) / (t_end - t_begin);
    }
    st.frames = std::move(results_);
    return st;
  }

  const PipelineConfig& cfg_;
  std::vector<std::string> files_;
  int64_t total_ = 0;
  int model_h_ = 0, model_w_ = 0;
  std::optional<SceneCalib> calib_;
  std::ofstream log_;
  Clock::time_point start_;
  std::vector<FrameResult> results_;
};

}  // namespace

PipelineStats run_pipeline(const PipelineConfig& config) {
  Runner runner(config);
  return runner.run();
}

LatencySummary summarize_latencies(std::vector<double> samples) {
  if (samples.empty()) fail(Errc::kEmptyInput, "no latency samples");
  std::sort(samples.begin(), samples.end());
  const size_t n = samples.size();
  auto rank = [&](double q) {
    const auto k = static_cast<size_t>(std::ceil(q * static_cast<double>(n)));
    return samples[std::clamp<size_t>(k, 1, n) - 1];
  };
  LatencySummary s;
  double sum = 0.0;
  for (double v : samples) sum += v;
  s.mean_ms = sum / static_cast<double>(n);
  s.p50_ms = rank(0.5);
  s.p95_ms = rank(0.95);
  s.min_ms = samples.front();
  return s;
}

std::string stats_to_table(const PipelineStats& st) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << std::left << std::setw(12) << "stage" << std::right << std::setw(10) << "mean_ms"
     << std::setw(10) << "p50_ms" << std::setw(10) << "p95_ms" << std::setw(10) << "min_ms"
     << '\n';
  for (int s = 0; s < kNumStages; ++s) {
    const auto& l = st.stages[s];
    os << std::left << std::setw(12) << kStageNames[s] << std::right << std::setw(10)
       << l.mean_ms << std::setw(10) << l.p50_ms << std::setw(10) << l.p95_ms << std::setw(10)
       << l.min_ms << '\n';
  }
  os << "throughput_fps " << st.throughput_fps << "\nframes_processed " << st.frames_processed
     << "\nframes_dropped " << st.frames_dropped << '\n';
  return os.str();
}

std::string stats_to_csv(const PipelineStats& st) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "stage,mean_ms,p50_ms,p95_ms,min_ms\n";
  for (int s = 0; s < kNumStages; ++s) {
    const auto& l = st.stages[s];
    os << kStageNames[s] << ',' << l.mean_ms << ',' << l.p50_ms << ',' << l.p95_ms << ','
       << l.min_ms << '\n';
  }
  os << "throughput_fps," << st.throughput_fps << ",,,\n";
  os << "frames_processed," << st.frames_processed << ",,,\n";
  os << "frames_dropped," << st.frames_dropped << ",,,\n";
  return os.str();
}

BenchResult bench_model(const ModelGraph& graph, const ActShape& shape, int reps) {
  if (reps < 1) fail(Errc::kInvalidArgument, "reps must be >= 1");
  ModelGraph g = graph;
  g.input_shape = shape;
  validate_graph(g);
  Xorshift64Star rng(7);
  std::vector<float> data(static_cast<size_t>(shape.h * shape.w * shape.c));
  for (auto& v : data) v = static_cast<float>(rng.uniform());
  const Tensor input(Shape{shape.h, shape.w, shape.c}, std::move(data));
  BenchResult r;
  r.reps = reps;
  r.min_ms = 1e300;
  double total = 0.0;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = Clock::now();
    const Tensor out = run_model(g, input);
    const double ms = ms_between(t0, Clock::now());
    total += ms;
    r.min_ms = std::min(r.min_ms, ms);
  }
  r.mean_ms = total / reps;
  return r;
}

}  // namespace flamecam
