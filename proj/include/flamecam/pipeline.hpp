#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "flamecam/geometry.hpp"
#include "flamecam/graph.hpp"
#include "flamecam/synth.hpp"

namespace flamecam {

/// Bounded blocking FIFO. push blocks while full; pop blocks while empty.
/// close() lets consumers drain then see end-of-stream; abort() wakes
/// everyone and makes further pushes fail.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(size_t capacity) : capacity_(capacity) {}

  bool push(T item) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || aborted_; });
    if (aborted_ || closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock,
                    [&] { return !items_.empty() || closed_ || aborted_; });
    if (aborted_ || items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
  }

  void abort() {
    std::lock_guard lock(mutex_);
    aborted_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  size_t capacity() const { return capacity_; }

 private:
  size_t capacity_;
  std::deque<T> items_;
  std::mutex mutex_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  bool closed_ = false;
  bool aborted_ = false;
};

enum class PipelineMode { kSingle, kMulti };
enum class SourceKind { kSynthetic, kDirectory };
enum class SinkKind { kNone, kMasks, kOverlays };

inline constexpr int kNumStages = 4;
inline constexpr std::array<const char*, kNumStages> kStageNames{
    "capture", "preprocess", "inference", "postprocess"};

struct PipelineConfig {
  PipelineMode mode = PipelineMode::kSingle;
  size_t queue_capacity = 4;

  SourceKind source = SourceKind::kSynthetic;
  std::string source_dir;          // kDirectory: *.pgm / *.ppm, sorted
  FlameSceneSpec synthetic_spec;   // kSynthetic: seed advances per frame
  int frame_count = 50;            // kSynthetic only
  double replay_fps = 0.0;         // 0 = unthrottled; the camera runs at 4

  // Null runs a no-op model that returns uniform probabilities.
  std::shared_ptr<const ModelGraph> model;
  int model_height = 240;  // used by the no-op model
  int model_width = 320;

  // Calibration in capture-frame pixels; the pipeline rescales it to the
  // 2x downscaled mask.
  std::optional<SceneCalib> calib;
  int warmup_frames = 10;

  SinkKind sink = SinkKind::kNone;
  std::string output_dir;
  std::string frame_log_path;  // JSON lines, empty = off
  bool log_timings = false;    // adds done_s and per-stage ms to each log line

  // Extra per-stage sleep, for pipeline-throughput experiments.
  std::array<double, kNumStages> stage_delay_ms{};

  // Capture stops early once this reads true (e.g. set from SIGINT).
  const std::atomic<bool>* stop = nullptr;
};

struct LatencySummary {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double min_ms = 0.0;
};

struct FrameResult {
  int64_t frame_id = 0;
  std::optional<FlameGeometry> geometry;
  std::array<double, kNumStages> stage_ms{};
  double done_s = 0.0;  // completion time since pipeline start
};

struct PipelineStats {
  std::array<LatencySummary, kNumStages> stages;
  double throughput_fps = 0.0;
  int64_t frames_processed = 0;
  int64_t frames_dropped = 0;
  std::vector<FrameResult> frames;  // in output order
};

PipelineStats run_pipeline(const PipelineConfig& config);

LatencySummary summarize_latencies(std::vector<double> samples);

std::string stats_to_table(const PipelineStats& stats);
std::string stats_to_csv(const PipelineStats& stats);

struct BenchResult {
  int reps = 0;
  double mean_ms = 0.0;
  double min_ms = 0.0;
};

// Times run_model on a deterministic input of the given shape.
BenchResult bench_model(const ModelGraph& graph, const ActShape& input_shape,
                        int reps);

}  // namespace flamecam
