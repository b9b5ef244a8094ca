#pragma once

// Per-camera local-node runtime: frame batching, the six-stage graph with
// bounded queues, a shared accelerator token pool, and configurable service
// times. The same code path runs under the virtual and the real clock.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "svs/analytics.hpp"
#include "svs/scenario.hpp"
#include "svs/sim.hpp"
#include "svs/time.hpp"

namespace svs {

class Recorder;  // telemetry.hpp

inline constexpr std::int64_t kBatchFrames = 30;

struct Batch {
    std::string camera_id;
    std::int64_t batch_index = 0;
    std::vector<FrameDescriptor> frames;  // exactly kBatchFrames, contiguous
    TimeNs capture_ts_first = 0;
    TimeNs capture_ts_last = 0;
};

struct EnrichedBatch {
    Batch batch;
    std::vector<Detection> detections;  // ordered by frame_index
    std::vector<WindowScore> window_scores;
    std::map<std::int64_t, std::int64_t> crop_choices;  // local_id -> frame
    std::vector<std::pair<std::string, TimeNs>> stage_ts;  // completion order
    TimeNs latency_ref_ts = 0;  // start point for batch latency metrics

    const FrameDescriptor* frame(std::int64_t frame_index) const;
    std::optional<TimeNs> stage_time(const std::string& stage) const;
    std::int64_t person_detections() const;
};

// Groups a camera's frame stream into batches of 30. Frames must arrive in
// frame_index order; a trailing partial group is discarded at stream end.
class BatchAssembler {
  public:
    explicit BatchAssembler(std::string camera_id) : camera_id_(std::move(camera_id)) {}

    // Returns the completed batch when `fd` is its 30th frame.
    std::optional<Batch> add_frame(FrameDescriptor fd);

    std::int64_t batches_formed() const { return next_batch_; }
    std::size_t pending_frames() const { return frames_.size(); }

  private:
    std::string camera_id_;
    std::vector<FrameDescriptor> frames_;
    std::int64_t next_frame_ = 0;
    std::int64_t next_batch_ = 0;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct StageConfig {
    std::string name;
    double service_base_ms = 0;
    double service_per_detection_ms = 0;
    double jitter_fraction = 0;  // in [0,1)
    int token_cost = 0;          // accelerator tokens held while serving
};

enum class LatencyReference { CaptureLast, CaptureFirst };

LatencyReference latency_reference_from_string(const std::string& s);
const char* to_string(LatencyReference r);

// The canonical stage order of a local node.
extern const std::vector<std::string> kStageOrder;

struct AnalyticsConfig {
    DetectConfig detect;
    TrackerConfig tracker;
    PoseConfig pose;
    ScoreConfig score;
    FeatureConfig feature;
};

struct PipelineConfig {
    int queue_capacity = 4;
    int accelerator_tokens = 4;
    ClockMode clock_mode = ClockMode::Virtual;
    LatencyReference latency_reference = LatencyReference::CaptureLast;
    std::vector<StageConfig> stages;  // canonical six, in order
    AnalyticsConfig analytics;

    const StageConfig& stage(const std::string& name) const;
    static PipelineConfig defaults();  // six zero-cost stages
};

PipelineConfig parse_pipeline_config(const std::string& text);
PipelineConfig load_pipeline_config(const std::string& path);
std::string pipeline_config_to_json(const PipelineConfig& cfg);
void validate_pipeline_config(const PipelineConfig& cfg);

// ---------------------------------------------------------------------------
// Stage executor
// ---------------------------------------------------------------------------

// Acquires the stage's tokens, applies the transform, holds the tokens for
// service_base + per_detection x (person detections after the transform),
// scaled by a deterministic jitter factor in [1-j, 1+j], stamps the stage
// completion timestamp, releases the tokens.
SimTask<void> run_stage(SimKernel& k, TokenPool& tokens, const StageConfig& cfg,
                        EnrichedBatch& b, std::uint64_t run_seed,
                        const std::function<void(EnrichedBatch&)>& transform);

// Deterministic jitter factor for (stage, camera, batch).
double jitter_factor(std::uint64_t run_seed, const StageConfig& cfg,
                     const std::string& camera_id, std::int64_t batch_index);

// ---------------------------------------------------------------------------
// Local node runtime
// ---------------------------------------------------------------------------

using IngestQueue = BoundedQueue<std::unique_ptr<EnrichedBatch>>;

struct LocalNodeParams {
    SimKernel* kernel = nullptr;
    const Scenario* scenario = nullptr;
    std::string camera_id;
    const PipelineConfig* config = nullptr;
    TokenPool* tokens = nullptr;        // shared across all pipelines
    IngestQueue* downstream = nullptr;  // global-node ingest queue
    Recorder* recorder = nullptr;       // optional
    std::uint64_t run_seed = 0;
    std::function<void()> on_done;      // after the last batch shipped

    // Capture-stamp watch: on_capture(frame_index, stamped capture_ts) fires
    // for every frame listed here. Injection ground truth is resolved from
    // these actual stamps, so a lagging source moves the physical event and
    // its measurement base together.
    std::vector<std::int64_t> watch_frames;
    std::function<void(std::int64_t, TimeNs)> on_capture;
};

// Spawns the source and stage workers for one camera onto the kernel.
// Queues between stages have capacity config.queue_capacity; the source
// lags (stamping frames late) rather than dropping when backpressured.
void start_local_node(LocalNodeParams params);

}  // namespace svs
