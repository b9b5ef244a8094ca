#include "svs/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <utility>

#include "svs/errors.hpp"
#include "svs/telemetry.hpp"

namespace svs {

using nlohmann::json;

const std::vector<std::string> kStageOrder = {
    "detect", "track", "pose", "anomaly_score", "crop_select", "extract_features",
};

LatencyReference latency_reference_from_string(const std::string& s) {
    if (s == "capture_ts_last") return LatencyReference::CaptureLast;
    if (s == "capture_ts_first") return LatencyReference::CaptureFirst;
    throw ParseError("unknown latency_reference '" + s +
                     "' (expected 'capture_ts_last' or 'capture_ts_first')");
}

const char* to_string(LatencyReference r) {
    return r == LatencyReference::CaptureLast ? "capture_ts_last" : "capture_ts_first";
}

// ---------------------------------------------------------------------------
// EnrichedBatch / BatchAssembler
// ---------------------------------------------------------------------------

const FrameDescriptor* EnrichedBatch::frame(std::int64_t frame_index) const {
    if (batch.frames.empty()) return nullptr;
    const std::int64_t off = frame_index - batch.frames.front().frame_index;
    if (off < 0 || off >= static_cast<std::int64_t>(batch.frames.size())) return nullptr;
    return &batch.frames[static_cast<std::size_t>(off)];
}

std::optional<TimeNs> EnrichedBatch::stage_time(const std::string& stage) const {
    for (const auto& [name, t] : stage_ts)
        if (name == stage) return t;
    return std::nullopt;
}

std::int64_t EnrichedBatch::person_detections() const {
    std::int64_t n = 0;
    for (const auto& d : detections)
        if (d.det_class == "person") ++n;
    return n;
}

std::optional<Batch> BatchAssembler::add_frame(FrameDescriptor fd) {
    if (fd.frame_index != next_frame_) {
        throw ProtocolError("camera " + camera_id_ + ": frame " +
                            std::to_string(fd.frame_index) + " arrived, expected " +
                            std::to_string(next_frame_));
    }
    ++next_frame_;
    frames_.push_back(std::move(fd));
    if (static_cast<std::int64_t>(frames_.size()) < kBatchFrames) return std::nullopt;

    Batch b;
    b.camera_id = camera_id_;
    b.batch_index = next_batch_++;
    b.frames = std::move(frames_);
    frames_.clear();
    b.capture_ts_first = b.frames.front().capture_ts;
    b.capture_ts_last = b.frames.back().capture_ts;
    return b;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

const StageConfig& PipelineConfig::stage(const std::string& name) const {
    for (const auto& s : stages)
        if (s.name == name) return s;
    throw ValidationError("pipeline config has no stage named '" + name + "'");
}

PipelineConfig PipelineConfig::defaults() {
    PipelineConfig cfg;
    for (const auto& name : kStageOrder) {
        StageConfig s;
        s.name = name;
        cfg.stages.push_back(std::move(s));
    }
    return cfg;
}

namespace {

double num_field(const json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_number()) throw ParseError(std::string("field '") + key + "' must be a number");
    return v.get<double>();
}

}  // namespace

PipelineConfig parse_pipeline_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("pipeline config: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("pipeline config: top level must be an object");

    PipelineConfig cfg = PipelineConfig::defaults();
    cfg.queue_capacity = static_cast<int>(num_field(j, "queue_capacity", cfg.queue_capacity));
    cfg.accelerator_tokens =
        static_cast<int>(num_field(j, "accelerator_tokens", cfg.accelerator_tokens));
    if (j.contains("clock_mode")) {
        if (!j["clock_mode"].is_string()) throw ParseError("clock_mode must be a string");
        cfg.clock_mode = clock_mode_from_string(j["clock_mode"].get<std::string>());
    }
    if (j.contains("latency_reference")) {
        if (!j["latency_reference"].is_string())
            throw ParseError("latency_reference must be a string");
        cfg.latency_reference =
            latency_reference_from_string(j["latency_reference"].get<std::string>());
    }
    if (j.contains("stages")) {
        if (!j["stages"].is_array()) throw ParseError("stages must be an array");
        cfg.stages.clear();
        for (const json& js : j["stages"]) {
            if (!js.is_object()) throw ParseError("each stage must be an object");
            if (!js.contains("name") || !js["name"].is_string())
                throw ParseError("stage missing string field 'name'");
            StageConfig s;
            s.name = js["name"].get<std::string>();
            s.service_base_ms = num_field(js, "service_base_ms", 0);
            s.service_per_detection_ms = num_field(js, "service_per_detection_ms", 0);
            s.jitter_fraction = num_field(js, "jitter_fraction", 0);
            s.token_cost = static_cast<int>(num_field(js, "token_cost", 0));
            cfg.stages.push_back(std::move(s));
        }
    }
    if (j.contains("analytics")) {
        const json& ja = j["analytics"];
        if (!ja.is_object()) throw ParseError("analytics must be an object");
        AnalyticsConfig& a = cfg.analytics;
        a.detect.p_detect = num_field(ja, "p_detect", a.detect.p_detect);
        a.detect.bbox_noise_px = num_field(ja, "bbox_noise_px", a.detect.bbox_noise_px);
        a.tracker.tau_iou = num_field(ja, "tau_iou", a.tracker.tau_iou);
        a.tracker.max_age =
            static_cast<std::int64_t>(num_field(ja, "max_age", a.tracker.max_age));
        a.pose.kp_noise_px = num_field(ja, "kp_noise_px", a.pose.kp_noise_px);
        a.score.v_ref = num_field(ja, "v_ref", a.score.v_ref);
        a.score.min_presence =
            static_cast<int>(num_field(ja, "min_presence", a.score.min_presence));
        a.feature.sigma_feat = num_field(ja, "sigma_feat", a.feature.sigma_feat);
    }
    validate_pipeline_config(cfg);
    return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open pipeline config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_pipeline_config(ss.str());
}

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
    json j;
    j["queue_capacity"] = cfg.queue_capacity;
    j["accelerator_tokens"] = cfg.accelerator_tokens;
    j["clock_mode"] = to_string(cfg.clock_mode);
    j["latency_reference"] = to_string(cfg.latency_reference);
    j["stages"] = json::array();
    for (const auto& s : cfg.stages) {
        json js;
        js["name"] = s.name;
        js["service_base_ms"] = s.service_base_ms;
        js["service_per_detection_ms"] = s.service_per_detection_ms;
        js["jitter_fraction"] = s.jitter_fraction;
        js["token_cost"] = s.token_cost;
        j["stages"].push_back(std::move(js));
    }
    const AnalyticsConfig& a = cfg.analytics;
    j["analytics"] = {
        {"p_detect", a.detect.p_detect},
        {"bbox_noise_px", a.detect.bbox_noise_px},
        {"tau_iou", a.tracker.tau_iou},
        {"max_age", a.tracker.max_age},
        {"kp_noise_px", a.pose.kp_noise_px},
        {"v_ref", a.score.v_ref},
        {"min_presence", a.score.min_presence},
        {"sigma_feat", a.feature.sigma_feat},
    };
    return j.dump(2) + "\n";
}

void validate_pipeline_config(const PipelineConfig& cfg) {
    if (cfg.queue_capacity < 1) throw ValidationError("queue_capacity must be >= 1");
    if (cfg.accelerator_tokens < 1) throw ValidationError("accelerator_tokens must be >= 1");
    if (cfg.stages.size() != kStageOrder.size())
        throw ValidationError("pipeline config must list all " +
                              std::to_string(kStageOrder.size()) + " stages");
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        const StageConfig& s = cfg.stages[i];
        if (s.name != kStageOrder[i])
            throw ValidationError("stage " + std::to_string(i) + " must be '" + kStageOrder[i] +
                                  "', got '" + s.name + "'");
        if (s.service_base_ms < 0 || s.service_per_detection_ms < 0)
            throw ValidationError("stage '" + s.name + "': service times must be >= 0");
        if (s.jitter_fraction < 0 || s.jitter_fraction >= 1)
            throw ValidationError("stage '" + s.name + "': jitter_fraction must be in [0,1)");
        if (s.token_cost < 0)
            throw ValidationError("stage '" + s.name + "': token_cost must be >= 0");
        if (s.token_cost > cfg.accelerator_tokens)
            throw ValidationError("stage '" + s.name +
                                  "': token_cost exceeds accelerator_tokens");
    }
    const AnalyticsConfig& a = cfg.analytics;
    if (a.detect.p_detect < 0 || a.detect.p_detect > 1)
        throw ValidationError("p_detect must be in [0,1]");
    if (a.tracker.tau_iou < 0 || a.tracker.tau_iou >= 1)
        throw ValidationError("tau_iou must be in [0,1)");
    if (a.tracker.max_age < 0) throw ValidationError("max_age must be >= 0");
    if (a.score.v_ref <= 0) throw ValidationError("v_ref must be > 0");
    if (a.score.min_presence < 1) throw ValidationError("min_presence must be >= 1");
    if (a.feature.sigma_feat < 0) throw ValidationError("sigma_feat must be >= 0");
}

// ---------------------------------------------------------------------------
// Stage executor
// ---------------------------------------------------------------------------

double jitter_factor(std::uint64_t run_seed, const StageConfig& cfg,
                     const std::string& camera_id, std::int64_t batch_index) {
    if (cfg.jitter_fraction <= 0) return 1.0;
    Rng rng(derive_seed(run_seed, "stage-jitter",
                        stable_hash(cfg.name) ^ stable_hash(camera_id),
                        static_cast<std::uint64_t>(batch_index)));
    return rng.uniform(1.0 - cfg.jitter_fraction, 1.0 + cfg.jitter_fraction);
}

SimTask<void> run_stage(SimKernel& k, TokenPool& tokens, const StageConfig& cfg,
                        EnrichedBatch& b, std::uint64_t run_seed,
                        const std::function<void(EnrichedBatch&)>& transform) {
    if (cfg.token_cost > 0) co_await tokens.acquire(cfg.token_cost);
    if (transform) transform(b);
    const double service_ms =
        (cfg.service_base_ms +
         cfg.service_per_detection_ms * static_cast<double>(b.person_detections())) *
        jitter_factor(run_seed, cfg, b.batch.camera_id, b.batch.batch_index);
    if (service_ms > 0) co_await k.sleep_for(ms_to_ns(service_ms));
    b.stage_ts.emplace_back(cfg.name, k.now());
    if (cfg.token_cost > 0) tokens.release(cfg.token_cost);
}

// ---------------------------------------------------------------------------
// Local node runtime
// ---------------------------------------------------------------------------

namespace {

struct NodeState {
    SimKernel* k = nullptr;
    const Scenario* scenario = nullptr;
    std::string camera_id;
    PipelineConfig config;
    TokenPool* tokens = nullptr;
    IngestQueue* downstream = nullptr;
    Recorder* recorder = nullptr;
    std::uint64_t run_seed = 0;
    std::function<void()> on_done;

    std::vector<std::unique_ptr<IngestQueue>> queues;  // one per stage, inbound
    // Capture credits: the camera exposes a new batch only after the first
    // stage has taken the previous one, so a backpressured source lags (late
    // stamps) instead of queueing pre-stamped batches.
    std::unique_ptr<TokenPool> credits;
    Tracker tracker;
    PoseBuffer pose_buffer;
    std::vector<std::int64_t> watch_frames;  // sorted
    std::function<void(std::int64_t, TimeNs)> on_capture;

    NodeState(std::string cam, const PipelineConfig& cfg)
        : camera_id(cam),
          config(cfg),
          tracker(cam, cfg.analytics.tracker),
          pose_buffer(cam, cfg.analytics.score) {}
};

SimTask<void> source_task(std::shared_ptr<NodeState> st) {
    SimKernel& k = *st->k;
    BatchAssembler assembler(st->camera_id);
    const double rate = st->scenario->frame_rate;
    const std::int64_t frames =
        st->scenario->batch_count(kBatchFrames) * kBatchFrames;  // whole batches only
    std::size_t watch_at = 0;
    for (std::int64_t fi = 0; fi < frames; ++fi) {
        if (fi % kBatchFrames == 0) co_await st->credits->acquire(1);
        co_await k.sleep_until(frame_capture_offset(fi, rate));
        FrameDescriptor fd = generate_frame(*st->scenario, st->camera_id, fi, k.now());
        while (watch_at < st->watch_frames.size() && st->watch_frames[watch_at] == fi) {
            if (st->on_capture) st->on_capture(fi, fd.capture_ts);
            ++watch_at;
        }
        if (auto batch = assembler.add_frame(std::move(fd))) {
            auto eb = std::make_unique<EnrichedBatch>();
            eb->batch = std::move(*batch);
            eb->latency_ref_ts = st->config.latency_reference == LatencyReference::CaptureFirst
                                     ? eb->batch.capture_ts_first
                                     : eb->batch.capture_ts_last;
            co_await st->queues[0]->push(std::move(eb));
        }
    }
    st->queues[0]->close();
}

std::function<void(EnrichedBatch&)> make_transform(const std::shared_ptr<NodeState>& st,
                                                   const std::string& stage) {
    const AnalyticsConfig& a = st->config.analytics;
    const std::uint64_t seed = st->run_seed;
    const std::uint64_t cam_hash = stable_hash(st->camera_id);
    NodeState* raw = st.get();  // transforms live inside the worker that owns st
    if (stage == "detect") {
        return [a, seed, cam_hash](EnrichedBatch& b) {
            Rng rng(derive_seed(seed, "detect", cam_hash,
                                static_cast<std::uint64_t>(b.batch.batch_index)));
            detect_batch(b, a.detect, rng);
        };
    }
    if (stage == "track") {
        return [raw](EnrichedBatch& b) { track_batch(b, raw->tracker); };
    }
    if (stage == "pose") {
        return [a, seed, cam_hash](EnrichedBatch& b) {
            Rng rng(derive_seed(seed, "pose", cam_hash,
                                static_cast<std::uint64_t>(b.batch.batch_index)));
            pose_batch(b, a.pose, rng);
        };
    }
    if (stage == "anomaly_score") {
        return [raw](EnrichedBatch& b) { score_batch(b, raw->pose_buffer); };
    }
    if (stage == "crop_select") {
        return [](EnrichedBatch& b) { b.crop_choices = select_crop(b); };
    }
    if (stage == "extract_features") {
        return [a, seed, cam_hash](EnrichedBatch& b) {
            Rng rng(derive_seed(seed, "features", cam_hash,
                                static_cast<std::uint64_t>(b.batch.batch_index)));
            extract_features_batch(b, a.feature, rng);
        };
    }
    throw ValidationError("unknown stage '" + stage + "'");
}

SimTask<void> stage_task(std::shared_ptr<NodeState> st, std::size_t idx) {
    SimKernel& k = *st->k;
    const StageConfig& cfg = st->config.stages[idx];
    auto transform = make_transform(st, cfg.name);
    IngestQueue& in = *st->queues[idx];
    IngestQueue* out =
        idx + 1 < st->queues.size() ? st->queues[idx + 1].get() : st->downstream;
    const bool last = idx + 1 == st->queues.size();

    while (true) {
        auto item = co_await in.pop();
        if (!item) break;
        if (idx == 0) st->credits->release(1);  // camera may stage the next batch
        EnrichedBatch& b = **item;
        co_await run_stage(k, *st->tokens, cfg, b, st->run_seed, transform);

        if (st->recorder) {
            if (cfg.name == "detect") {
                st->recorder->record(MetricKind::DetectorStage, st->camera_id,
                                     b.batch.batch_index, b.latency_ref_ts, k.now());
            } else if (cfg.name == "anomaly_score") {
                for (const auto& ws : b.window_scores) {
                    const FrameDescriptor* lf = b.frame(ws.last_frame);
                    if (lf)
                        st->recorder->record(MetricKind::ActionStage, st->camera_id,
                                             ws.window_index, lf->capture_ts, k.now());
                }
            }
        }
        co_await out->push(std::move(*item));
    }
    if (!last) out->close();  // downstream ingest queue is shared; owner closes it
    if (last && st->on_done) st->on_done();
}

}  // namespace

void start_local_node(LocalNodeParams params) {
    if (!params.kernel || !params.scenario || !params.config || !params.tokens ||
        !params.downstream) {
        throw ValidationError("start_local_node: missing kernel/scenario/config/tokens/queue");
    }
    validate_pipeline_config(*params.config);
    if (!params.scenario->find_camera(params.camera_id))
        throw ValidationError("start_local_node: unknown camera " + params.camera_id);

    auto st = std::make_shared<NodeState>(params.camera_id, *params.config);
    st->k = params.kernel;
    st->scenario = params.scenario;
    st->tokens = params.tokens;
    st->downstream = params.downstream;
    st->recorder = params.recorder;
    st->run_seed = params.run_seed;
    st->on_done = std::move(params.on_done);
    st->watch_frames = std::move(params.watch_frames);
    std::sort(st->watch_frames.begin(), st->watch_frames.end());
    st->on_capture = std::move(params.on_capture);
    for (std::size_t i = 0; i < st->config.stages.size(); ++i)
        st->queues.push_back(std::make_unique<IngestQueue>(
            *params.kernel, static_cast<std::size_t>(st->config.queue_capacity)));
    st->credits = std::make_unique<TokenPool>(*params.kernel, 1);

    params.kernel->spawn(source_task(st));
    for (std::size_t i = 0; i < st->config.stages.size(); ++i)
        params.kernel->spawn(stage_task(st, i));
}

}  // namespace svs
