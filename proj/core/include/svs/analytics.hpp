#pragma once

// The algorithmic content of a local node: synthetic detection, IoU
// tracking, pose extraction, windowed behavior scoring, crop selection and
// identity features. Every transform is a pure function of (input,
// per-camera state, seeded rng) so pipelines can run them under either
// clock without behavioral differences.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "svs/geometry.hpp"
#include "svs/rng.hpp"
#include "svs/scenario.hpp"

namespace svs {

struct EnrichedBatch;  // defined in pipeline.hpp

inline constexpr std::size_t kFeatureDim = 128;
using FeatureVector = std::array<double, kFeatureDim>;

double cosine(const FeatureVector& a, const FeatureVector& b);
void normalize(FeatureVector& v);

// Fixed deterministic unit vector per entity identity; the ground truth the
// re-identification accuracy is measured against.
FeatureVector identity_basis(const std::string& entity_id);

struct Detection {
    std::string camera_id;
    std::int64_t frame_index = 0;
    std::string det_class;
    BBox bbox;
    double confidence = 0;
    std::int64_t local_track_id = -1;  // persons only, set by the tracker
    bool has_keypoints = false;
    KeypointSet keypoints{};
    bool has_feature = false;
    FeatureVector feature{};
    std::string gt_entity_id;  // evaluation-only; never persisted
};

struct DetectConfig {
    double p_detect = 0.95;
    double bbox_noise_px = 2.0;
    std::set<std::string> suspicious_classes = {"backpack", "gun", "knife"};
};

// Per-frame detection primitive; the batch stage maps it over all frames
// with one per-batch rng stream.
std::vector<Detection> detect_frame(const FrameDescriptor& frame, const DetectConfig& cfg,
                                    Rng& rng);

// ---------------------------------------------------------------------------
// Tracking
// ---------------------------------------------------------------------------

struct TrackerConfig {
    double tau_iou = 0.3;
    std::int64_t max_age = 30;  // frames a tracklet survives unmatched
};

struct Tracklet {
    std::int64_t local_id = 0;
    BBox last_bbox;
    std::int64_t last_frame = -1;
    std::int64_t frames_since_match = 0;
    std::vector<std::pair<std::int64_t, BBox>> history;  // capped tail
};

// One camera's tracker. update_frame must be called for every frame index
// in order (including frames with no detections) so ages stay in frames.
class Tracker {
  public:
    explicit Tracker(std::string camera_id, TrackerConfig cfg = {})
        : camera_id_(std::move(camera_id)), cfg_(cfg) {}

    // Greedy highest-IoU association of this frame's person detections
    // against live tracklets; assigns local_track_id on each detection.
    void update_frame(std::int64_t frame_index, std::vector<Detection*>& persons);

    const std::vector<Tracklet>& live() const { return live_; }
    const std::string& camera_id() const { return camera_id_; }
    std::int64_t tracks_created() const { return next_local_id_ - 1; }

  private:
    std::string camera_id_;
    TrackerConfig cfg_;
    std::vector<Tracklet> live_;
    std::int64_t next_local_id_ = 1;
};

// ---------------------------------------------------------------------------
// Pose
// ---------------------------------------------------------------------------

struct PoseConfig {
    // Same noise family as detection (per-coordinate uniform), magnitude
    // scaled for keypoints so gait statistics stay meaningful.
    double kp_noise_px = 0.25;
};

// Copies the matched entity's ground-truth keypoints onto the detection,
// perturbed per coordinate by uniform ±kp_noise_px.
void attach_pose(Detection& det, const GtEntity& entity, const PoseConfig& cfg, Rng& rng);

// ---------------------------------------------------------------------------
// Windowed behavior scoring
// ---------------------------------------------------------------------------

inline constexpr std::int64_t kWindowSize = 30;
inline constexpr std::int64_t kWindowStride = 20;

struct WindowScore {
    std::string camera_id;
    std::int64_t window_index = 0;
    std::int64_t first_frame = 0;
    std::int64_t last_frame = 0;  // inclusive; last - first + 1 == kWindowSize
    std::map<std::int64_t, double> person_scores;       // local_id -> [0,1]
    std::map<std::int64_t, double> frame_scene_scores;  // frame -> [0,1]

    // The scalar the analyzer consumes.
    double scene_score() const;
};

struct ScoreConfig {
    double v_ref = 2.0;        // px/frame normalizer; score = min(1, disp/v_ref)
    int min_presence = 10;     // frames a person must appear in a window
};

// Rolling per-camera pose buffer. Feed every frame's tracked keypoints;
// windows [20i, 20i+30) are evaluated once their last frame has arrived.
class PoseBuffer {
  public:
    explicit PoseBuffer(std::string camera_id, ScoreConfig cfg = {})
        : camera_id_(std::move(camera_id)), cfg_(cfg) {}

    void add_frame(std::int64_t frame_index,
                   const std::vector<std::pair<std::int64_t, KeypointSet>>& persons);

    // Evaluates every not-yet-evaluated window whose last frame is
    // <= through_frame, in window order. Windows with no person meeting
    // min_presence emit nothing.
    std::vector<WindowScore> complete_through(std::int64_t through_frame);

    std::int64_t windows_evaluated() const { return next_window_; }

  private:
    std::optional<WindowScore> evaluate_window(std::int64_t w);

    std::string camera_id_;
    ScoreConfig cfg_;
    // frame -> local_id -> keypoints
    std::map<std::int64_t, std::map<std::int64_t, KeypointSet>> frames_;
    std::int64_t next_window_ = 0;
};

// Number of evaluated windows for a run of T frames (T >= 30).
constexpr std::int64_t window_count(std::int64_t total_frames) {
    return total_frames < kWindowSize ? 0
                                      : (total_frames - kWindowSize) / kWindowStride + 1;
}

// Latest-window-wins merge of completed windows into a per-frame scene
// score timeline; frames covered only by a pending window keep the value
// carried forward from the latest completed one.
std::map<std::int64_t, double> scene_timeline(const std::vector<WindowScore>& completed);

// ---------------------------------------------------------------------------
// Crop selection and features
// ---------------------------------------------------------------------------

// Information metric: bbox area x fraction of keypoints with confidence
// >= 0.3. No keypoints -> 0.
double crop_metric(const Detection& det);

struct FeatureConfig {
    // Expected total noise norm; per-component sigma is sigma_feat/sqrt(d).
    double sigma_feat = 0.05;
};

// feature = normalize(identity_basis(gt_entity_id) + noise).
FeatureVector make_feature(const std::string& entity_id, const FeatureConfig& cfg, Rng& rng);

// ---------------------------------------------------------------------------
// Batch-level stage transforms (EnrichedBatch defined in pipeline.hpp)
// ---------------------------------------------------------------------------

void detect_batch(EnrichedBatch& b, const DetectConfig& cfg, Rng& rng);
void track_batch(EnrichedBatch& b, Tracker& tracker);
void pose_batch(EnrichedBatch& b, const PoseConfig& cfg, Rng& rng);
// Appends poses to the buffer and stores completed WindowScores on the batch.
void score_batch(EnrichedBatch& b, PoseBuffer& buffer);
// local_id -> frame_index of the most informative detection, exact argmax.
std::map<std::int64_t, std::int64_t> select_crop(const EnrichedBatch& b);
// Attaches features to the crop-selected detections and records the choice.
void extract_features_batch(EnrichedBatch& b, const FeatureConfig& cfg, Rng& rng);

}  // namespace svs
