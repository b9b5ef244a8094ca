#include "svs/analytics.hpp"

#include <algorithm>
#include <cmath>

#include "svs/pipeline.hpp"

namespace svs {

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

double cosine(const FeatureVector& a, const FeatureVector& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < kFeatureDim; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

void normalize(FeatureVector& v) {
    double n = 0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n == 0) {
        v[0] = 1.0;
        return;
    }
    for (double& x : v) x /= n;
}

FeatureVector identity_basis(const std::string& entity_id) {
    Rng rng(derive_seed(0x1dba844u, "identity-basis", stable_hash(entity_id)));
    FeatureVector v;
    for (double& x : v) x = rng.gaussian();
    normalize(v);
    return v;
}

FeatureVector make_feature(const std::string& entity_id, const FeatureConfig& cfg, Rng& rng) {
    FeatureVector v = identity_basis(entity_id);
    const double per_component = cfg.sigma_feat / std::sqrt(static_cast<double>(kFeatureDim));
    for (double& x : v) x += rng.gaussian(0.0, per_component);
    normalize(v);
    return v;
}

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

std::vector<Detection> detect_frame(const FrameDescriptor& frame, const DetectConfig& cfg,
                                    Rng& rng) {
    std::vector<Detection> out;
    auto emit = [&](const std::string& cls, const BBox& gt_box, const std::string& gt_id) {
        if (!rng.chance(cfg.p_detect)) return;
        Detection d;
        d.camera_id = frame.camera_id;
        d.frame_index = frame.frame_index;
        d.det_class = cls;
        const double dx = rng.uniform(-cfg.bbox_noise_px, cfg.bbox_noise_px);
        const double dy = rng.uniform(-cfg.bbox_noise_px, cfg.bbox_noise_px);
        d.bbox = clamp_to_frame({gt_box.x + dx, gt_box.y + dy, gt_box.w, gt_box.h});
        d.confidence = rng.uniform(0.5, 1.0);
        d.gt_entity_id = gt_id;
        out.push_back(std::move(d));
    };
    for (const auto& e : frame.entities) emit(e.entity_class, e.bbox, e.entity_id);
    for (const auto& o : frame.visible_objects) emit(o.object_class, o.bbox, o.source_entity);
    return out;
}

// ---------------------------------------------------------------------------
// Tracking
// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kHistoryCap = 256;

}  // namespace

void Tracker::update_frame(std::int64_t frame_index, std::vector<Detection*>& persons) {
    // Candidate pairs above threshold, best overlap first; ties broken by
    // (older tracklet, earlier detection) for determinism.
    struct Pair {
        double overlap;
        std::size_t t, d;
    };
    std::vector<Pair> pairs;
    for (std::size_t ti = 0; ti < live_.size(); ++ti) {
        for (std::size_t di = 0; di < persons.size(); ++di) {
            const double ov = iou(live_[ti].last_bbox, persons[di]->bbox);
            if (ov > cfg_.tau_iou) pairs.push_back({ov, ti, di});
        }
    }
    std::sort(pairs.begin(), pairs.end(), [this](const Pair& a, const Pair& b) {
        if (a.overlap != b.overlap) return a.overlap > b.overlap;
        if (live_[a.t].local_id != live_[b.t].local_id)
            return live_[a.t].local_id < live_[b.t].local_id;
        return a.d < b.d;
    });

    std::vector<bool> t_used(live_.size(), false), d_used(persons.size(), false);
    for (const Pair& p : pairs) {
        if (t_used[p.t] || d_used[p.d]) continue;
        t_used[p.t] = d_used[p.d] = true;
        Tracklet& tr = live_[p.t];
        persons[p.d]->local_track_id = tr.local_id;
        tr.last_bbox = persons[p.d]->bbox;
        tr.last_frame = frame_index;
        tr.frames_since_match = 0;
        tr.history.emplace_back(frame_index, tr.last_bbox);
        if (tr.history.size() > kHistoryCap)
            tr.history.erase(tr.history.begin(), tr.history.begin() + kHistoryCap / 2);
    }

    for (std::size_t di = 0; di < persons.size(); ++di) {
        if (d_used[di]) continue;
        Tracklet tr;
        tr.local_id = next_local_id_++;
        tr.last_bbox = persons[di]->bbox;
        tr.last_frame = frame_index;
        tr.frames_since_match = 0;
        tr.history.emplace_back(frame_index, tr.last_bbox);
        persons[di]->local_track_id = tr.local_id;
        live_.push_back(std::move(tr));
    }

    for (std::size_t ti = 0; ti < live_.size(); ++ti) {
        if (ti < t_used.size() && t_used[ti]) continue;
        if (live_[ti].last_frame != frame_index) ++live_[ti].frames_since_match;
    }
    live_.erase(std::remove_if(live_.begin(), live_.end(),
                               [this](const Tracklet& t) {
                                   return t.frames_since_match > cfg_.max_age;
                               }),
                live_.end());
}

// ---------------------------------------------------------------------------
// Pose
// ---------------------------------------------------------------------------

void attach_pose(Detection& det, const GtEntity& entity, const PoseConfig& cfg, Rng& rng) {
    det.keypoints = entity.keypoints;
    for (auto& kp : det.keypoints) {
        kp.x += rng.uniform(-cfg.kp_noise_px, cfg.kp_noise_px);
        kp.y += rng.uniform(-cfg.kp_noise_px, cfg.kp_noise_px);
    }
    det.has_keypoints = true;
}

// ---------------------------------------------------------------------------
// Window scoring
// ---------------------------------------------------------------------------

double WindowScore::scene_score() const {
    double s = 0;
    for (const auto& [f, v] : frame_scene_scores) s = std::max(s, v);
    return s;
}

void PoseBuffer::add_frame(std::int64_t frame_index,
                           const std::vector<std::pair<std::int64_t, KeypointSet>>& persons) {
    if (persons.empty()) return;
    auto& slot = frames_[frame_index];
    for (const auto& [local_id, kps] : persons) slot[local_id] = kps;
}

std::optional<WindowScore> PoseBuffer::evaluate_window(std::int64_t w) {
    const std::int64_t first = w * kWindowStride;
    const std::int64_t last = first + kWindowSize - 1;

    // Gather per-person presence within [first, last].
    std::map<std::int64_t, std::vector<std::pair<std::int64_t, const KeypointSet*>>> present;
    for (auto it = frames_.lower_bound(first); it != frames_.end() && it->first <= last; ++it) {
        for (const auto& [local_id, kps] : it->second)
            present[local_id].emplace_back(it->first, &kps);
    }

    WindowScore ws;
    ws.camera_id = camera_id_;
    ws.window_index = w;
    ws.first_frame = first;
    ws.last_frame = last;

    for (const auto& [local_id, samples] : present) {
        if (static_cast<int>(samples.size()) < cfg_.min_presence) continue;
        double total = 0;
        int steps = 0;
        for (std::size_t i = 1; i < samples.size(); ++i) {
            const double gap =
                static_cast<double>(samples[i].first - samples[i - 1].first);
            total += mean_keypoint_displacement(*samples[i - 1].second, *samples[i].second) /
                     gap;
            ++steps;
        }
        if (steps == 0) continue;
        const double score = std::min(1.0, (total / steps) / cfg_.v_ref);
        ws.person_scores[local_id] = score;
    }
    if (ws.person_scores.empty()) return std::nullopt;

    for (const auto& [local_id, score] : ws.person_scores) {
        for (const auto& [f, kps] : present[local_id]) {
            auto it = ws.frame_scene_scores.find(f);
            if (it == ws.frame_scene_scores.end() || it->second < score)
                ws.frame_scene_scores[f] = score;
        }
    }
    return ws;
}

std::vector<WindowScore> PoseBuffer::complete_through(std::int64_t through_frame) {
    std::vector<WindowScore> out;
    while (next_window_ * kWindowStride + kWindowSize - 1 <= through_frame) {
        if (auto ws = evaluate_window(next_window_)) out.push_back(std::move(*ws));
        ++next_window_;
        // Frames before the next window's start are never needed again.
        frames_.erase(frames_.begin(), frames_.lower_bound(next_window_ * kWindowStride));
    }
    return out;
}

std::map<std::int64_t, double> scene_timeline(const std::vector<WindowScore>& completed) {
    std::map<std::int64_t, double> timeline;
    std::vector<const WindowScore*> order;
    order.reserve(completed.size());
    for (const auto& ws : completed) order.push_back(&ws);
    std::sort(order.begin(), order.end(), [](const WindowScore* a, const WindowScore* b) {
        return a->window_index < b->window_index;
    });
    for (const WindowScore* ws : order) {
        for (const auto& [f, s] : ws->frame_scene_scores) timeline[f] = s;
    }
    return timeline;
}

// ---------------------------------------------------------------------------
// Crop metric
// ---------------------------------------------------------------------------

double crop_metric(const Detection& det) {
    if (!det.has_keypoints) return 0;
    int confident = 0;
    for (const auto& kp : det.keypoints)
        if (kp.confidence >= 0.3) ++confident;
    return det.bbox.area() * (static_cast<double>(confident) /
                              static_cast<double>(kKeypointCount));
}

// ---------------------------------------------------------------------------
// Batch-level transforms
// ---------------------------------------------------------------------------

void detect_batch(EnrichedBatch& b, const DetectConfig& cfg, Rng& rng) {
    b.detections.clear();
    for (const auto& fd : b.batch.frames) {
        auto dets = detect_frame(fd, cfg, rng);
        for (auto& d : dets) b.detections.push_back(std::move(d));
    }
}

void track_batch(EnrichedBatch& b, Tracker& tracker) {
    auto it = b.detections.begin();
    for (const auto& fd : b.batch.frames) {
        std::vector<Detection*> persons;
        while (it != b.detections.end() && it->frame_index == fd.frame_index) {
            if (it->det_class == "person") persons.push_back(&*it);
            ++it;
        }
        tracker.update_frame(fd.frame_index, persons);
    }
}

void pose_batch(EnrichedBatch& b, const PoseConfig& cfg, Rng& rng) {
    for (auto& d : b.detections) {
        if (d.det_class != "person" || d.local_track_id < 0) continue;
        const FrameDescriptor* fd = b.frame(d.frame_index);
        if (!fd) continue;
        for (const auto& e : fd->entities) {
            if (e.entity_id == d.gt_entity_id && e.has_keypoints) {
                attach_pose(d, e, cfg, rng);
                break;
            }
        }
    }
}

void score_batch(EnrichedBatch& b, PoseBuffer& buffer) {
    auto it = b.detections.begin();
    for (const auto& fd : b.batch.frames) {
        std::vector<std::pair<std::int64_t, KeypointSet>> persons;
        while (it != b.detections.end() && it->frame_index == fd.frame_index) {
            if (it->has_keypoints && it->local_track_id >= 0)
                persons.emplace_back(it->local_track_id, it->keypoints);
            ++it;
        }
        buffer.add_frame(fd.frame_index, persons);
    }
    b.window_scores = buffer.complete_through(b.batch.frames.back().frame_index);
}

std::map<std::int64_t, std::int64_t> select_crop(const EnrichedBatch& b) {
    std::map<std::int64_t, std::int64_t> best_frame;
    std::map<std::int64_t, double> best_metric;
    for (const auto& d : b.detections) {
        if (d.det_class != "person" || d.local_track_id < 0) continue;
        const double m = crop_metric(d);
        auto it = best_metric.find(d.local_track_id);
        if (it == best_metric.end() || m > it->second) {
            best_metric[d.local_track_id] = m;
            best_frame[d.local_track_id] = d.frame_index;
        }
    }
    return best_frame;
}

void extract_features_batch(EnrichedBatch& b, const FeatureConfig& cfg, Rng& rng) {
    if (b.crop_choices.empty()) b.crop_choices = select_crop(b);
    for (auto& d : b.detections) {
        if (d.det_class != "person" || d.local_track_id < 0) continue;
        auto it = b.crop_choices.find(d.local_track_id);
        if (it == b.crop_choices.end() || it->second != d.frame_index) continue;
        if (d.has_feature) continue;  // one feature per (track, batch)
        d.feature = make_feature(d.gt_entity_id, cfg, rng);
        d.has_feature = true;
    }
}

}  // namespace svs
