#include "svs/globalnode.hpp"

#include <algorithm>
#include <cmath>

#include "svs/geometry.hpp"
#include "svs/telemetry.hpp"

namespace svs {

using nlohmann::json;

GlobalConfig GlobalConfig::from_json(const json& j) {
    GlobalConfig cfg;
    auto num = [&](const char* key, double fallback) {
        if (!j.contains(key)) return fallback;
        if (!j.at(key).is_number())
            throw ParseError(std::string("global config '") + key + "' must be a number");
        return j.at(key).get<double>();
    };
    cfg.theta_anom = num("theta_anom", cfg.theta_anom);
    cfg.ewma_alpha = num("ewma_alpha", cfg.ewma_alpha);
    cfg.k_consecutive = static_cast<int>(num("k_consecutive", cfg.k_consecutive));
    cfg.cooldown_windows = static_cast<int>(num("cooldown_windows", cfg.cooldown_windows));
    cfg.theta_reid = num("theta_reid", cfg.theta_reid);
    cfg.forward_max_retries =
        static_cast<int>(num("forward_max_retries", cfg.forward_max_retries));
    cfg.forward_retry_ms = num("forward_retry_ms", cfg.forward_retry_ms);
    if (j.contains("suspicious_classes")) {
        if (!j["suspicious_classes"].is_array())
            throw ParseError("suspicious_classes must be an array");
        cfg.suspicious_classes.clear();
        for (const json& c : j["suspicious_classes"])
            cfg.suspicious_classes.insert(c.get<std::string>());
    }
    validate_global_config(cfg);
    return cfg;
}

json GlobalConfig::to_json() const {
    json j;
    j["theta_anom"] = theta_anom;
    j["ewma_alpha"] = ewma_alpha;
    j["k_consecutive"] = k_consecutive;
    j["cooldown_windows"] = cooldown_windows;
    j["theta_reid"] = theta_reid;
    j["suspicious_classes"] = suspicious_classes;
    j["forward_max_retries"] = forward_max_retries;
    j["forward_retry_ms"] = forward_retry_ms;
    return j;
}

void validate_global_config(const GlobalConfig& cfg) {
    if (cfg.theta_anom < 0 || cfg.theta_anom > 1)
        throw ValidationError("theta_anom must be in [0,1]");
    if (cfg.ewma_alpha <= 0 || cfg.ewma_alpha > 1)
        throw ValidationError("ewma_alpha must be in (0,1]");
    if (cfg.k_consecutive < 1) throw ValidationError("k_consecutive must be >= 1");
    if (cfg.cooldown_windows < 0) throw ValidationError("cooldown_windows must be >= 0");
    if (cfg.theta_reid < 0 || cfg.theta_reid > 1)
        throw ValidationError("theta_reid must be in [0,1]");
    if (cfg.forward_max_retries < 0) throw ValidationError("forward_max_retries must be >= 0");
    if (cfg.forward_retry_ms < 0) throw ValidationError("forward_retry_ms must be >= 0");
}

// ---------------------------------------------------------------------------
// Re-identification
// ---------------------------------------------------------------------------

std::int64_t ReidRegistry::match(const FeatureVector& feature, const std::string& camera_id,
                                 std::int64_t local_id, TimeNs now_ts) {
    const std::pair<std::string, std::int64_t> local{camera_id, local_id};

    auto absorb = [&](GlobalTrack& t) {
        const double n = static_cast<double>(t.samples);
        for (std::size_t i = 0; i < kFeatureDim; ++i)
            t.centroid[i] = (t.centroid[i] * n + feature[i]) / (n + 1.0);
        normalize(t.centroid);
        ++t.samples;
        t.member_locals.insert(local);
        t.last_seen_ts = now_ts;
    };

    auto bound = bindings_.find(local);
    if (bound != bindings_.end()) {
        for (auto& t : tracks_) {
            if (t.global_id == bound->second) {
                absorb(t);
                return t.global_id;
            }
        }
    }

    double best = -1.0;
    GlobalTrack* best_track = nullptr;
    for (auto& t : tracks_) {
        const double sim = cosine(feature, t.centroid);
        if (sim > best) {
            best = sim;
            best_track = &t;
        }
    }
    if (best_track && best >= theta_) {
        absorb(*best_track);
        bindings_[local] = best_track->global_id;
        return best_track->global_id;
    }

    GlobalTrack t;
    t.global_id = next_global_id_++;
    t.centroid = feature;
    normalize(t.centroid);
    t.samples = 1;
    t.member_locals.insert(local);
    t.last_seen_ts = now_ts;
    tracks_.push_back(std::move(t));
    bindings_[local] = tracks_.back().global_id;
    return tracks_.back().global_id;
}

// ---------------------------------------------------------------------------
// Analyzer
// ---------------------------------------------------------------------------

std::optional<AnalyzerFire> Analyzer::observe(const std::string& camera_id,
                                              const WindowScore& ws) {
    State& st = states_[camera_id];
    if (st.seeded && ws.window_index <= st.last_window)
        throw ProtocolError("camera " + camera_id + ": window " +
                            std::to_string(ws.window_index) + " out of order (last " +
                            std::to_string(st.last_window) + ")");
    const double s = ws.scene_score();
    st.ewma = st.seeded ? cfg_.ewma_alpha * s + (1.0 - cfg_.ewma_alpha) * st.ewma : s;
    st.seeded = true;
    st.last_window = ws.window_index;

    if (st.cooldown_remaining > 0) --st.cooldown_remaining;
    if (st.ewma >= cfg_.theta_anom)
        ++st.consecutive_over;
    else
        st.consecutive_over = 0;

    if (st.consecutive_over >= cfg_.k_consecutive && st.cooldown_remaining == 0) {
        st.cooldown_remaining = cfg_.cooldown_windows;
        return AnalyzerFire{ws.window_index, s, st.ewma};
    }
    return std::nullopt;
}

double Analyzer::ewma(const std::string& camera_id) const {
    auto it = states_.find(camera_id);
    return it == states_.end() ? 0.0 : it->second.ewma;
}

int Analyzer::consecutive_over(const std::string& camera_id) const {
    auto it = states_.find(camera_id);
    return it == states_.end() ? 0 : it->second.consecutive_over;
}

int Analyzer::cooldown_remaining(const std::string& camera_id) const {
    auto it = states_.find(camera_id);
    return it == states_.end() ? 0 : it->second.cooldown_remaining;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

const char* to_string(RecordKind k) {
    switch (k) {
        case RecordKind::Counts: return "Counts";
        case RecordKind::WindowScore: return "WindowScore";
        case RecordKind::Crop: return "Crop";
        case RecordKind::Event: return "Event";
    }
    return "Counts";
}

namespace {

void reject_frame_content(const json& payload) {
    static const char* kForbidden[] = {"entities", "visible_objects", "frames"};
    if (payload.is_object()) {
        for (const auto& [key, value] : payload.items()) {
            for (const char* f : kForbidden)
                if (key == f)
                    throw ValidationError("stored record payload carries frame content ('" +
                                          key + "')");
            reject_frame_content(value);
        }
    } else if (payload.is_array()) {
        for (const auto& v : payload) reject_frame_content(v);
    }
}

}  // namespace

bool RecordStore::append(StoredRecord r) {
    reject_frame_content(r.payload);
    if (!keys_.insert({r.camera_id, r.timestamp, static_cast<int>(r.kind)}).second)
        return false;
    records_.push_back(std::move(r));
    return true;
}

TimeNs RecordStore::append_unique(StoredRecord r) {
    reject_frame_content(r.payload);
    while (!keys_.insert({r.camera_id, r.timestamp, static_cast<int>(r.kind)}).second)
        ++r.timestamp;
    const TimeNs ts = r.timestamp;
    records_.push_back(std::move(r));
    return ts;
}

std::int64_t RecordStore::count(RecordKind kind) const {
    std::int64_t n = 0;
    for (const auto& r : records_)
        if (r.kind == kind) ++n;
    return n;
}

// ---------------------------------------------------------------------------
// Global node
// ---------------------------------------------------------------------------

GlobalNode::GlobalNode(Params params)
    : p_(std::move(params)), reid_(p_.config.theta_reid), analyzer_(p_.config) {
    validate_global_config(p_.config);
    if (!p_.kernel) throw ValidationError("global node needs a kernel");
}

SimTask<void> GlobalNode::run(IngestQueue& in) {
    while (true) {
        auto item = co_await in.pop();
        if (!item) break;
        co_await ingest(**item);
    }
}

json GlobalNode::persist_batch(const EnrichedBatch& b) {
    const std::string& cam = b.batch.camera_id;

    // Per-class counts plus 16x16 bbox-center visit cells for the heatmap.
    std::map<std::string, std::int64_t> class_counts;
    std::map<std::pair<int, int>, std::int64_t> cells;
    for (const auto& d : b.detections) {
        ++class_counts[d.det_class];
        const double cx = d.bbox.x + d.bbox.w / 2.0;
        const double cy = d.bbox.y + d.bbox.h / 2.0;
        int c = static_cast<int>(cx / (kFrameWidth / static_cast<double>(kHeatmapCells)));
        int r = static_cast<int>(cy / (kFrameHeight / static_cast<double>(kHeatmapCells)));
        c = std::clamp(c, 0, kHeatmapCells - 1);
        r = std::clamp(r, 0, kHeatmapCells - 1);
        ++cells[{r, c}];
    }
    json counts_payload;
    counts_payload["batch_index"] = b.batch.batch_index;
    for (const auto& [cls, n] : class_counts) counts_payload["count_" + cls] = n;
    for (const auto& [rc, n] : cells)
        counts_payload["cell_" + std::to_string(rc.first) + "_" + std::to_string(rc.second)] =
            n;
    store_.append({cam, b.batch.capture_ts_last, RecordKind::Counts, counts_payload});

    for (const auto& ws : b.window_scores) {
        const FrameDescriptor* lf = b.frame(ws.last_frame);
        json payload;
        payload["window_index"] = ws.window_index;
        payload["scene_score"] = ws.scene_score();
        payload["persons_scored"] = ws.person_scores.size();
        store_.append({cam, lf ? lf->capture_ts : b.batch.capture_ts_last,
                       RecordKind::WindowScore, payload});
    }

    if (!b.crop_choices.empty()) {
        json choices = json::object();
        for (const auto& [local, frame] : b.crop_choices)
            choices[std::to_string(local)] = frame;
        json payload;
        payload["batch_index"] = b.batch.batch_index;
        payload["choices"] = std::move(choices);
        store_.append({cam, b.batch.capture_ts_last, RecordKind::Crop, payload});
    }
    return counts_payload;
}

SimTask<void> GlobalNode::forward(NotificationMessage msg) {
    SimKernel& k = *p_.kernel;
    const TimeNs start = k.now();
    for (int attempt = 0;; ++attempt) {
        try {
            co_await p_.broker->publish(msg);
            ++events_published_;
            if (p_.recorder)
                p_.recorder->record(MetricKind::CloudPublish, msg.camera_id,
                                    static_cast<std::int64_t>(++publish_seq_), start, k.now());
            co_return;
        } catch (const BrokerUnavailable&) {
            if (attempt >= p_.config.forward_max_retries) {
                ++events_dropped_;
                co_return;
            }
            co_await k.sleep_for(ms_to_ns(p_.config.forward_retry_ms));
        }
    }
}

SimTask<void> GlobalNode::put_async(KVItem item) {
    SimKernel& k = *p_.kernel;
    const TimeNs start = k.now();
    const std::string cam = item.key.camera_id;
    co_await p_.kv->put_item(std::move(item));
    if (p_.recorder)
        p_.recorder->record(MetricKind::CloudPut, cam, static_cast<std::int64_t>(++put_seq_),
                            start, k.now());
}

SimTask<void> GlobalNode::emit(AnomalyEvent ev) {
    ++events_emitted_;
    ev.event_id = ev.camera_id + "/" + (ev.kind == AnomalyKind::Object ? "obj" : "beh") + "/" +
                  std::to_string(++event_seq_);

    json payload = ev.detail;
    payload["event_kind"] = to_string(ev.kind);
    payload["event_id"] = ev.event_id;
    payload["trigger_ts"] = ev.trigger_ts;
    const TimeNs stored_ts =
        store_.append_unique({ev.camera_id, ev.detect_ts, RecordKind::Event, payload});

    if (p_.kv) {
        KVItem item;
        item.table = KvTable::Analytics;
        item.key = {ev.camera_id, stored_ts};
        // The store accepts scalar attributes only; structured detail
        // fields (e.g. a bbox) ride along as their JSON text.
        item.attributes = json::object();
        for (const auto& [key, value] : payload.items()) {
            item.attributes[key] = value.is_primitive() ? value : json(value.dump());
        }
        p_.kernel->spawn(put_async(std::move(item)));
    }
    if (p_.on_event) p_.on_event(ev);

    if (p_.broker && p_.reporting_cameras.count(ev.camera_id)) {
        NotificationMessage msg;
        msg.topic = topic_for(ev.kind);
        msg.camera_id = ev.camera_id;
        msg.kind = ev.kind;
        msg.trigger_ts = ev.trigger_ts;
        msg.detail = ev.detail;
        msg.detail["event_id"] = ev.event_id;
        msg.detail["detect_ts"] = ev.detect_ts;
        co_await forward(std::move(msg));
    }
}

SimTask<void> GlobalNode::ingest(const EnrichedBatch& b) {
    SimKernel& k = *p_.kernel;
    const std::string& cam = b.batch.camera_id;
    if (!seen_batches_.insert({cam, b.batch.batch_index}).second) {
        ++duplicates_;
        co_return;  // idempotent acknowledgment
    }
    ++ingested_;

    const json counts_payload = persist_batch(b);
    if (p_.recorder)
        p_.recorder->record(MetricKind::WholeSystem, cam, b.batch.batch_index,
                            b.latency_ref_ts, k.now());

    for (const auto& d : b.detections) {
        if (d.has_feature && d.local_track_id >= 0)
            reid_.match(d.feature, cam, d.local_track_id, k.now());
    }

    // Red path: suspicious-class detections become events immediately,
    // deduplicated per (camera, class, batch).
    const TimeNs detect_done = b.stage_time("detect").value_or(k.now());
    for (const auto& d : b.detections) {
        if (!p_.config.suspicious_classes.count(d.det_class)) continue;
        if (!object_dedup_.insert({cam, d.det_class, b.batch.batch_index}).second) continue;
        const FrameDescriptor* fd = b.frame(d.frame_index);
        AnomalyEvent ev;
        ev.kind = AnomalyKind::Object;
        ev.camera_id = cam;
        ev.trigger_ts = fd ? fd->capture_ts : b.batch.capture_ts_first;
        ev.detect_ts = detect_done;
        ev.detail = {{"class", d.det_class},
                     {"frame_index", d.frame_index},
                     {"bbox", {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h}},
                     {"confidence", d.confidence}};
        co_await emit(std::move(ev));
    }

    const TimeNs score_done = b.stage_time("anomaly_score").value_or(k.now());
    for (const auto& ws : b.window_scores) {
        auto fire = analyzer_.observe(cam, ws);
        if (!fire) continue;
        const FrameDescriptor* lf = b.frame(ws.last_frame);
        AnomalyEvent ev;
        ev.kind = AnomalyKind::Behavioral;
        ev.camera_id = cam;
        ev.trigger_ts = lf ? lf->capture_ts : b.batch.capture_ts_last;
        ev.detect_ts = score_done;
        ev.detail = {{"score", fire->scene_score},
                     {"ewma", fire->ewma},
                     {"window_index", ws.window_index},
                     {"first_frame", ws.first_frame},
                     {"last_frame", ws.last_frame}};
        co_await emit(std::move(ev));
    }

    if (p_.kv) {
        // Historical tables fill in asynchronously after the ack.
        KVItem item;
        item.table = KvTable::Counts;
        item.key = {cam, b.batch.capture_ts_last};
        item.attributes = counts_payload;
        k.spawn(put_async(std::move(item)));

        for (const auto& ws : b.window_scores) {
            const FrameDescriptor* lf = b.frame(ws.last_frame);
            KVItem w;
            w.table = KvTable::Analytics;
            w.key = {cam, lf ? lf->capture_ts : b.batch.capture_ts_last};
            w.attributes = {{"window_index", ws.window_index},
                            {"scene_score", ws.scene_score()},
                            {"ewma", analyzer_.ewma(cam)}};
            k.spawn(put_async(std::move(w)));
        }
    }
}

}  // namespace svs
