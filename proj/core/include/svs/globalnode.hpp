#pragma once

// Central ingestion: cross-camera re-identification, metadata persistence,
// EWMA-based statistical analysis of window scores, and routing of the two
// anomaly paths (object = immediate, behavioral = analyzer-gated) toward
// the cloud broker.

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "svs/analytics.hpp"
#include "svs/cloud.hpp"
#include "svs/pipeline.hpp"
#include "svs/sim.hpp"

namespace svs {

class Recorder;

struct GlobalConfig {
    double theta_anom = 0.5;
    double ewma_alpha = 0.3;
    int k_consecutive = 2;
    int cooldown_windows = 3;
    double theta_reid = 0.7;
    std::set<std::string> suspicious_classes = {"backpack", "gun", "knife"};
    int forward_max_retries = 50;
    double forward_retry_ms = 200.0;

    static GlobalConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

void validate_global_config(const GlobalConfig& cfg);

struct AnomalyEvent {
    std::string event_id;
    AnomalyKind kind = AnomalyKind::Object;
    std::string camera_id;
    TimeNs trigger_ts = 0;  // capture_ts of the evidence frame
    TimeNs detect_ts = 0;   // when the producing stage emitted it
    nlohmann::json detail;  // object: class+bbox; behavioral: score+window span
};

// ---------------------------------------------------------------------------
// Re-identification registry
// ---------------------------------------------------------------------------

struct GlobalTrack {
    std::int64_t global_id = 0;
    FeatureVector centroid{};  // running mean, re-normalized
    std::set<std::pair<std::string, std::int64_t>> member_locals;
    TimeNs last_seen_ts = 0;
    std::int64_t samples = 0;
};

class ReidRegistry {
  public:
    explicit ReidRegistry(double theta_reid = 0.7) : theta_(theta_reid) {}

    // Nearest-centroid matching at theta; a (camera, local) pair already
    // bound keeps its binding regardless of the new feature.
    std::int64_t match(const FeatureVector& feature, const std::string& camera_id,
                       std::int64_t local_id, TimeNs now_ts);

    const std::vector<GlobalTrack>& tracks() const { return tracks_; }
    std::size_t bindings() const { return bindings_.size(); }

  private:
    double theta_;
    std::vector<GlobalTrack> tracks_;
    std::map<std::pair<std::string, std::int64_t>, std::int64_t> bindings_;
    std::int64_t next_global_id_ = 1;
};

// ---------------------------------------------------------------------------
// Window-score analyzer
// ---------------------------------------------------------------------------

struct AnalyzerFire {
    std::int64_t window_index = 0;
    double scene_score = 0;
    double ewma = 0;
};

// Per-camera EWMA smoothing with k-consecutive confirmation and a cooldown
// (in windows) after each fire. Cooldown decrements at window start; the
// fire condition is consecutive_over >= k while no cooldown remains.
class Analyzer {
  public:
    explicit Analyzer(const GlobalConfig& cfg = {}) : cfg_(cfg) {}

    // Window indices must be strictly increasing per camera (gaps fine —
    // windows without qualifying persons are never emitted).
    std::optional<AnalyzerFire> observe(const std::string& camera_id, const WindowScore& ws);

    double ewma(const std::string& camera_id) const;
    int consecutive_over(const std::string& camera_id) const;
    int cooldown_remaining(const std::string& camera_id) const;

  private:
    struct State {
        bool seeded = false;
        std::int64_t last_window = -1;
        double ewma = 0;
        int consecutive_over = 0;
        int cooldown_remaining = 0;
    };

    GlobalConfig cfg_;
    std::map<std::string, State> states_;
};

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

enum class RecordKind { Counts, WindowScore, Crop, Event };

const char* to_string(RecordKind k);

struct StoredRecord {
    std::string camera_id;
    TimeNs timestamp = 0;
    RecordKind kind = RecordKind::Counts;
    nlohmann::json payload;  // metadata only, never frame content
};

class RecordStore {
  public:
    // Appends unless (camera_id, timestamp, kind) already exists; returns
    // whether the record was stored. Payloads carrying frame-descriptor
    // structure are rejected with ValidationError.
    bool append(StoredRecord r);

    // As append, but bumps the timestamp by 1 ns while the key is taken —
    // used for events, whose natural timestamps can collide within a batch.
    TimeNs append_unique(StoredRecord r);

    const std::vector<StoredRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    std::int64_t count(RecordKind kind) const;

  private:
    std::vector<StoredRecord> records_;
    std::set<std::tuple<std::string, TimeNs, int>> keys_;
};

// ---------------------------------------------------------------------------
// Global node
// ---------------------------------------------------------------------------

class GlobalNode {
  public:
    struct Params {
        SimKernel* kernel = nullptr;
        GlobalConfig config;
        BrokerHandle* broker = nullptr;          // optional
        KvHandle* kv = nullptr;                  // optional
        Recorder* recorder = nullptr;            // optional
        std::set<std::string> reporting_cameras;  // publish filter
        std::function<void(const AnomalyEvent&)> on_event;  // observation hook
    };

    explicit GlobalNode(Params params);

    // The ingest loop; spawn onto the kernel. Ends when the queue closes.
    SimTask<void> run(IngestQueue& in);

    const RecordStore& records() const { return store_; }
    ReidRegistry& reid() { return reid_; }
    Analyzer& analyzer() { return analyzer_; }

    std::uint64_t batches_ingested() const { return ingested_; }
    std::uint64_t duplicates_ignored() const { return duplicates_; }
    std::uint64_t events_emitted() const { return events_emitted_; }
    std::uint64_t events_published() const { return events_published_; }
    std::uint64_t events_dropped() const { return events_dropped_; }

  private:
    SimTask<void> ingest(const EnrichedBatch& b);
    SimTask<void> emit(AnomalyEvent ev);
    SimTask<void> forward(NotificationMessage msg);
    SimTask<void> put_async(KVItem item);
    // Appends Counts/WindowScore/Crop records; returns the counts payload
    // (reused for the asynchronous Counts-table put).
    nlohmann::json persist_batch(const EnrichedBatch& b);

    Params p_;
    ReidRegistry reid_;
    Analyzer analyzer_;
    RecordStore store_;
    std::set<std::pair<std::string, std::int64_t>> seen_batches_;
    std::set<std::tuple<std::string, std::string, std::int64_t>> object_dedup_;
    std::uint64_t ingested_ = 0;
    std::uint64_t duplicates_ = 0;
    std::uint64_t events_emitted_ = 0;
    std::uint64_t events_published_ = 0;
    std::uint64_t events_dropped_ = 0;
    std::uint64_t event_seq_ = 0;
    std::uint64_t put_seq_ = 0;
    std::uint64_t publish_seq_ = 0;
};

}  // namespace svs
