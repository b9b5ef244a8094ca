#pragma once

// Self-hosted cloud tier: a topic notification broker, a key-value store
// with range queries, and the statistics service behind the end-user data
// views. Pure state cores are separated from the kernel-driven wrappers so
// the socket server can reuse the same logic under plain threads.

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "svs/errors.hpp"
#include "svs/scenario.hpp"
#include "svs/sim.hpp"
#include "svs/time.hpp"

namespace svs {

class Recorder;

// Per-API service delays; Table-style knobs so end-to-end latency includes
// the cloud hops. deliver_ms models the push/e-mail last hop between the
// broker and a subscriber's device.
struct CloudDelays {
    double get_ms = 14.6;
    double put_ms = 17.5;
    double publish_ms = 150.0;
    double stats_complex_ms = 105.0;
    double stats_simple_ms = 14.4;
    double deliver_ms = 0.0;

    static CloudDelays from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

// ---------------------------------------------------------------------------
// Notifications
// ---------------------------------------------------------------------------

inline constexpr const char* kTopicObject = "object-anomaly";
inline constexpr const char* kTopicBehavioral = "behavioral-anomaly";

const char* topic_for(AnomalyKind kind);

struct NotificationMessage {
    std::string topic;
    std::uint64_t seq = 0;  // per-topic, assigned by the broker from 1
    std::string camera_id;
    AnomalyKind kind = AnomalyKind::Object;
    TimeNs trigger_ts = 0;
    TimeNs publish_ts = 0;
    nlohmann::json detail;  // carries event_id and kind-specific fields

    nlohmann::json to_json() const;
    static NotificationMessage from_json(const nlohmann::json& j);
};

class BrokerUnavailable : public RuntimeError {
  public:
    BrokerUnavailable() : RuntimeError("broker unavailable") {}
    explicit BrokerUnavailable(const std::string& what) : RuntimeError(what) {}
};

// Abstract service handles: the global node runs against these, so the
// in-process services and socket clients are interchangeable.
struct BrokerHandle {
    virtual ~BrokerHandle() = default;
    // Completes when the broker has accepted the message (seq assigned);
    // deliveries to subscribers happen asynchronously afterwards.
    virtual SimTask<void> publish(NotificationMessage msg) = 0;
};

// Kernel-driven broker. Topics auto-create; delivery is at-least-once and
// per-topic ordered per subscriber; no retention for late subscribers.
class Broker final : public BrokerHandle {
  public:
    using Sink = std::function<void(const NotificationMessage&)>;

    Broker(SimKernel& k, CloudDelays delays = {}) : k_(&k), delays_(delays) {}

    // Sink is invoked once per delivered message (receipt instant = call
    // instant). Duplicate topics in one subscription are idempotent.
    int subscribe(const std::vector<std::string>& topics, Sink sink);
    void unsubscribe(int sub_id);

    SimTask<void> publish(NotificationMessage msg) override;

    // Fault injection: publishes fail with BrokerUnavailable while down.
    void set_available(bool up) { available_ = up; }
    // Every nth delivery is sent twice (0 = off) — at-least-once soak knob.
    void set_duplicate_every(std::uint64_t n) { duplicate_every_ = n; }

    std::uint64_t published() const { return published_; }
    std::uint64_t delivered() const { return delivered_; }
    std::uint64_t duplicates_injected() const { return duplicates_; }
    std::uint64_t topic_seq(const std::string& topic) const;

  private:
    struct Sub {
        int id = 0;
        std::set<std::string> topics;
        Sink sink;
    };

    SimTask<void> deliver(NotificationMessage msg, int sub_id);

    SimKernel* k_;
    CloudDelays delays_;
    std::vector<Sub> subs_;
    int next_sub_id_ = 1;
    std::map<std::string, std::uint64_t> seq_;
    bool available_ = true;
    std::uint64_t duplicate_every_ = 0;
    std::uint64_t delivery_counter_ = 0;
    std::uint64_t published_ = 0;
    std::uint64_t delivered_ = 0;
    std::uint64_t duplicates_ = 0;
};

// ---------------------------------------------------------------------------
// Key-value store
// ---------------------------------------------------------------------------

enum class KvTable { Counts, Analytics };

const char* to_string(KvTable t);
KvTable kv_table_from_string(const std::string& s);

struct KVKey {
    std::string camera_id;
    TimeNs timestamp = 0;

    friend bool operator<(const KVKey& a, const KVKey& b) {
        return a.camera_id != b.camera_id ? a.camera_id < b.camera_id
                                          : a.timestamp < b.timestamp;
    }
    friend bool operator==(const KVKey& a, const KVKey& b) {
        return a.camera_id == b.camera_id && a.timestamp == b.timestamp;
    }
};

struct KVItem {
    KvTable table = KvTable::Counts;
    KVKey key;
    nlohmann::json attributes;  // object of scalar values

    nlohmann::json to_json() const;
    static KVItem from_json(const nlohmann::json& j);
};

// Pure storage core shared by the sim wrapper and the socket server.
class KvStorage {
  public:
    // Last-writer-wins on duplicate key. Throws ValidationError on negative
    // timestamps or non-scalar attribute values.
    void put(const KVItem& item);
    std::optional<KVItem> get(KvTable table, const KVKey& key) const;
    // Matching camera, timestamp in [from, to] inclusive, ascending.
    std::vector<KVItem> query(KvTable table, const std::string& camera_id, TimeNs from,
                              TimeNs to) const;
    // All cameras, timestamp in [from, to], ascending (camera, timestamp).
    std::vector<KVItem> scan(KvTable table, TimeNs from, TimeNs to) const;
    std::size_t size(KvTable table) const;

  private:
    const std::map<KVKey, nlohmann::json>& table_of(KvTable t) const {
        return t == KvTable::Counts ? counts_ : analytics_;
    }
    std::map<KVKey, nlohmann::json>& table_of(KvTable t) {
        return t == KvTable::Counts ? counts_ : analytics_;
    }

    std::map<KVKey, nlohmann::json> counts_;
    std::map<KVKey, nlohmann::json> analytics_;
};

struct KvHandle {
    virtual ~KvHandle() = default;
    virtual SimTask<void> put_item(KVItem item) = 0;
    virtual SimTask<std::optional<KVItem>> get_item(KvTable table, KVKey key) = 0;
    virtual SimTask<std::vector<KVItem>> query_range(KvTable table, std::string camera_id,
                                                     TimeNs from, TimeNs to) = 0;
};

class KVStore final : public KvHandle {
  public:
    KVStore(SimKernel& k, CloudDelays delays = {}) : k_(&k), delays_(delays) {}

    SimTask<void> put_item(KVItem item) override;
    SimTask<std::optional<KVItem>> get_item(KvTable table, KVKey key) override;
    SimTask<std::vector<KVItem>> query_range(KvTable table, std::string camera_id, TimeNs from,
                                             TimeNs to) override;

    const KvStorage& storage() const { return storage_; }
    std::uint64_t puts() const { return puts_; }
    std::uint64_t gets() const { return gets_; }

  private:
    SimKernel* k_;
    CloudDelays delays_;
    KvStorage storage_;
    std::uint64_t puts_ = 0;
    std::uint64_t gets_ = 0;
};

// ---------------------------------------------------------------------------
// Statistics service
// ---------------------------------------------------------------------------

inline constexpr int kHeatmapCells = 16;  // 16x16 grid over the frame plane

struct StatsQuery {
    std::string metric;  // person_count_now, occupancy_indicator, heatmap,
                         // totals, averages, anomaly_list
    std::optional<std::string> camera_id;
    TimeNs from = 0;
    TimeNs to = std::numeric_limits<TimeNs>::max();

    nlohmann::json to_json() const;
    static StatsQuery from_json(const nlohmann::json& j);
};

struct StatsResult {
    std::string metric;
    nlohmann::json payload;
};

// Pure evaluation against a storage snapshot; repeatable given frozen data.
// Throws ParseError on an unknown metric, ValidationError on a bad range.
StatsResult stats_evaluate(const KvStorage& storage, const StatsQuery& query);

// Whether a metric takes the complex-query service delay.
bool stats_is_complex(const std::string& metric);

struct StatsHandle {
    virtual ~StatsHandle() = default;
    virtual SimTask<StatsResult> stats(StatsQuery query) = 0;
};

class StatsService final : public StatsHandle {
  public:
    StatsService(SimKernel& k, const KVStore& store, CloudDelays delays = {})
        : k_(&k), store_(&store), delays_(delays) {}

    SimTask<StatsResult> stats(StatsQuery query) override;

  private:
    SimKernel* k_;
    const KVStore* store_;
    CloudDelays delays_;
};

}  // namespace svs
