#include "svs/cloud.hpp"

#include <algorithm>
#include <cmath>

#include "svs/geometry.hpp"

namespace svs {

using nlohmann::json;

CloudDelays CloudDelays::from_json(const json& j) {
    CloudDelays d;
    auto num = [&](const char* key, double fallback) {
        if (!j.contains(key)) return fallback;
        if (!j.at(key).is_number())
            throw ParseError(std::string("cloud delay '") + key + "' must be a number");
        return j.at(key).get<double>();
    };
    d.get_ms = num("get_ms", d.get_ms);
    d.put_ms = num("put_ms", d.put_ms);
    d.publish_ms = num("publish_ms", d.publish_ms);
    d.stats_complex_ms = num("stats_complex_ms", d.stats_complex_ms);
    d.stats_simple_ms = num("stats_simple_ms", d.stats_simple_ms);
    d.deliver_ms = num("deliver_ms", d.deliver_ms);
    return d;
}

json CloudDelays::to_json() const {
    return json{{"get_ms", get_ms},
                {"put_ms", put_ms},
                {"publish_ms", publish_ms},
                {"stats_complex_ms", stats_complex_ms},
                {"stats_simple_ms", stats_simple_ms},
                {"deliver_ms", deliver_ms}};
}

const char* topic_for(AnomalyKind kind) {
    return kind == AnomalyKind::Object ? kTopicObject : kTopicBehavioral;
}

json NotificationMessage::to_json() const {
    return json{{"topic", topic},
                {"seq", seq},
                {"camera_id", camera_id},
                {"kind", to_string(kind)},
                {"trigger_ts", trigger_ts},
                {"publish_ts", publish_ts},
                {"detail", detail}};
}

NotificationMessage NotificationMessage::from_json(const json& j) {
    NotificationMessage m;
    m.topic = j.at("topic").get<std::string>();
    m.seq = j.at("seq").get<std::uint64_t>();
    m.camera_id = j.at("camera_id").get<std::string>();
    m.kind = anomaly_kind_from_string(j.at("kind").get<std::string>());
    m.trigger_ts = j.at("trigger_ts").get<TimeNs>();
    m.publish_ts = j.at("publish_ts").get<TimeNs>();
    if (j.contains("detail")) m.detail = j.at("detail");
    return m;
}

// ---------------------------------------------------------------------------
// Broker
// ---------------------------------------------------------------------------

int Broker::subscribe(const std::vector<std::string>& topics, Sink sink) {
    if (topics.empty()) throw ValidationError("subscribe requires at least one topic");
    Sub s;
    s.id = next_sub_id_++;
    s.topics.insert(topics.begin(), topics.end());
    s.sink = std::move(sink);
    subs_.push_back(std::move(s));
    return subs_.back().id;
}

void Broker::unsubscribe(int sub_id) {
    subs_.erase(std::remove_if(subs_.begin(), subs_.end(),
                               [sub_id](const Sub& s) { return s.id == sub_id; }),
                subs_.end());
}

std::uint64_t Broker::topic_seq(const std::string& topic) const {
    auto it = seq_.find(topic);
    return it == seq_.end() ? 0 : it->second;
}

SimTask<void> Broker::deliver(NotificationMessage msg, int sub_id) {
    co_await k_->sleep_for(ms_to_ns(delays_.deliver_ms));
    for (const Sub& s : subs_) {
        if (s.id != sub_id) continue;
        ++delivered_;
        s.sink(msg);
        break;  // unsubscribed while in flight: dropped silently
    }
}

SimTask<void> Broker::publish(NotificationMessage msg) {
    if (!available_) throw BrokerUnavailable();
    if (msg.topic.empty()) throw ValidationError("publish requires a topic");
    msg.seq = ++seq_[msg.topic];
    msg.publish_ts = k_->now();
    if (msg.publish_ts < msg.trigger_ts)
        throw ValidationError("publish_ts precedes trigger_ts on topic " + msg.topic);
    ++published_;

    co_await k_->sleep_for(ms_to_ns(delays_.publish_ms));

    for (const Sub& s : subs_) {
        if (!s.topics.count(msg.topic)) continue;
        k_->spawn(deliver(msg, s.id));
        ++delivery_counter_;
        if (duplicate_every_ > 0 && delivery_counter_ % duplicate_every_ == 0) {
            k_->spawn(deliver(msg, s.id));
            ++duplicates_;
        }
    }
}

// ---------------------------------------------------------------------------
// Key-value storage
// ---------------------------------------------------------------------------

const char* to_string(KvTable t) {
    return t == KvTable::Counts ? "CountsTable" : "AnalyticsTable";
}

KvTable kv_table_from_string(const std::string& s) {
    if (s == "CountsTable") return KvTable::Counts;
    if (s == "AnalyticsTable") return KvTable::Analytics;
    throw ParseError("unknown table '" + s + "' (expected CountsTable or AnalyticsTable)");
}

json KVItem::to_json() const {
    return json{{"table", to_string(table)},
                {"key", {{"camera_id", key.camera_id}, {"timestamp", key.timestamp}}},
                {"attributes", attributes}};
}

KVItem KVItem::from_json(const json& j) {
    KVItem item;
    item.table = kv_table_from_string(j.at("table").get<std::string>());
    item.key.camera_id = j.at("key").at("camera_id").get<std::string>();
    item.key.timestamp = j.at("key").at("timestamp").get<TimeNs>();
    item.attributes = j.at("attributes");
    return item;
}

void KvStorage::put(const KVItem& item) {
    if (item.key.camera_id.empty()) throw ValidationError("kv key needs a camera_id");
    if (item.key.timestamp < 0) throw ValidationError("kv key timestamp must be >= 0");
    if (!item.attributes.is_object()) throw ValidationError("kv attributes must be an object");
    for (const auto& [name, value] : item.attributes.items()) {
        if (!value.is_primitive() || value.is_null())
            throw ValidationError("kv attribute '" + name + "' must be a scalar");
    }
    table_of(item.table)[item.key] = item.attributes;
}

std::optional<KVItem> KvStorage::get(KvTable table, const KVKey& key) const {
    const auto& t = table_of(table);
    auto it = t.find(key);
    if (it == t.end()) return std::nullopt;
    return KVItem{table, key, it->second};
}

std::vector<KVItem> KvStorage::query(KvTable table, const std::string& camera_id, TimeNs from,
                                     TimeNs to) const {
    if (from > to) throw ValidationError("query range is reversed");
    std::vector<KVItem> out;
    const auto& t = table_of(table);
    for (auto it = t.lower_bound(KVKey{camera_id, from}); it != t.end(); ++it) {
        if (it->first.camera_id != camera_id || it->first.timestamp > to) break;
        out.push_back(KVItem{table, it->first, it->second});
    }
    return out;
}

std::vector<KVItem> KvStorage::scan(KvTable table, TimeNs from, TimeNs to) const {
    if (from > to) throw ValidationError("scan range is reversed");
    std::vector<KVItem> out;
    for (const auto& [key, attrs] : table_of(table)) {
        if (key.timestamp < from || key.timestamp > to) continue;
        out.push_back(KVItem{table, key, attrs});
    }
    return out;
}

std::size_t KvStorage::size(KvTable table) const { return table_of(table).size(); }

SimTask<void> KVStore::put_item(KVItem item) {
    co_await k_->sleep_for(ms_to_ns(delays_.put_ms));
    storage_.put(item);
    ++puts_;
}

SimTask<std::optional<KVItem>> KVStore::get_item(KvTable table, KVKey key) {
    co_await k_->sleep_for(ms_to_ns(delays_.get_ms));
    ++gets_;
    co_return storage_.get(table, key);
}

SimTask<std::vector<KVItem>> KVStore::query_range(KvTable table, std::string camera_id,
                                                  TimeNs from, TimeNs to) {
    co_await k_->sleep_for(ms_to_ns(delays_.get_ms));
    ++gets_;
    co_return storage_.query(table, camera_id, from, to);
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

json StatsQuery::to_json() const {
    json j{{"metric", metric}, {"from", from}, {"to", to}};
    if (camera_id) j["camera_id"] = *camera_id;
    return j;
}

StatsQuery StatsQuery::from_json(const json& j) {
    StatsQuery q;
    q.metric = j.at("metric").get<std::string>();
    if (j.contains("camera_id")) q.camera_id = j["camera_id"].get<std::string>();
    if (j.contains("from")) q.from = j["from"].get<TimeNs>();
    if (j.contains("to")) q.to = j["to"].get<TimeNs>();
    return q;
}

bool stats_is_complex(const std::string& metric) { return metric != "person_count_now"; }

namespace {

std::vector<KVItem> items_in_range(const KvStorage& storage, KvTable table,
                                   const StatsQuery& q) {
    if (q.camera_id) return storage.query(table, *q.camera_id, q.from, q.to);
    return storage.scan(table, q.from, q.to);
}

double person_count_of(const json& attrs) {
    auto it = attrs.find("count_person");
    return it != attrs.end() && it->is_number() ? it->get<double>() : 0.0;
}

// Latest Counts item per camera with timestamp <= to.
std::map<std::string, double> latest_counts(const KvStorage& storage, const StatsQuery& q) {
    std::map<std::string, double> latest;
    std::map<std::string, TimeNs> latest_ts;
    for (const KVItem& item : items_in_range(storage, KvTable::Counts, q)) {
        auto it = latest_ts.find(item.key.camera_id);
        if (it == latest_ts.end() || item.key.timestamp >= it->second) {
            latest_ts[item.key.camera_id] = item.key.timestamp;
            latest[item.key.camera_id] = person_count_of(item.attributes);
        }
    }
    return latest;
}

json eval_person_count_now(const KvStorage& storage, const StatsQuery& q) {
    auto latest = latest_counts(storage, q);
    if (q.camera_id) {
        const auto it = latest.find(*q.camera_id);
        return json{{"camera_id", *q.camera_id},
                    {"person_count", it == latest.end() ? 0.0 : it->second}};
    }
    double total = 0;
    json per = json::object();
    for (const auto& [cam, n] : latest) {
        per[cam] = n;
        total += n;
    }
    return json{{"per_camera", per}, {"total", total}};
}

json eval_occupancy(const KvStorage& storage, const StatsQuery& q) {
    std::vector<KVItem> items = items_in_range(storage, KvTable::Counts, q);
    std::sort(items.begin(), items.end(), [](const KVItem& a, const KVItem& b) {
        return a.key.timestamp != b.key.timestamp ? a.key.timestamp < b.key.timestamp
                                                  : a.key.camera_id < b.key.camera_id;
    });
    if (items.empty())
        return json{{"indicator", "normal"}, {"current", 0.0}, {"z", 0.0}, {"history", 0}};

    const double current = person_count_of(items.back().attributes);
    items.pop_back();
    if (items.empty())
        return json{{"indicator", "normal"}, {"current", current}, {"z", 0.0}, {"history", 0}};

    double mean = 0;
    for (const KVItem& it : items) mean += person_count_of(it.attributes);
    mean /= static_cast<double>(items.size());
    double var = 0;
    for (const KVItem& it : items) {
        const double d = person_count_of(it.attributes) - mean;
        var += d * d;
    }
    const double sigma = std::sqrt(var / static_cast<double>(items.size()));

    double z = 0;
    const char* indicator = "normal";
    if (sigma > 0) {
        z = (current - mean) / sigma;
        indicator = z > 1.0 ? "high" : (z < -1.0 ? "low" : "normal");
    } else if (current != mean) {
        indicator = current > mean ? "high" : "low";
        z = current > mean ? std::numeric_limits<double>::infinity()
                           : -std::numeric_limits<double>::infinity();
    }
    return json{{"indicator", indicator},
                {"current", current},
                {"mean", mean},
                {"sigma", sigma},
                {"z", z},
                {"history", items.size()}};
}

json eval_heatmap(const KvStorage& storage, const StatsQuery& q) {
    std::vector<std::vector<std::int64_t>> grid(
        kHeatmapCells, std::vector<std::int64_t>(kHeatmapCells, 0));
    std::int64_t items_counted = 0;
    for (const KVItem& item : items_in_range(storage, KvTable::Counts, q)) {
        bool touched = false;
        for (const auto& [name, value] : item.attributes.items()) {
            if (name.rfind("cell_", 0) != 0 || !value.is_number()) continue;
            const auto r_end = name.find('_', 5);
            if (r_end == std::string::npos) continue;
            const int r = std::atoi(name.substr(5, r_end - 5).c_str());
            const int c = std::atoi(name.substr(r_end + 1).c_str());
            if (r < 0 || r >= kHeatmapCells || c < 0 || c >= kHeatmapCells) continue;
            grid[r][c] += value.get<std::int64_t>();
            touched = true;
        }
        if (touched) ++items_counted;
    }
    return json{{"grid", grid}, {"items_counted", items_counted}};
}

json eval_totals(const KvStorage& storage, const StatsQuery& q, bool averages) {
    std::map<std::string, double> sums;
    std::int64_t n = 0;
    for (const KVItem& item : items_in_range(storage, KvTable::Counts, q)) {
        ++n;
        for (const auto& [name, value] : item.attributes.items()) {
            if (name.rfind("count_", 0) != 0 || !value.is_number()) continue;
            sums[name.substr(6)] += value.get<double>();
        }
    }
    json per = json::object();
    for (const auto& [cls, total] : sums)
        per[cls] = averages ? total / static_cast<double>(n) : total;
    return json{{averages ? "averages" : "totals", per}, {"batches", n}};
}

json eval_anomaly_list(const KvStorage& storage, const StatsQuery& q) {
    json list = json::array();
    for (const KVItem& item : items_in_range(storage, KvTable::Analytics, q)) {
        if (!item.attributes.contains("event_kind")) continue;
        json row = item.attributes;
        row["camera_id"] = item.key.camera_id;
        row["timestamp"] = item.key.timestamp;
        list.push_back(std::move(row));
    }
    return json{{"events", list}};
}

}  // namespace

StatsResult stats_evaluate(const KvStorage& storage, const StatsQuery& query) {
    if (query.from > query.to) throw ValidationError("stats range is reversed");
    json payload;
    if (query.metric == "person_count_now") {
        payload = eval_person_count_now(storage, query);
    } else if (query.metric == "occupancy_indicator") {
        payload = eval_occupancy(storage, query);
    } else if (query.metric == "heatmap") {
        payload = eval_heatmap(storage, query);
    } else if (query.metric == "totals") {
        payload = eval_totals(storage, query, false);
    } else if (query.metric == "averages") {
        payload = eval_totals(storage, query, true);
    } else if (query.metric == "anomaly_list") {
        payload = eval_anomaly_list(storage, query);
    } else {
        throw ParseError("unknown stats metric '" + query.metric + "'");
    }
    return StatsResult{query.metric, std::move(payload)};
}

SimTask<StatsResult> StatsService::stats(StatsQuery query) {
    const double delay =
        stats_is_complex(query.metric) ? delays_.stats_complex_ms : delays_.stats_simple_ms;
    co_await k_->sleep_for(ms_to_ns(delay));
    co_return stats_evaluate(store_->storage(), query);
}

}  // namespace svs
