#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "svs/cloud.hpp"
#include "svs/errors.hpp"
#include "svs/rng.hpp"
#include "svs/sim.hpp"
#include "svs/time.hpp"

using nlohmann::json;
using svs::Broker;
using svs::KvStorage;
using svs::KVItem;
using svs::KVKey;
using svs::KvTable;
using svs::KVStore;
using svs::NotificationMessage;
using svs::SimKernel;
using svs::SimTask;
using svs::StatsQuery;
using svs::TimeNs;

namespace {

KVItem counts_item(const std::string& cam, TimeNs ts, json attrs) {
    KVItem item;
    item.table = KvTable::Counts;
    item.key = {cam, ts};
    item.attributes = std::move(attrs);
    return item;
}

SimTask<void> do_put(KVStore* kv, KVItem item) { co_await kv->put_item(std::move(item)); }

SimTask<void> do_get(KVStore* kv, KVKey key, std::optional<KVItem>* out) {
    *out = co_await kv->get_item(KvTable::Counts, key);
}

SimTask<void> do_stats(svs::StatsService* svc, StatsQuery q, svs::StatsResult* out,
                       SimKernel* k, TimeNs* done_at) {
    *out = co_await svc->stats(std::move(q));
    *done_at = k->now();
}

SimTask<void> publish_soak(SimKernel* k, Broker* b, int per_topic) {
    for (int i = 1; i <= per_topic; ++i) {
        for (const char* topic : {svs::kTopicObject, svs::kTopicBehavioral}) {
            NotificationMessage m;
            m.topic = topic;
            m.camera_id = "cam-0";
            m.kind = topic == std::string(svs::kTopicObject) ? svs::AnomalyKind::Object
                                                             : svs::AnomalyKind::Behavioral;
            m.trigger_ts = k->now();
            m.detail["event_id"] = std::string(topic) + "#" + std::to_string(i);
            co_await b->publish(std::move(m));
        }
    }
}

SimTask<void> try_publish_down(Broker* b, bool* refused) {
    NotificationMessage m;
    m.topic = svs::kTopicObject;
    try {
        co_await b->publish(std::move(m));
    } catch (const svs::BrokerUnavailable&) {
        *refused = true;
    }
}

struct SeenMessages {
    std::vector<std::uint64_t> seqs;
    std::vector<std::string> event_ids;
};

}  // namespace

TEST_CASE("kv storage is last-writer-wins and validates keys and attributes") {
    KvStorage store;
    store.put(counts_item("cam-a", 100, {{"count_person", 4}}));
    store.put(counts_item("cam-a", 100, {{"count_person", 9}}));  // overwrite
    auto got = store.get(KvTable::Counts, {"cam-a", 100});
    REQUIRE(got.has_value());
    CHECK(got->attributes.at("count_person") == 9);
    CHECK(store.size(KvTable::Counts) == 1);
    CHECK_FALSE(store.get(KvTable::Counts, {"cam-a", 101}).has_value());
    CHECK_FALSE(store.get(KvTable::Analytics, {"cam-a", 100}).has_value());

    CHECK_THROWS_AS(store.put(counts_item("", 5, {{"n", 1}})), svs::ValidationError);
    CHECK_THROWS_AS(store.put(counts_item("cam-a", -1, {{"n", 1}})), svs::ValidationError);
    CHECK_THROWS_AS(store.put(counts_item("cam-a", 5, {{"n", {{"deep", 1}}}})),
                    svs::ValidationError);
    CHECK_THROWS_AS(store.put(counts_item("cam-a", 5, json::array({1, 2}))),
                    svs::ValidationError);
}

TEST_CASE("range queries agree with a brute-force filter over ten thousand items") {
    KvStorage store;
    std::map<std::pair<std::string, TimeNs>, json> mirror;  // same last-writer-wins
    svs::Rng rng(4041);

    for (int i = 0; i < 10'000; ++i) {
        const std::string cam = "cam-" + std::to_string(rng.below(8));
        const TimeNs ts = static_cast<TimeNs>(rng.below(5'000));  // forces collisions
        json attrs = {{"count_person", i}};
        store.put(counts_item(cam, ts, attrs));
        mirror[{cam, ts}] = std::move(attrs);
    }
    CHECK(store.size(KvTable::Counts) == mirror.size());

    for (int trial = 0; trial < 200; ++trial) {
        const std::string cam = "cam-" + std::to_string(rng.below(8));
        TimeNs a = static_cast<TimeNs>(rng.below(5'500));
        TimeNs b = static_cast<TimeNs>(rng.below(5'500));
        if (a > b) std::swap(a, b);

        std::vector<std::pair<TimeNs, json>> expect;
        for (const auto& [key, attrs] : mirror)
            if (key.first == cam && key.second >= a && key.second <= b)
                expect.emplace_back(key.second, attrs);
        // mirror iterates (camera, ts) ascending, so expect is already sorted

        auto got = store.query(KvTable::Counts, cam, a, b);
        REQUIRE(got.size() == expect.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].key.camera_id == cam);
            CHECK(got[i].key.timestamp == expect[i].first);
            CHECK(got[i].attributes == expect[i].second);
        }
    }

    // The all-camera scan is ordered by (camera, timestamp) and matches the
    // mirror exactly over the full range.
    auto all = store.scan(KvTable::Counts, 0, 1'000'000);
    REQUIRE(all.size() == mirror.size());
    auto it = mirror.begin();
    for (const KVItem& item : all) {
        CHECK(item.key.camera_id == it->first.first);
        CHECK(item.key.timestamp == it->first.second);
        ++it;
    }

    CHECK_THROWS_AS((void)store.query(KvTable::Counts, "cam-0", 10, 5),
                    svs::ValidationError);
    CHECK_THROWS_AS((void)store.scan(KvTable::Counts, 10, 5), svs::ValidationError);
}

TEST_CASE("person_count_now reports the latest count per camera") {
    KvStorage store;
    store.put(counts_item("cam-a", 100, {{"count_person", 5}}));
    store.put(counts_item("cam-a", 200, {{"count_person", 7}}));
    store.put(counts_item("cam-b", 150, {{"count_person", 3}}));

    auto all = svs::stats_evaluate(store, {"person_count_now", std::nullopt, 0,
                                           std::numeric_limits<TimeNs>::max()});
    CHECK(all.payload.at("total") == 10.0);
    CHECK(all.payload.at("per_camera").at("cam-a") == 7.0);
    CHECK(all.payload.at("per_camera").at("cam-b") == 3.0);

    StatsQuery one;
    one.metric = "person_count_now";
    one.camera_id = "cam-a";
    CHECK(svs::stats_evaluate(store, one).payload.at("person_count") == 7.0);

    // Bounding `to` rolls the view back to what was latest then.
    StatsQuery then;
    then.metric = "person_count_now";
    then.to = 150;
    CHECK(svs::stats_evaluate(store, then).payload.at("total") == 8.0);

    CHECK_FALSE(svs::stats_is_complex("person_count_now"));
    CHECK(svs::stats_is_complex("occupancy_indicator"));
    CHECK(svs::stats_is_complex("heatmap"));
}

TEST_CASE("the occupancy indicator is a z-score of the newest count") {
    KvStorage store;
    // History 8, 12, 8, 12 (mean 10, population sigma 2); current 15.
    const int history[] = {8, 12, 8, 12};
    for (int i = 0; i < 4; ++i)
        store.put(counts_item("cam-a", 100 + i, {{"count_person", history[i]}}));
    store.put(counts_item("cam-a", 500, {{"count_person", 15}}));

    auto res = svs::stats_evaluate(store, {"occupancy_indicator", std::string("cam-a"), 0,
                                           std::numeric_limits<TimeNs>::max()});
    CHECK(res.payload.at("indicator") == "high");
    CHECK(res.payload.at("z") == doctest::Approx(2.5));
    CHECK(res.payload.at("mean") == doctest::Approx(10.0));
    CHECK(res.payload.at("sigma") == doctest::Approx(2.0));
    CHECK(res.payload.at("current") == 15.0);
    CHECK(res.payload.at("history") == 4);

    // Within one sigma of the mean reads normal; far below reads low.
    store.put(counts_item("cam-a", 500, {{"count_person", 11}}));
    CHECK(svs::stats_evaluate(store, {"occupancy_indicator", std::string("cam-a"), 0,
                                      std::numeric_limits<TimeNs>::max()})
              .payload.at("indicator") == "normal");
    store.put(counts_item("cam-a", 500, {{"count_person", 5}}));
    CHECK(svs::stats_evaluate(store, {"occupancy_indicator", std::string("cam-a"), 0,
                                      std::numeric_limits<TimeNs>::max()})
              .payload.at("indicator") == "low");
}

TEST_CASE("occupancy degrades gracefully on empty or constant history") {
    KvStorage store;
    StatsQuery q{"occupancy_indicator", std::nullopt, 0,
                 std::numeric_limits<TimeNs>::max()};
    auto empty = svs::stats_evaluate(store, q);
    CHECK(empty.payload.at("indicator") == "normal");
    CHECK(empty.payload.at("history") == 0);

    store.put(counts_item("cam-a", 1, {{"count_person", 6}}));
    auto single = svs::stats_evaluate(store, q);
    CHECK(single.payload.at("indicator") == "normal");
    CHECK(single.payload.at("current") == 6.0);

    // Constant history, different current: direction without a magnitude.
    store.put(counts_item("cam-a", 2, {{"count_person", 6}}));
    store.put(counts_item("cam-a", 3, {{"count_person", 9}}));
    auto spiked = svs::stats_evaluate(store, q);
    CHECK(spiked.payload.at("indicator") == "high");
    CHECK(spiked.payload.at("sigma") == 0.0);
}

TEST_CASE("the heatmap accumulates visit cells and skips malformed names") {
    KvStorage store;
    store.put(counts_item("cam-a", 1, {{"cell_0_0", 2}, {"cell_15_15", 1}}));
    store.put(counts_item("cam-b", 2, {{"cell_0_0", 3}, {"cell_2_7", 4}, {"cell_16_0", 9}}));
    store.put(counts_item("cam-c", 3, {{"count_person", 5}}));  // no cells

    auto res = svs::stats_evaluate(store, {"heatmap", std::nullopt, 0,
                                           std::numeric_limits<TimeNs>::max()});
    const auto& grid = res.payload.at("grid");
    CHECK(grid.size() == svs::kHeatmapCells);
    CHECK(grid.at(0).at(0) == 5);
    CHECK(grid.at(15).at(15) == 1);
    CHECK(grid.at(2).at(7) == 4);
    CHECK(res.payload.at("items_counted") == 2);
}

TEST_CASE("totals and averages aggregate per-class counts") {
    KvStorage store;
    store.put(counts_item("cam-a", 1, {{"count_person", 2}, {"count_vehicle", 1}}));
    store.put(counts_item("cam-a", 2, {{"count_person", 4}}));

    auto totals = svs::stats_evaluate(store, {"totals", std::nullopt, 0,
                                              std::numeric_limits<TimeNs>::max()});
    CHECK(totals.payload.at("totals").at("person") == 6.0);
    CHECK(totals.payload.at("totals").at("vehicle") == 1.0);
    CHECK(totals.payload.at("batches") == 2);

    auto avg = svs::stats_evaluate(store, {"averages", std::nullopt, 0,
                                           std::numeric_limits<TimeNs>::max()});
    CHECK(avg.payload.at("averages").at("person") == 3.0);
    CHECK(avg.payload.at("averages").at("vehicle") == 0.5);
}

TEST_CASE("anomaly_list returns only event rows, tagged with their key") {
    KvStorage store;
    KVItem ev;
    ev.table = KvTable::Analytics;
    ev.key = {"cam-a", 777};
    ev.attributes = {{"event_kind", "ObjectAnomaly"}, {"event_id", "cam-a/obj/1"}};
    store.put(ev);
    KVItem ws;
    ws.table = KvTable::Analytics;
    ws.key = {"cam-a", 778};
    ws.attributes = {{"window_index", 3}, {"scene_score", 0.4}};
    store.put(ws);

    auto res = svs::stats_evaluate(store, {"anomaly_list", std::nullopt, 0,
                                           std::numeric_limits<TimeNs>::max()});
    REQUIRE(res.payload.at("events").size() == 1);
    const auto& row = res.payload.at("events").at(0);
    CHECK(row.at("event_id") == "cam-a/obj/1");
    CHECK(row.at("camera_id") == "cam-a");
    CHECK(row.at("timestamp") == 777);
}

TEST_CASE("unknown metrics and reversed ranges are rejected") {
    KvStorage store;
    StatsQuery q{"head_count", std::nullopt, 0, 10};
    CHECK_THROWS_AS((void)svs::stats_evaluate(store, q), svs::ParseError);
    StatsQuery rev{"totals", std::nullopt, 10, 5};
    CHECK_THROWS_AS((void)svs::stats_evaluate(store, rev), svs::ValidationError);
}

TEST_CASE("service wrappers charge the configured delays") {
    svs::CloudDelays d;
    d.put_ms = 17.5;
    d.get_ms = 14.6;
    d.stats_simple_ms = 14.4;
    d.stats_complex_ms = 105.0;

    SimKernel k;
    KVStore kv(k, d);
    svs::StatsService svc(k, kv, d);

    k.spawn(do_put(&kv, counts_item("cam-a", 1, {{"count_person", 2}})));
    k.run();
    CHECK(k.now() == svs::ms_to_ns(17.5));
    CHECK(kv.puts() == 1);

    std::optional<KVItem> got;
    const TimeNs before_get = k.now();
    k.spawn(do_get(&kv, {"cam-a", 1}, &got));
    k.run();
    CHECK(k.now() - before_get == svs::ms_to_ns(14.6));
    REQUIRE(got.has_value());
    CHECK(kv.gets() == 1);

    svs::StatsResult res;
    TimeNs done = 0;
    const TimeNs before_simple = k.now();
    k.spawn(do_stats(&svc, {"person_count_now", std::nullopt, 0, 100}, &res, &k, &done));
    k.run();
    CHECK(done - before_simple == svs::ms_to_ns(14.4));
    CHECK(res.payload.at("total") == 2.0);

    const TimeNs before_complex = k.now();
    k.spawn(do_stats(&svc, {"totals", std::nullopt, 0, 100}, &res, &k, &done));
    k.run();
    CHECK(done - before_complex == svs::ms_to_ns(105.0));
}

TEST_CASE("delivery is per-topic ordered, gap-free, and dedupable under duplicates") {
    svs::CloudDelays d;
    d.publish_ms = 1.0;
    d.deliver_ms = 0.5;
    SimKernel k;
    Broker broker(k, d);
    broker.set_duplicate_every(7);

    std::map<int, std::map<std::string, SeenMessages>> seen;  // sub -> topic -> stream
    auto sink_for = [&seen](int slot) {
        return [&seen, slot](const NotificationMessage& m) {
            SeenMessages& s = seen[slot][m.topic];
            s.seqs.push_back(m.seq);
            s.event_ids.push_back(m.detail.at("event_id").get<std::string>());
        };
    };
    broker.subscribe({svs::kTopicObject, svs::kTopicBehavioral}, sink_for(1));
    broker.subscribe({svs::kTopicObject}, sink_for(2));

    const int kPerTopic = 1000;
    k.spawn(publish_soak(&k, &broker, kPerTopic));
    k.run();

    CHECK(broker.published() == 2 * kPerTopic);
    CHECK(broker.topic_seq(svs::kTopicObject) == kPerTopic);
    CHECK(broker.topic_seq(svs::kTopicBehavioral) == kPerTopic);
    CHECK(broker.duplicates_injected() > 0);
    CHECK(broker.delivered() == 3 * kPerTopic + broker.duplicates_injected());

    std::uint64_t dup_seen = 0;
    for (const auto& [slot, topics] : seen) {
        for (const auto& [topic, stream] : topics) {
            // At-least-once and in order: sequence numbers never move
            // backwards, and removing adjacent repeats leaves exactly 1..N.
            std::uint64_t prev = 0;
            std::set<std::uint64_t> unique;
            std::set<std::string> unique_events;
            for (std::uint64_t s : stream.seqs) {
                CHECK(s >= prev);
                CHECK(s - prev <= 1);  // a gap would skip a sequence number
                prev = s;
                unique.insert(s);
            }
            for (const std::string& e : stream.event_ids) unique_events.insert(e);
            CHECK(unique.size() == kPerTopic);
            CHECK(*unique.begin() == 1);
            CHECK(*unique.rbegin() == kPerTopic);
            // Event-id dedup reconstructs exactly-once consumption.
            CHECK(unique_events.size() == kPerTopic);
            dup_seen += stream.seqs.size() - unique.size();
        }
    }
    CHECK(seen[2].count(svs::kTopicBehavioral) == 0);  // never subscribed
    CHECK(dup_seen == broker.duplicates_injected());
}

TEST_CASE("an unavailable broker refuses publishes") {
    SimKernel k;
    Broker broker(k);
    broker.set_available(false);
    bool refused = false;
    k.spawn(try_publish_down(&broker, &refused));
    k.run();
    CHECK(refused);
    CHECK(broker.published() == 0);
}

TEST_CASE("unsubscribing stops future deliveries") {
    svs::CloudDelays d;
    d.publish_ms = 0.1;
    SimKernel k;
    Broker broker(k, d);
    std::vector<std::uint64_t> got;
    int sub = broker.subscribe({svs::kTopicObject},
                               [&got](const NotificationMessage& m) { got.push_back(m.seq); });

    k.spawn(publish_soak(&k, &broker, 3));
    k.run();
    CHECK(got.size() == 3);

    broker.unsubscribe(sub);
    k.spawn(publish_soak(&k, &broker, 2));
    k.run();
    CHECK(got.size() == 3);  // nothing new after unsubscribe
}

TEST_CASE("wire-facing value types survive JSON round trips") {
    NotificationMessage m;
    m.topic = svs::kTopicBehavioral;
    m.seq = 42;
    m.camera_id = "cam-3";
    m.kind = svs::AnomalyKind::Behavioral;
    m.trigger_ts = 123456789;
    m.publish_ts = 223456789;
    m.detail = {{"event_id", "cam-3/beh/7"}, {"score", 0.9}};
    NotificationMessage m2 = NotificationMessage::from_json(m.to_json());
    CHECK(m2.topic == m.topic);
    CHECK(m2.seq == m.seq);
    CHECK(m2.kind == m.kind);
    CHECK(m2.trigger_ts == m.trigger_ts);
    CHECK(m2.publish_ts == m.publish_ts);
    CHECK(m2.detail == m.detail);

    KVItem item = counts_item("cam-9", 777, {{"count_person", 3}});
    item.table = KvTable::Analytics;
    KVItem item2 = KVItem::from_json(item.to_json());
    CHECK(item2.table == KvTable::Analytics);
    CHECK(item2.key == item.key);
    CHECK(item2.attributes == item.attributes);
    CHECK_THROWS_AS((void)svs::kv_table_from_string("SecretsTable"), svs::ParseError);

    StatsQuery q{"heatmap", std::string("cam-1"), 5, 99};
    StatsQuery q2 = StatsQuery::from_json(q.to_json());
    CHECK(q2.metric == "heatmap");
    CHECK(q2.camera_id == q.camera_id);
    CHECK(q2.from == 5);
    CHECK(q2.to == 99);

    svs::CloudDelays partial = svs::CloudDelays::from_json({{"publish_ms", 5.0}});
    CHECK(partial.publish_ms == 5.0);
    CHECK(partial.get_ms == svs::CloudDelays{}.get_ms);  // untouched default
}
