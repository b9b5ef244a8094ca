#include "svs/telemetry.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "svs/errors.hpp"

namespace svs {

using nlohmann::json;

namespace {

constexpr double kFramesPerBatch = 30.0;

}  // namespace

const char* to_string(MetricKind k) {
    switch (k) {
        case MetricKind::DetectorStage: return "DetectorStage";
        case MetricKind::ActionStage: return "ActionStage";
        case MetricKind::WholeSystem: return "WholeSystem";
        case MetricKind::CloudGet: return "CloudGet";
        case MetricKind::CloudPut: return "CloudPut";
        case MetricKind::CloudPublish: return "CloudPublish";
        case MetricKind::CloudStats: return "CloudStats";
        case MetricKind::PCPObject: return "PCPObject";
        case MetricKind::PCPBehavioral: return "PCPBehavioral";
    }
    return "DetectorStage";
}

MetricKind metric_kind_from_string(const std::string& s) {
    static const std::map<std::string, MetricKind> kMap = {
        {"DetectorStage", MetricKind::DetectorStage},
        {"ActionStage", MetricKind::ActionStage},
        {"WholeSystem", MetricKind::WholeSystem},
        {"CloudGet", MetricKind::CloudGet},
        {"CloudPut", MetricKind::CloudPut},
        {"CloudPublish", MetricKind::CloudPublish},
        {"CloudStats", MetricKind::CloudStats},
        {"PCPObject", MetricKind::PCPObject},
        {"PCPBehavioral", MetricKind::PCPBehavioral},
    };
    auto it = kMap.find(s);
    if (it == kMap.end()) throw ParseError("unknown metric kind '" + s + "'");
    return it->second;
}

void Recorder::record(MetricKind kind, const std::string& camera_id, std::int64_t ref_index,
                      TimeNs t_start, TimeNs t_end, const std::string& ref_id) {
    ++emitted_;
    if (t_end < t_start) {
        ++rejected_;
        return;
    }
    if (records_.size() >= capacity_) {
        ++overflow_;
        return;
    }
    records_.push_back(LatencyRecord{kind, camera_id, ref_index, ref_id, t_start, t_end});
}

void write_records_jsonl(const std::vector<LatencyRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeError("cannot open for writing: " + path);
    for (const auto& r : records) {
        json j;
        j["kind"] = to_string(r.kind);
        j["camera_id"] = r.camera_id;
        j["ref_index"] = r.ref_index;
        if (!r.ref_id.empty()) j["ref_id"] = r.ref_id;
        j["t_start_ns"] = r.t_start;
        j["t_end_ns"] = r.t_end;
        out << j.dump() << '\n';
    }
}

std::vector<LatencyRecord> read_records_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open records file: " + path);
    std::vector<LatencyRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError("records line " + std::to_string(line_no) + ": " + e.what());
        }
        LatencyRecord r;
        r.kind = metric_kind_from_string(j.at("kind").get<std::string>());
        r.camera_id = j.at("camera_id").get<std::string>();
        r.ref_index = j.at("ref_index").get<std::int64_t>();
        if (j.contains("ref_id")) r.ref_id = j["ref_id"].get<std::string>();
        r.t_start = j.at("t_start_ns").get<TimeNs>();
        r.t_end = j.at("t_end_ns").get<TimeNs>();
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Notification round-trip matching
// ---------------------------------------------------------------------------

json delivery_to_json(const DeliveryRecord& d) {
    return json{{"receipt_ns", d.receipt_ts},
                {"camera_id", d.camera_id},
                {"kind", to_string(d.kind)},
                {"trigger_ns", d.trigger_ts},
                {"seq", d.seq}};
}

DeliveryRecord delivery_from_json(const json& j) {
    DeliveryRecord d;
    d.receipt_ts = j.at("receipt_ns").get<TimeNs>();
    d.camera_id = j.at("camera_id").get<std::string>();
    d.kind = anomaly_kind_from_string(j.at("kind").get<std::string>());
    d.trigger_ts = j.at("trigger_ns").get<TimeNs>();
    d.seq = j.at("seq").get<std::uint64_t>();
    return d;
}

std::vector<DeliveryRecord> read_delivery_log(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open delivery log: " + path);
    std::vector<DeliveryRecord> out;
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(delivery_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ParseError("delivery log line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<PcpSample> measure_pcp(const std::vector<InjectionSpec>& schedule,
                                   const std::vector<DeliveryRecord>& deliveries,
                                   TimeNs ambiguity_window) {
    // Injections per (camera, kind) stream, in ground-truth order.
    std::map<std::pair<std::string, int>, std::vector<std::size_t>> streams;
    for (std::size_t i = 0; i < schedule.size(); ++i)
        streams[{schedule[i].camera_id, static_cast<int>(schedule[i].kind)}].push_back(i);
    for (auto& [key, idxs] : streams) {
        std::sort(idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t b) {
            return schedule[a].ground_truth_ts < schedule[b].ground_truth_ts;
        });
    }

    std::vector<DeliveryRecord> log = deliveries;
    std::stable_sort(log.begin(), log.end(), [](const DeliveryRecord& a, const DeliveryRecord& b) {
        return a.receipt_ts < b.receipt_ts;
    });

    std::vector<PcpSample> out(schedule.size());
    std::map<int, int> kind_counters;
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const InjectionSpec& inj = schedule[i];
        PcpSample& s = out[i];
        s.injection_id = inj.injection_id;
        s.camera_id = inj.camera_id;
        s.kind = inj.kind;
        s.sample_index = kind_counters[static_cast<int>(inj.kind)]++;
        s.ground_truth_ts = inj.ground_truth_ts;
    }

    for (const auto& [key, idxs] : streams) {
        for (std::size_t pos = 0; pos < idxs.size(); ++pos) {
            PcpSample& s = out[idxs[pos]];
            const TimeNs lo = s.ground_truth_ts;
            const TimeNs hi = pos + 1 < idxs.size()
                                  ? schedule[idxs[pos + 1]].ground_truth_ts
                                  : std::numeric_limits<TimeNs>::max();
            if ((pos + 1 < idxs.size() && hi - lo < ambiguity_window) ||
                (pos > 0 && lo - schedule[idxs[pos - 1]].ground_truth_ts < ambiguity_window)) {
                s.ambiguous = true;
            }
            for (const DeliveryRecord& d : log) {
                if (d.camera_id != s.camera_id || d.kind != s.kind) continue;
                if (d.trigger_ts < lo || d.trigger_ts >= hi) continue;
                s.matched = true;
                s.receipt_ts = d.receipt_ts;
                break;
            }
        }
    }
    return out;
}

void record_pcp(Recorder& rec, const std::vector<PcpSample>& samples) {
    for (const auto& s : samples) {
        if (!s.matched || s.ambiguous) continue;
        rec.record(s.kind == AnomalyKind::Object ? MetricKind::PCPObject
                                                 : MetricKind::PCPBehavioral,
                   s.camera_id, s.sample_index, s.ground_truth_ts, s.receipt_ts,
                   s.injection_id);
    }
}

void attach_pcp(RunReport& report, const std::vector<PcpSample>& samples) {
    report.pcp = samples;
    report.pcp_missed = 0;
    report.pcp_ambiguous = 0;
    for (const auto& s : samples) {
        if (s.ambiguous)
            ++report.pcp_ambiguous;
        else if (!s.matched)
            ++report.pcp_missed;
    }
}

// ---------------------------------------------------------------------------
// Reduction
// ---------------------------------------------------------------------------

namespace {

KindStats reduce(const std::vector<double>& xs, bool population) {
    KindStats st;
    st.count = static_cast<std::int64_t>(xs.size());
    st.samples_s = xs;
    if (xs.empty()) return st;
    st.insufficient = false;
    double sum = 0;
    st.min_s = xs[0];
    st.max_s = xs[0];
    for (double x : xs) {
        sum += x;
        st.min_s = std::min(st.min_s, x);
        st.max_s = std::max(st.max_s, x);
    }
    st.mean_s = sum / static_cast<double>(xs.size());
    double sq = 0;
    for (double x : xs) sq += (x - st.mean_s) * (x - st.mean_s);
    const double n = static_cast<double>(xs.size());
    if (population)
        st.stddev_s = std::sqrt(sq / n);
    else
        st.stddev_s = n > 1 ? std::sqrt(sq / (n - 1)) : 0.0;
    return st;
}

bool warmup_dropped(const LatencyRecord& r, std::int64_t warmup_batches) {
    switch (r.kind) {
        case MetricKind::DetectorStage:
        case MetricKind::WholeSystem:
            return r.ref_index < warmup_batches;
        case MetricKind::ActionStage:
            return window_trigger_batch(r.ref_index) < warmup_batches;
        default:
            return false;
    }
}

}  // namespace

RunReport compute_metrics(const Recorder& rec, int camera_count, std::int64_t warmup_batches,
                          std::int64_t total_batches, bool population_stddev) {
    RunReport report;
    report.camera_count = camera_count;
    report.warmup_batches = warmup_batches;
    report.total_batches = total_batches;
    report.population_stddev = population_stddev;
    report.emitted = rec.emitted();
    report.rejected = rec.rejected();
    report.overflow = rec.overflow();

    std::map<std::string, std::vector<double>> by_kind;
    struct WholeDone {
        std::int64_t batch;
        TimeNs done;
    };
    std::map<std::string, std::vector<WholeDone>> whole_by_camera;

    for (const auto& r : rec.records()) {
        by_kind[to_string(r.kind)];  // kind participates even if all dropped
        if (warmup_dropped(r, warmup_batches)) {
            ++report.warmup_dropped;
            continue;
        }
        ++report.aggregated;
        by_kind[to_string(r.kind)].push_back(r.latency_s());
        if (r.kind == MetricKind::WholeSystem)
            whole_by_camera[r.camera_id].push_back({r.ref_index, r.t_end});
    }

    for (auto& [name, xs] : by_kind) report.kinds[name] = reduce(xs, population_stddev);

    for (auto& [cam, v] : whole_by_camera) {
        std::sort(v.begin(), v.end(),
                  [](const WholeDone& a, const WholeDone& b) { return a.batch < b.batch; });
        if (v.size() < 2) {
            report.fps_insufficient = true;
            report.fps_per_camera[cam] = 0;
            continue;
        }
        const double elapsed_s = ns_to_s(v.back().done - v.front().done);
        if (elapsed_s <= 0) {
            report.fps_insufficient = true;
            report.fps_per_camera[cam] = 0;
            continue;
        }
        const double fps =
            kFramesPerBatch * static_cast<double>(v.size() - 1) / elapsed_s;
        report.fps_per_camera[cam] = fps;
        report.fps_aggregate += fps;
    }
    if (whole_by_camera.empty()) report.fps_insufficient = true;

    return report;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

ReportFormat report_format_from_string(const std::string& s) {
    if (s == "table") return ReportFormat::Table;
    if (s == "csv") return ReportFormat::Csv;
    if (s == "json") return ReportFormat::Json;
    throw ParseError("unknown report format '" + s + "' (expected table, csv or json)");
}

namespace {

std::string render_csv(const RunReport& r) {
    std::string out = "camera_count,anomaly_kind,sample_index,latency_seconds\n";
    char buf[160];
    for (const auto& s : r.pcp) {
        if (!s.matched || s.ambiguous) continue;
        std::snprintf(buf, sizeof(buf), "%d,%s,%d,%.6f\n", r.camera_count, to_string(s.kind),
                      s.sample_index, s.latency_s());
        out += buf;
    }
    return out;
}

json stats_to_json(const KindStats& st) {
    json j;
    j["count"] = st.count;
    j["mean_s"] = st.mean_s;
    j["min_s"] = st.min_s;
    j["max_s"] = st.max_s;
    j["stddev_s"] = st.stddev_s;
    j["insufficient"] = st.insufficient;
    j["samples_s"] = st.samples_s;
    return j;
}

std::string render_json(const RunReport& r) {
    json j;
    j["report_version"] = r.report_version;
    j["camera_count"] = r.camera_count;
    j["warmup_batches"] = r.warmup_batches;
    j["total_batches"] = r.total_batches;
    j["population_stddev"] = r.population_stddev;
    j["kinds"] = json::object();
    for (const auto& [name, st] : r.kinds) j["kinds"][name] = stats_to_json(st);
    j["fps"] = {{"per_camera", r.fps_per_camera},
                {"aggregate", r.fps_aggregate},
                {"insufficient", r.fps_insufficient}};
    j["pcp"] = json::array();
    for (const auto& s : r.pcp) {
        json js;
        js["injection_id"] = s.injection_id;
        js["camera_id"] = s.camera_id;
        js["kind"] = to_string(s.kind);
        js["sample_index"] = s.sample_index;
        js["ground_truth_s"] = ns_to_s(s.ground_truth_ts);
        js["ground_truth_ns"] = s.ground_truth_ts;
        js["matched"] = s.matched;
        js["ambiguous"] = s.ambiguous;
        if (s.matched) {
            js["latency_s"] = s.latency_s();
            js["receipt_ns"] = s.receipt_ts;
        }
        j["pcp"].push_back(std::move(js));
    }
    j["pcp_missed"] = r.pcp_missed;
    j["pcp_ambiguous"] = r.pcp_ambiguous;
    j["counters"] = {{"emitted", r.emitted},
                     {"aggregated", r.aggregated},
                     {"warmup_dropped", r.warmup_dropped},
                     {"rejected", r.rejected},
                     {"overflow", r.overflow}};
    return j.dump(2) + "\n";
}

KindStats stats_from_json(const json& j) {
    KindStats st;
    st.count = j.at("count").get<std::int64_t>();
    st.mean_s = j.at("mean_s").get<double>();
    st.min_s = j.at("min_s").get<double>();
    st.max_s = j.at("max_s").get<double>();
    st.stddev_s = j.at("stddev_s").get<double>();
    st.insufficient = j.at("insufficient").get<bool>();
    st.samples_s = j.at("samples_s").get<std::vector<double>>();
    return st;
}

}  // namespace

RunReport parse_report_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError("malformed report JSON at byte " + std::to_string(e.byte) + ": " +
                         e.what());
    }
    try {
        RunReport r;
        r.report_version = j.at("report_version").get<int>();
        if (r.report_version != 1) {
            throw ValidationError("unsupported report_version " +
                                  std::to_string(r.report_version));
        }
        r.camera_count = j.at("camera_count").get<int>();
        r.warmup_batches = j.at("warmup_batches").get<std::int64_t>();
        r.total_batches = j.at("total_batches").get<std::int64_t>();
        r.population_stddev = j.at("population_stddev").get<bool>();
        for (const auto& [name, st] : j.at("kinds").items()) {
            r.kinds[name] = stats_from_json(st);
        }
        const auto& fps = j.at("fps");
        r.fps_per_camera = fps.at("per_camera").get<std::map<std::string, double>>();
        r.fps_aggregate = fps.at("aggregate").get<double>();
        r.fps_insufficient = fps.at("insufficient").get<bool>();
        for (const auto& js : j.at("pcp")) {
            PcpSample s;
            s.injection_id = js.at("injection_id").get<std::string>();
            s.camera_id = js.at("camera_id").get<std::string>();
            s.kind = anomaly_kind_from_string(js.at("kind").get<std::string>());
            s.sample_index = js.at("sample_index").get<int>();
            s.ground_truth_ts = js.at("ground_truth_ns").get<TimeNs>();
            s.matched = js.at("matched").get<bool>();
            s.ambiguous = js.at("ambiguous").get<bool>();
            if (s.matched) s.receipt_ts = js.at("receipt_ns").get<TimeNs>();
            r.pcp.push_back(std::move(s));
        }
        r.pcp_missed = j.at("pcp_missed").get<std::int64_t>();
        r.pcp_ambiguous = j.at("pcp_ambiguous").get<std::int64_t>();
        const auto& c = j.at("counters");
        r.emitted = c.at("emitted").get<std::uint64_t>();
        r.aggregated = c.at("aggregated").get<std::uint64_t>();
        r.warmup_dropped = c.at("warmup_dropped").get<std::uint64_t>();
        r.rejected = c.at("rejected").get<std::uint64_t>();
        r.overflow = c.at("overflow").get<std::uint64_t>();
        return r;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("report JSON missing fields: ") + e.what());
    }
}

namespace {

std::string render_table(const RunReport& r) {
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "run report v%d  cameras=%d  warmup=%lld/%lld batches  stddev=%s\n",
                  r.report_version, r.camera_count, static_cast<long long>(r.warmup_batches),
                  static_cast<long long>(r.total_batches),
                  r.population_stddev ? "population" : "sample");
    out << buf;

    out << "\nlatency (seconds)\n";
    std::snprintf(buf, sizeof(buf), "%-16s %8s %10s %10s %10s %10s\n", "kind", "count", "mean",
                  "min", "max", "stddev");
    out << buf;
    for (const auto& [name, st] : r.kinds) {
        if (st.count == 0) {
            std::snprintf(buf, sizeof(buf), "%-16s %8s %10s %10s %10s %10s\n", name.c_str(),
                          "0", "-", "-", "-", "-");
        } else {
            std::snprintf(buf, sizeof(buf), "%-16s %8lld %10.3f %10.3f %10.3f %10.3f\n",
                          name.c_str(), static_cast<long long>(st.count), st.mean_s, st.min_s,
                          st.max_s, st.stddev_s);
        }
        out << buf;
    }

    out << "\nthroughput (frames/second)\n";
    for (const auto& [cam, fps] : r.fps_per_camera) {
        std::snprintf(buf, sizeof(buf), "%-16s %10.2f\n", cam.c_str(), fps);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%-16s %10.2f%s\n", "aggregate", r.fps_aggregate,
                  r.fps_insufficient ? "  (insufficient data)" : "");
    out << buf;

    if (!r.pcp.empty()) {
        out << "\nnotification round-trip (seconds)\n";
        std::snprintf(buf, sizeof(buf), "%-18s %8s %7s %10s %10s %10s %10s\n", "kind", "samples",
                      "missed", "mean", "min", "max", "stddev");
        out << buf;
        for (AnomalyKind kind : {AnomalyKind::Object, AnomalyKind::Behavioral}) {
            std::vector<double> xs;
            int missed = 0;
            for (const auto& s : r.pcp) {
                if (s.kind != kind || s.ambiguous) continue;
                if (!s.matched) {
                    ++missed;
                    continue;
                }
                xs.push_back(s.latency_s());
            }
            if (xs.empty() && missed == 0) continue;
            const KindStats st = reduce(xs, r.population_stddev);
            std::snprintf(buf, sizeof(buf), "%-18s %8lld %7d %10.3f %10.3f %10.3f %10.3f\n",
                          to_string(kind), static_cast<long long>(st.count), missed, st.mean_s,
                          st.min_s, st.max_s, st.stddev_s);
            out << buf;
        }
    }

    std::snprintf(buf, sizeof(buf),
                  "\ncounters: emitted=%llu aggregated=%llu warmup_dropped=%llu rejected=%llu "
                  "overflow=%llu\n",
                  static_cast<unsigned long long>(r.emitted),
                  static_cast<unsigned long long>(r.aggregated),
                  static_cast<unsigned long long>(r.warmup_dropped),
                  static_cast<unsigned long long>(r.rejected),
                  static_cast<unsigned long long>(r.overflow));
    out << buf;
    return out.str();
}

}  // namespace

std::string render_report(const RunReport& report, ReportFormat format) {
    switch (format) {
        case ReportFormat::Table: return render_table(report);
        case ReportFormat::Csv: return render_csv(report);
        case ReportFormat::Json: return render_json(report);
    }
    throw ParseError("unknown report format");
}

}  // namespace svs
