#pragma once

// Timestamp capture and metric reduction: every boundary in the system
// appends LatencyRecords to a Recorder; after the run goes quiescent the
// records reduce to a RunReport (stage latencies, FPS, notification
// round-trip latency) rendered as text table, CSV, or JSON.

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "svs/scenario.hpp"
#include "svs/time.hpp"

namespace svs {

enum class MetricKind {
    DetectorStage,
    ActionStage,
    WholeSystem,
    CloudGet,
    CloudPut,
    CloudPublish,
    CloudStats,
    PCPObject,
    PCPBehavioral,
};

const char* to_string(MetricKind k);
MetricKind metric_kind_from_string(const std::string& s);

struct LatencyRecord {
    MetricKind kind = MetricKind::DetectorStage;
    std::string camera_id;
    std::int64_t ref_index = 0;  // batch / window / sample index
    std::string ref_id;          // injection id for PCP kinds, else empty
    TimeNs t_start = 0;
    TimeNs t_end = 0;

    double latency_s() const { return ns_to_s(t_end - t_start); }
};

// Append-only bounded buffer. record() never blocks: when full it counts
// overflow instead of growing, and reversed timestamps are counted and
// dropped rather than thrown — a measurement bug must not kill the run.
class Recorder {
  public:
    explicit Recorder(std::size_t capacity = 2'000'000) : capacity_(capacity) {}

    void record(MetricKind kind, const std::string& camera_id, std::int64_t ref_index,
                TimeNs t_start, TimeNs t_end, const std::string& ref_id = "");

    const std::vector<LatencyRecord>& records() const { return records_; }
    std::uint64_t emitted() const { return emitted_; }
    std::uint64_t rejected() const { return rejected_; }
    std::uint64_t overflow() const { return overflow_; }
    std::size_t capacity() const { return capacity_; }

  private:
    std::size_t capacity_;
    std::vector<LatencyRecord> records_;
    std::uint64_t emitted_ = 0;
    std::uint64_t rejected_ = 0;
    std::uint64_t overflow_ = 0;
};

// One record per line as JSON; loadable for offline re-aggregation.
void write_records_jsonl(const std::vector<LatencyRecord>& records, const std::string& path);
std::vector<LatencyRecord> read_records_jsonl(const std::string& path);

// ---------------------------------------------------------------------------
// Notification round-trip (physical -> cyber -> physical) measurement
// ---------------------------------------------------------------------------

// What the subscriber client logs per delivered notification. trigger_ts is
// the capture-schedule timestamp of the triggering frame/window, carried
// through the event chain so matching is by provenance, not proximity.
struct DeliveryRecord {
    TimeNs receipt_ts = 0;
    std::string camera_id;
    AnomalyKind kind = AnomalyKind::Object;
    TimeNs trigger_ts = 0;
    std::uint64_t seq = 0;
};

struct PcpSample {
    std::string injection_id;
    std::string camera_id;
    AnomalyKind kind = AnomalyKind::Object;
    int sample_index = 0;  // per kind, in schedule order
    TimeNs ground_truth_ts = 0;
    TimeNs receipt_ts = 0;
    bool matched = false;
    bool ambiguous = false;

    double latency_s() const { return ns_to_s(receipt_ts - ground_truth_ts); }
};

// Delivery-log line format (JSONL): what the subscriber CLI writes and what
// offline round-trip matching consumes.
nlohmann::json delivery_to_json(const DeliveryRecord& d);
DeliveryRecord delivery_from_json(const nlohmann::json& j);
std::vector<DeliveryRecord> read_delivery_log(const std::string& path);

// Matches each injection to the first delivered notification of the same
// camera and kind whose trigger_ts falls in [gt_ts, next same-stream gt_ts).
// Injections of one stream closer together than ambiguity_window are flagged
// ambiguous and excluded from statistics. Unmatched injections stay in the
// output flagged as missed.
std::vector<PcpSample> measure_pcp(const std::vector<InjectionSpec>& schedule,
                                   const std::vector<DeliveryRecord>& deliveries,
                                   TimeNs ambiguity_window = 2 * kNsPerSec);

// Appends matched samples to the recorder as PCPObject/PCPBehavioral.
void record_pcp(Recorder& rec, const std::vector<PcpSample>& samples);

struct RunReport;

// Stores the full sample list (matched, missed, ambiguous) on the report.
void attach_pcp(RunReport& report, const std::vector<PcpSample>& samples);

// ---------------------------------------------------------------------------
// Reduction
// ---------------------------------------------------------------------------

struct KindStats {
    std::int64_t count = 0;
    double mean_s = 0;
    double min_s = 0;
    double max_s = 0;
    double stddev_s = 0;  // population by default
    bool insufficient = true;
    std::vector<double> samples_s;  // post-warm-up, record order (rug plots)
};

struct RunReport {
    int report_version = 1;
    int camera_count = 0;
    std::int64_t warmup_batches = 0;
    std::int64_t total_batches = 0;
    bool population_stddev = true;

    std::map<std::string, KindStats> kinds;  // keyed by MetricKind name
    std::map<std::string, double> fps_per_camera;
    double fps_aggregate = 0;
    bool fps_insufficient = false;

    std::vector<PcpSample> pcp;
    std::int64_t pcp_missed = 0;
    std::int64_t pcp_ambiguous = 0;

    // Bookkeeping: emitted == aggregated + warmup_dropped + rejected.
    std::uint64_t emitted = 0;
    std::uint64_t aggregated = 0;
    std::uint64_t warmup_dropped = 0;
    std::uint64_t rejected = 0;
    std::uint64_t overflow = 0;
};

// Batch index whose completion first makes window w scoreable (30-frame
// batches, 30-frame windows on a 20-frame stride).
constexpr std::int64_t window_trigger_batch(std::int64_t w) { return (20 * w + 29) / 30; }

// Drops the first warmup_batches per camera for the batch-referenced kinds
// (DetectorStage, WholeSystem by batch index; ActionStage by the window's
// trigger batch), then reduces every kind to count/mean/min/max/stddev.
// FPS per camera is the steady-state completion rate of post-warm-up
// batches: 30 x (n-1) / (t_end last - t_end first) over WholeSystem records.
RunReport compute_metrics(const Recorder& rec, int camera_count,
                          std::int64_t warmup_batches = 200,
                          std::int64_t total_batches = 1200,
                          bool population_stddev = true);

enum class ReportFormat { Table, Csv, Json };

ReportFormat report_format_from_string(const std::string& s);

// table: fixed-width summary of stats, FPS and notification latencies.
// csv:   one row per PCP sample: camera_count,anomaly_kind,sample_index,
//        latency_seconds.
// json:  the full RunReport (report_version 1). All byte-stable.
std::string render_report(const RunReport& report, ReportFormat format);

// Inverse of the JSON rendering: a saved report re-renders byte-identically.
// Throws ParseError on malformed text, ValidationError on a version or
// field mismatch.
RunReport parse_report_json(const std::string& text);

}  // namespace svs
