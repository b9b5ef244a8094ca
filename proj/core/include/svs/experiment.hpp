#pragma once

// End-to-end run orchestration: one kernel hosting the cloud services (or a
// remote cloud via blocking clients), the global analysis node, and one
// pipeline per camera; measurement wiring (recorder, notification receipts,
// injection ground truth) and post-run reduction into a RunReport.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "svs/cloud.hpp"
#include "svs/globalnode.hpp"
#include "svs/pipeline.hpp"
#include "svs/scenario.hpp"
#include "svs/sim.hpp"
#include "svs/telemetry.hpp"

namespace svs {

// One run-configuration document: pipeline keys at the top level, with
// optional "global" and "cloud" sub-objects for the other tiers.
struct RunBundle {
    PipelineConfig pipeline;
    GlobalConfig global;
    CloudDelays cloud;
};

RunBundle parse_run_bundle(const nlohmann::json& j);
RunBundle load_run_bundle(const std::string& path);
nlohmann::json run_bundle_to_json(const RunBundle& b);

// The run configuration reproducing the measured Jetson-class deployment:
// stage costs sized so one camera sees ~1.45 s detector / ~2.86 s whole-system
// latency at 30 FPS, and eight cameras saturate the shared 4-token accelerator
// pool. All CLI defaults and the stock scenario files use this bundle.
RunBundle calibrated_run_bundle();

struct ExperimentOptions {
    Scenario scenario;
    // Uses the first N scenario cameras; 0 = all of them.
    int camera_count = 0;
    RunBundle bundle;
    // Seed for runtime noise streams (detection, jitter, ...); frame content
    // is governed by scenario.seed. 0 = follow scenario.seed.
    std::uint64_t run_seed = 0;
    ClockMode clock = ClockMode::Virtual;
    std::int64_t warmup_batches = 200;

    // Remote cloud tier: "host:port" of a running cloud server. Requires
    // the real clock (the remote process does not share virtual time).
    std::string cloud_addr;

    // Emulated phone-app polling: every interval the run issues one stats
    // query and one range query against the cloud tier (alternating simple
    // and complex metrics). 0 = off.
    double app_poll_interval_s = 0;

    // Copy the final KV content into the result (tests; costs memory).
    bool keep_kv_snapshot = false;

    std::function<void(const AnomalyEvent&)> on_event;
};

struct ExperimentResult {
    RunReport report;
    Recorder recorder;
    std::vector<DeliveryRecord> deliveries;
    std::vector<PcpSample> pcp;
    nlohmann::json counters;  // global node, broker, kv, subscriber tallies
    KvStorage kv_snapshot;    // populated when keep_kv_snapshot set
};

// Runs the whole system to quiescence. Throws ValidationError on option
// conflicts (camera count out of range, remote cloud on virtual clock) and
// RuntimeError when the kernel deadlocks or the remote cloud is unreachable.
ExperimentResult run_experiment(const ExperimentOptions& opt);

// Writes records.jsonl, report.json, report.txt, report.csv, counters.json
// into out_dir (created if absent).
void write_run_outputs(const ExperimentResult& r, const std::string& out_dir);

}  // namespace svs
