// svs: operator entry points for the surveillance emulation.
//
//   run        execute a scenario end to end and write a run directory
//   cloud      host the notification broker / KV store / stats service
//   subscribe  attach as the end-user notification client
//   bench-pcp  measure physical->cyber->physical notification latency
//   report     re-render a run directory's report
//
// Exit codes: 0 success, 1 usage, 2 invalid config/scenario, 3 runtime
// failure, 4 acceptance violation in strict mode.

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "svs/errors.hpp"
#include "svs/experiment.hpp"
#include "svs/net.hpp"
#include "svs/scenario.hpp"
#include "svs/server.hpp"
#include "svs/telemetry.hpp"
#include "svs/time.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitStrict = 4;

constexpr const char* kDefaultBrokerAddr = "127.0.0.1:7600";

// SVS_BROKER_ADDR overrides whatever the flag carries.
std::string resolve_broker(const std::string& flag_value) {
    if (const char* env = std::getenv("SVS_BROKER_ADDR"); env && *env) return env;
    return flag_value;
}

svs::RunBundle load_bundle_or_default(const std::string& config_path) {
    if (config_path.empty()) return svs::calibrated_run_bundle();
    return svs::load_run_bundle(config_path);
}

std::vector<std::string> split_topics(const std::string& csv) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(csv);
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    if (out.empty()) throw svs::ValidationError("no topics given");
    return out;
}

// ---------------------------------------------------------------------------
// cloud child process (run --distributed)
// ---------------------------------------------------------------------------

// Hosts the cloud tier in a forked copy of this binary and tears it down on
// scope exit. The child announces its ephemeral port on stdout.
class CloudChild {
  public:
    CloudChild(const std::string& config_path, double deliver_ms_override) {
        int fds[2];
        if (::pipe(fds) != 0) throw svs::RuntimeError("pipe failed");
        pid_ = ::fork();
        if (pid_ < 0) throw svs::RuntimeError("fork failed");
        if (pid_ == 0) {
            ::dup2(fds[1], STDOUT_FILENO);
            ::close(fds[0]);
            ::close(fds[1]);
            char self[4096];
            ssize_t n = ::readlink("/proc/self/exe", self, sizeof(self) - 1);
            if (n <= 0) ::_exit(127);
            self[n] = '\0';
            std::vector<std::string> args = {self, "cloud", "--listen", "127.0.0.1:0"};
            if (!config_path.empty()) {
                args.push_back("--config");
                args.push_back(config_path);
            }
            if (deliver_ms_override >= 0) {
                args.push_back("--deliver-ms");
                args.push_back(std::to_string(deliver_ms_override));
            }
            std::vector<char*> argv;
            argv.reserve(args.size() + 1);
            for (auto& a : args) argv.push_back(a.data());
            argv.push_back(nullptr);
            ::execv(self, argv.data());
            ::_exit(127);
        }
        ::close(fds[1]);
        out_fd_ = fds[0];
        addr_ = wait_for_banner();
    }

    ~CloudChild() { terminate(); }

    CloudChild(const CloudChild&) = delete;
    CloudChild& operator=(const CloudChild&) = delete;

    const std::string& addr() const { return addr_; }

    void terminate() {
        if (pid_ > 0) {
            ::kill(pid_, SIGTERM);
            int status = 0;
            ::waitpid(pid_, &status, 0);
            pid_ = -1;
        }
        if (out_fd_ >= 0) {
            ::close(out_fd_);
            out_fd_ = -1;
        }
    }

  private:
    std::string wait_for_banner() {
        std::string line;
        char ch = 0;
        while (true) {
            ssize_t n = ::read(out_fd_, &ch, 1);
            if (n <= 0) {
                terminate();
                throw svs::RuntimeError("cloud child exited before announcing its address");
            }
            if (ch == '\n') {
                const std::string tag = "listening on ";
                auto pos = line.find(tag);
                if (pos != std::string::npos) return line.substr(pos + tag.size());
                line.clear();
                continue;
            }
            line += ch;
        }
    }

    pid_t pid_ = -1;
    int out_fd_ = -1;
    std::string addr_;
};

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunArgs {
    std::string scenario_path;
    int cameras = 0;  // 0 = every scenario camera
    std::string config_path;
    std::string out_dir;
    bool real_clock = false;
    bool distributed = false;
    std::string broker;  // only consulted with --distributed
    std::uint64_t seed = 0;
    double duration_s = 0;  // 0 = scenario duration
    std::int64_t warmup = 200;
    bool warmup_explicit = false;
    double poll_interval_s = 0;
};

int cmd_run(const RunArgs& a) {
    // Everything is parsed and validated before the output directory is
    // created: an invalid scenario must not leave a partial run dir behind.
    svs::Scenario sc = svs::load_scenario(a.scenario_path);
    svs::RunBundle bundle = load_bundle_or_default(a.config_path);
    if (a.duration_s > 0) {
        sc.duration_frames = std::llround(a.duration_s * sc.frame_rate);
        svs::validate_scenario(sc);
    }

    std::int64_t warmup = a.warmup;
    if (!a.warmup_explicit && sc.batch_count() <= warmup) {
        warmup = sc.batch_count() / 3;
        std::cout << "short scenario: warm-up clamped to " << warmup << " batches\n";
    }

    svs::ExperimentOptions eo;
    eo.scenario = std::move(sc);
    eo.camera_count = a.cameras;
    eo.bundle = bundle;
    eo.run_seed = a.seed;
    eo.warmup_batches = warmup;
    eo.app_poll_interval_s = a.poll_interval_s;
    eo.clock = a.real_clock ? svs::ClockMode::Real : svs::ClockMode::Virtual;

    std::optional<CloudChild> child;
    if (a.distributed) {
        eo.clock = svs::ClockMode::Real;  // remote services do not share virtual time
        std::string addr = resolve_broker(a.broker);
        if (addr.empty()) {
            child.emplace(a.config_path, bundle.cloud.deliver_ms);
            addr = child->addr();
            std::cout << "cloud services hosted by child process at " << addr << "\n";
        } else {
            std::cout << "using external cloud services at " << addr << "\n";
        }
        eo.cloud_addr = addr;
    }

    svs::ExperimentResult result = svs::run_experiment(eo);
    if (child) child->terminate();

    svs::write_run_outputs(result, a.out_dir);
    std::cout << svs::render_report(result.report, svs::ReportFormat::Table);
    std::cout << "run outputs written to " << a.out_dir << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// cloud
// ---------------------------------------------------------------------------

int cmd_cloud(const std::string& listen, const std::string& config_path, int duplicate_every,
              double deliver_ms_override) {
    svs::CloudServer::Options so;
    so.listen_addr = listen;
    if (!config_path.empty()) so.delays = svs::load_run_bundle(config_path).cloud;
    if (deliver_ms_override >= 0) so.delays.deliver_ms = deliver_ms_override;
    so.duplicate_every = duplicate_every;

    // Mask the shutdown signals before the server spawns its threads so the
    // mask is inherited and only this thread takes them, via sigwait.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    svs::CloudServer server(so);
    server.start();
    std::cout << "listening on " << server.address() << std::endl;

    int sig = 0;
    sigwait(&set, &sig);
    std::cout << "shutting down on signal " << sig << "\n";
    server.stop();
    std::cout << server.counters().dump() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// subscribe
// ---------------------------------------------------------------------------

std::atomic<svs::SubscriberClient*> g_subscriber{nullptr};

void on_subscribe_signal(int) {
    if (auto* c = g_subscriber.load()) c->stop();
}

int cmd_subscribe(const std::string& broker, const std::string& topics_csv,
                  const std::string& log_path, int retries, std::uint64_t max_events) {
    std::string addr = resolve_broker(broker);
    std::vector<std::string> topics = split_topics(topics_csv);

    std::unique_ptr<svs::SubscriberClient> client;
    double backoff_s = 0.5;
    for (int attempt = 0;; ++attempt) {
        try {
            client = std::make_unique<svs::SubscriberClient>(addr, topics);
            break;
        } catch (const svs::RuntimeError& e) {
            if (attempt >= retries) {
                std::cerr << "error: broker unreachable at " << addr << " after " << attempt + 1
                          << " attempts: " << e.what() << "\n";
                return kExitRuntime;
            }
            std::cerr << "broker not reachable (" << e.what() << "); retrying in " << backoff_s
                      << " s\n";
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff_s));
            backoff_s *= 2;
        }
    }

    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path, std::ios::binary | std::ios::trunc);
        if (!log) throw svs::RuntimeError("cannot write delivery log " + log_path);
    }

    g_subscriber.store(client.get());
    std::signal(SIGINT, &on_subscribe_signal);
    std::signal(SIGTERM, &on_subscribe_signal);

    std::cout << "subscribed to " << topics_csv << " at " << addr << "\n";
    std::uint64_t printed = 0;
    client->run([&](const svs::SubscriberClient::Delivery& d) {
        std::ostringstream line;
        line << "t=" << std::fixed << std::setprecision(6) << svs::ns_to_s(d.receipt_raw_ns)
             << " topic=" << d.msg.topic << " seq=" << d.msg.seq << " camera=" << d.msg.camera_id
             << " kind=" << svs::to_string(d.msg.kind)
             << " event_id=" << d.msg.detail.value("event_id", std::string{"?"});
        std::cout << line.str() << "\n" << std::flush;
        if (log) {
            svs::DeliveryRecord rec;
            rec.receipt_ts = d.receipt_raw_ns;
            rec.camera_id = d.msg.camera_id;
            rec.kind = d.msg.kind;
            rec.trigger_ts = d.msg.trigger_ts;
            rec.seq = d.msg.seq;
            log << svs::delivery_to_json(rec).dump() << "\n" << std::flush;
        }
        if (max_events > 0 && ++printed >= max_events) client->stop();
    });

    g_subscriber.store(nullptr);
    std::cout << "received " << client->received() << " notifications, "
              << client->duplicates_suppressed() << " duplicates suppressed\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// bench-pcp
// ---------------------------------------------------------------------------

struct PcpReference {
    double mean_s = 0;
    double tol_fraction = 0.2;
};

// Measured-deployment round-trip means (seconds) for the stock calibration.
const std::map<std::pair<char, int>, PcpReference> kPcpReferences = {
    {{'o', 1}, {5.30, 0.20}}, {{'o', 4}, {5.78, 0.20}}, {{'o', 8}, {11.11, 0.25}},
    {{'b', 1}, {7.30, 0.20}}, {{'b', 4}, {7.63, 0.20}}, {{'b', 8}, {20.78, 0.30}},
};

void print_reference_line(const char* label, double measured, double reference,
                          double tol_fraction) {
    double dev = reference != 0 ? (measured - reference) / reference : 0;
    std::cout << "  reference " << label << " " << std::fixed << std::setprecision(2) << reference
              << " s -> measured " << measured << " s, deviation " << std::showpos
              << std::setprecision(1) << dev * 100 << "%" << std::noshowpos << " ("
              << (std::fabs(dev) <= tol_fraction ? "within" : "outside") << " +/-"
              << std::setprecision(0) << tol_fraction * 100 << "%)\n";
}

int cmd_bench_pcp(int cameras, const std::string& kind_str, int samples,
                  const std::string& config_path, int density, std::uint64_t seed,
                  const std::string& out_dir, bool strict) {
    svs::AnomalyKind kind =
        kind_str == "object" ? svs::AnomalyKind::Object : svs::AnomalyKind::Behavioral;
    if (density < 0) density = cameras >= 8 ? 4 : 2;

    svs::ExperimentOptions eo;
    eo.scenario = svs::make_pcp_scenario(cameras, kind, samples, density, seed);
    eo.bundle = load_bundle_or_default(config_path);

    svs::ExperimentResult result = svs::run_experiment(eo);
    const svs::RunReport& rep = result.report;

    const char* metric = kind == svs::AnomalyKind::Object ? "PCPObject" : "PCPBehavioral";
    auto it = rep.kinds.find(metric);
    std::int64_t matched = it != rep.kinds.end() ? it->second.count : 0;

    std::cout << "notification round-trip (physical -> cyber -> physical)\n";
    std::cout << "kind=" << svs::to_string(kind) << " cameras=" << cameras
              << " samples=" << samples << " matched=" << matched << " missed=" << rep.pcp_missed
              << " ambiguous=" << rep.pcp_ambiguous << "\n";
    if (it != rep.kinds.end() && !it->second.insufficient) {
        const svs::KindStats& st = it->second;
        std::cout << "  mean " << std::fixed << std::setprecision(3) << st.mean_s << " s   stddev "
                  << st.stddev_s << " s   min " << st.min_s << " s   max " << st.max_s << " s\n";
        auto ref = kPcpReferences.find({kind == svs::AnomalyKind::Object ? 'o' : 'b', cameras});
        if (ref != kPcpReferences.end() && config_path.empty()) {
            print_reference_line("mean", st.mean_s, ref->second.mean_s, ref->second.tol_fraction);
            if (kind == svs::AnomalyKind::Behavioral && cameras == 8) {
                print_reference_line("stddev", st.stddev_s, 1.54, 0.30);
                print_reference_line("min", st.min_s, 18.46, 0.30);
                print_reference_line("max", st.max_s, 25.01, 0.30);
            }
        }
    } else {
        std::cout << "  (no matched samples)\n";
    }

    std::cout << "per-sample CSV:\n";
    std::cout << svs::render_report(rep, svs::ReportFormat::Csv);

    if (!out_dir.empty()) {
        svs::write_run_outputs(result, out_dir);
        std::cout << "run outputs written to " << out_dir << "\n";
    }

    if (strict && rep.pcp_missed > 0) {
        std::cerr << "strict mode: " << rep.pcp_missed << " injections were never notified\n";
        return kExitStrict;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int cmd_report(const std::string& dir, const std::string& format) {
    fs::path path = fs::path(dir) / "report.json";
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        std::cerr << "error: missing report file " << path.string() << "\n";
        return kExitRuntime;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    svs::RunReport rep = svs::parse_report_json(buf.str());
    std::cout << svs::render_report(rep, svs::report_format_from_string(format));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"smart-surveillance emulation driver"};
    app.require_subcommand(1);

    RunArgs run_args;
    CLI::App* run = app.add_subcommand("run", "execute a scenario end to end");
    run->add_option("--scenario", run_args.scenario_path, "scenario JSON file")->required();
    run->add_option("--cameras", run_args.cameras, "active camera count (0 = all in scenario)")
        ->check(CLI::Range(0, 64));
    run->add_option("--config", run_args.config_path,
                    "run configuration JSON (default: calibrated)");
    run->add_option("--out", run_args.out_dir, "output directory")->required();
    run->add_flag("--real-clock", run_args.real_clock, "wall-clock pacing instead of virtual time");
    run->add_option("--seed", run_args.seed, "runtime noise seed (0 = scenario seed)");
    run->add_option("--duration-s", run_args.duration_s, "override scenario duration (seconds)")
        ->check(CLI::NonNegativeNumber);
    auto* warmup_opt = run->add_option("--warmup", run_args.warmup,
                                       "warm-up batches dropped per camera (clamped on short "
                                       "scenarios unless set explicitly)")
                           ->check(CLI::NonNegativeNumber)
                           ->capture_default_str();
    run->add_option("--poll-interval-s", run_args.poll_interval_s,
                    "emulated phone-app stats polling interval (0 = off)")
        ->check(CLI::NonNegativeNumber);
    run->add_flag("--distributed", run_args.distributed,
                  "host cloud services in a separate process (implies real clock)");
    run->add_option("--broker", run_args.broker,
                    "external cloud address for --distributed (overridden by SVS_BROKER_ADDR)");

    std::string cloud_listen = kDefaultBrokerAddr;
    std::string cloud_config;
    int cloud_dup = 0;
    double cloud_deliver_ms = -1;
    CLI::App* cloud = app.add_subcommand("cloud", "host the cloud services");
    cloud->add_option("--listen", cloud_listen, "listen address (host:port, port 0 = ephemeral)")
        ->capture_default_str();
    cloud->add_option("--config", cloud_config, "run configuration JSON (cloud delays)");
    cloud->add_option("--duplicate-every", cloud_dup,
                      "inject a duplicate delivery every Nth publish (0 = off)")
        ->check(CLI::NonNegativeNumber);
    cloud->add_option("--deliver-ms", cloud_deliver_ms,
                      "override broker-to-subscriber delivery delay (ms)");

    std::string sub_broker = kDefaultBrokerAddr;
    std::string sub_topics = std::string(svs::kTopicObject) + "," + svs::kTopicBehavioral;
    std::string sub_log;
    int sub_retries = 5;
    std::uint64_t sub_max_events = 0;
    CLI::App* sub = app.add_subcommand("subscribe", "attach as the notification client");
    sub->add_option("--broker", sub_broker, "broker address (overridden by SVS_BROKER_ADDR)")
        ->capture_default_str();
    sub->add_option("--topics", sub_topics, "comma-separated topic list")->capture_default_str();
    sub->add_option("--log", sub_log, "write a JSONL delivery log to this file");
    sub->add_option("--retries", sub_retries, "connect retries before giving up")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sub->add_option("--max-events", sub_max_events, "stop after N unique notifications (0 = run "
                                                    "until interrupted)");

    int bp_cameras = 1;
    std::string bp_kind;
    int bp_samples = 30;
    std::string bp_config;
    int bp_density = -1;
    std::uint64_t bp_seed = 9001;
    std::string bp_out;
    bool bp_strict = false;
    CLI::App* bench = app.add_subcommand("bench-pcp", "notification round-trip benchmark");
    bench->add_option("--cameras", bp_cameras, "camera count")
        ->required()
        ->check(CLI::Range(1, 8));
    bench->add_option("--kind", bp_kind, "anomaly kind")
        ->required()
        ->check(CLI::IsMember({"object", "behavior"}));
    bench->add_option("--samples", bp_samples, "injections to measure")
        ->capture_default_str()
        ->check(CLI::Range(1, 1000));
    bench->add_option("--config", bp_config, "run configuration JSON (default: calibrated)");
    bench->add_option("--density", bp_density,
                      "background walkers per camera (-1 = calibrated default)");
    bench->add_option("--seed", bp_seed, "scenario seed")->capture_default_str();
    bench->add_option("--out", bp_out, "also write full run outputs to this directory");
    bench->add_flag("--strict", bp_strict, "exit 4 when any injection goes unnotified");

    std::string rep_dir;
    std::string rep_format = "table";
    CLI::App* rep = app.add_subcommand("report", "re-render a run directory's report");
    rep->add_option("dir", rep_dir, "run directory (containing report.json)")->required();
    rep->add_option("--format", rep_format, "output format")
        ->capture_default_str()
        ->check(CLI::IsMember({"table", "csv", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }
    run_args.warmup_explicit = warmup_opt->count() > 0;

    try {
        if (*run) return cmd_run(run_args);
        if (*cloud) return cmd_cloud(cloud_listen, cloud_config, cloud_dup, cloud_deliver_ms);
        if (*sub)
            return cmd_subscribe(sub_broker, sub_topics, sub_log, sub_retries, sub_max_events);
        if (*bench)
            return cmd_bench_pcp(bp_cameras, bp_kind, bp_samples, bp_config, bp_density, bp_seed,
                                 bp_out, bp_strict);
        if (*rep) return cmd_report(rep_dir, rep_format);
    } catch (const svs::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const svs::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
