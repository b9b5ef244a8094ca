#pragma once

// Socket-facing cloud tier: a threaded TCP server exposing the broker, the
// KV store, and the stats service over the framed wire protocol, plus the
// matching blocking clients. The server reuses the same storage/stats cores
// as the in-process services; service delays are applied per request on the
// handling thread, mirroring the in-kernel timings.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "svs/cloud.hpp"
#include "svs/net.hpp"
#include "svs/sim.hpp"
#include "svs/wire.hpp"

namespace svs {

class CloudServer {
  public:
    struct Options {
        std::string listen_addr = "127.0.0.1:0";
        CloudDelays delays{};
        // Inject a duplicate EVENT delivery for every Nth publish (0 = off);
        // exercises subscriber-side deduplication.
        int duplicate_every = 0;
    };

    CloudServer();
    explicit CloudServer(Options opt);
    ~CloudServer();

    CloudServer(const CloudServer&) = delete;
    CloudServer& operator=(const CloudServer&) = delete;

    // Binds and spawns the accept loop. Throws RuntimeError on bind failure.
    void start();
    void stop();

    int port() const { return port_; }
    std::string address() const { return "127.0.0.1:" + std::to_string(port_); }

    nlohmann::json counters() const;

  private:
    struct Client {
        TcpConn conn;
        std::thread reader;
        std::thread writer;
        std::mutex mu;
        std::condition_variable cv;
        std::deque<std::string> outbox;  // pre-encoded frames
        std::set<std::string> topics;
        bool closing = false;
        bool dead = false;
    };

    void accept_loop();
    void reader_loop(const std::shared_ptr<Client>& c);
    void writer_loop(const std::shared_ptr<Client>& c);
    void handle_msg(Client& c, const nlohmann::json& msg);
    void enqueue(Client& c, const nlohmann::json& payload);
    void sleep_delay(double ms) const;

    Options opt_;
    TcpListener listener_;
    int port_ = 0;
    std::thread acceptor_;
    std::atomic<bool> running_{false};

    KvStorage storage_;
    mutable std::mutex storage_mu_;

    std::map<std::string, std::uint64_t> topic_seq_;
    std::mutex pub_mu_;

    std::vector<std::shared_ptr<Client>> clients_;
    mutable std::mutex clients_mu_;

    std::atomic<std::uint64_t> published_{0};
    std::atomic<std::uint64_t> delivered_{0};
    std::atomic<std::uint64_t> duplicates_injected_{0};
    std::atomic<std::uint64_t> puts_{0};
    std::atomic<std::uint64_t> gets_{0};
    std::atomic<std::uint64_t> queries_{0};
    std::atomic<std::uint64_t> stats_calls_{0};
    std::atomic<std::uint64_t> connections_total_{0};
    std::atomic<std::uint64_t> subscriptions_{0};
    std::atomic<std::uint64_t> subscribers_dropped_{0};
};

// Blocking RPC client for the cloud server, usable wherever the in-process
// services fit: each call sends one request frame and waits for its RESP/ACK.
// Calls never suspend mid-RPC, so a single connection is safe under the
// single-threaded kernel. Not for subscriptions — see SubscriberClient.
class CloudClient final : public BrokerHandle, public KvHandle, public StatsHandle {
  public:
    // Throws RuntimeError when the server cannot be reached.
    CloudClient(SimKernel& kernel, const std::string& addr);
    ~CloudClient() override;

    SimTask<void> publish(NotificationMessage msg) override;
    SimTask<void> put_item(KVItem item) override;
    SimTask<std::optional<KVItem>> get_item(KvTable table, KVKey key) override;
    SimTask<std::vector<KVItem>> query_range(KvTable table, std::string camera_id, TimeNs from,
                                             TimeNs to) override;
    SimTask<StatsResult> stats(StatsQuery query) override;

    // Round-trip liveness probe.
    void ping();

  private:
    nlohmann::json rpc(nlohmann::json payload);

    SimKernel& kernel_;
    TcpConn conn_;
    Framer framer_;
    std::uint64_t next_req_id_ = 1;
};

// Blocking subscriber: SUBs to the given topics, then surfaces every fresh
// EVENT through the callback. Redeliveries of an already-seen event_id are
// counted and suppressed, never surfaced.
class SubscriberClient {
  public:
    struct Delivery {
        NotificationMessage msg;
        TimeNs receipt_raw_ns = 0;  // monotonic_now_ns() at decode time
    };

    SubscriberClient(const std::string& addr, std::vector<std::string> topics);

    // Runs until the server closes the connection or stop() is called.
    void run(const std::function<void(const Delivery&)>& on_delivery);
    void stop();

    std::uint64_t received() const { return received_; }
    std::uint64_t duplicates_suppressed() const { return duplicates_; }

  private:
    TcpConn conn_;
    Framer framer_;
    std::set<std::string> seen_event_ids_;
    std::atomic<bool> stopping_{false};
    std::uint64_t received_ = 0;
    std::uint64_t duplicates_ = 0;
};

}  // namespace svs
