#include "svs/server.hpp"

#include <chrono>

#include "svs/time.hpp"

namespace svs {

namespace {

nlohmann::json error_resp(std::uint64_t req_id, const std::string& what) {
    nlohmann::json j = make_msg(WireOp::Resp, req_id);
    j["error"] = what;
    return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// CloudServer
// ---------------------------------------------------------------------------

CloudServer::CloudServer() : CloudServer(Options{}) {}

CloudServer::CloudServer(Options opt) : opt_(std::move(opt)) {}

CloudServer::~CloudServer() { stop(); }

void CloudServer::start() {
    listener_ = TcpListener::bind_listen(opt_.listen_addr);
    port_ = listener_.port();
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
}

void CloudServer::stop() {
    if (!running_.exchange(false)) return;
    listener_.close();
    if (acceptor_.joinable()) acceptor_.join();
    std::vector<std::shared_ptr<Client>> clients;
    {
        std::lock_guard lk(clients_mu_);
        clients.swap(clients_);
    }
    for (auto& c : clients) {
        {
            std::lock_guard lk(c->mu);
            c->closing = true;
            c->conn.shutdown_both();  // wakes a reader blocked in recv
        }
        c->cv.notify_all();
        if (c->reader.joinable()) c->reader.join();
        if (c->writer.joinable()) c->writer.join();
    }
}

void CloudServer::accept_loop() {
    while (running_) {
        TcpConn conn;
        try {
            conn = listener_.accept();
        } catch (const RuntimeError&) {
            break;  // listener closed
        }
        auto client = std::make_shared<Client>();
        client->conn = std::move(conn);
        ++connections_total_;
        {
            std::lock_guard lk(clients_mu_);
            clients_.push_back(client);
        }
        client->reader = std::thread([this, client] { reader_loop(client); });
        client->writer = std::thread([this, client] { writer_loop(client); });
    }
}

void CloudServer::reader_loop(const std::shared_ptr<Client>& c) {
    Framer framer;
    char buf[64 * 1024];
    try {
        while (true) {
            const std::size_t n = c->conn.recv_some(buf, sizeof(buf));
            if (n == 0) break;  // peer closed
            framer.feed(buf, n);
            while (auto msg = framer.next()) handle_msg(*c, *msg);
        }
    } catch (const std::exception&) {
        // framing violation or dead socket: drop the connection
    }
    {
        std::lock_guard lk(c->mu);
        c->closing = true;
    }
    c->cv.notify_all();
}

void CloudServer::writer_loop(const std::shared_ptr<Client>& c) {
    while (true) {
        std::string frame;
        {
            std::unique_lock lk(c->mu);
            c->cv.wait(lk, [&] { return c->closing || !c->outbox.empty(); });
            if (c->outbox.empty()) break;  // closing and drained
            frame = std::move(c->outbox.front());
            c->outbox.pop_front();
            if (c->dead) continue;
        }
        try {
            if (opt_.delays.deliver_ms > 0 && frame.size() > 4) {
                // Only EVENT frames are delayed; responses go out immediately.
                // Frames are pre-encoded, so the op is rechecked cheaply here.
                Framer probe;
                probe.feed(frame);
                if (auto p = probe.next(); p && msg_op(*p) == WireOp::Event) {
                    sleep_delay(opt_.delays.deliver_ms);
                }
            }
            c->conn.send_all(frame);
        } catch (const std::exception&) {
            std::lock_guard lk(c->mu);
            if (!c->dead) {
                c->dead = true;
                ++subscribers_dropped_;
            }
            c->conn.close();
        }
    }
    {
        std::lock_guard lk(c->mu);
        c->conn.close();
    }
}

void CloudServer::enqueue(Client& c, const nlohmann::json& payload) {
    {
        std::lock_guard lk(c.mu);
        if (c.closing || c.dead) return;
        c.outbox.push_back(encode_frame(payload));
    }
    c.cv.notify_all();
}

void CloudServer::sleep_delay(double ms) const {
    if (ms <= 0) return;
    std::this_thread::sleep_for(std::chrono::nanoseconds(ms_to_ns(ms)));
}

void CloudServer::handle_msg(Client& c, const nlohmann::json& msg) {
    const WireOp op = msg_op(msg);  // unknown op: fatal for the connection
    const std::uint64_t req_id = msg_req_id(msg);
    try {
        switch (op) {
            case WireOp::Ping: {
                enqueue(c, make_msg(WireOp::Pong, req_id));
                return;
            }
            case WireOp::Sub: {
                if (!msg.contains("topics") || !msg["topics"].is_array()) {
                    throw ValidationError("SUB requires a `topics` array");
                }
                std::set<std::string> topics;
                for (const auto& t : msg["topics"]) topics.insert(t.get<std::string>());
                {
                    std::lock_guard lk(c.mu);
                    c.topics = std::move(topics);
                }
                auto ack = make_msg(WireOp::Ack, req_id);
                ack["subscribed"] = msg["topics"];
                enqueue(c, ack);
                return;
            }
            case WireOp::Pub: {
                auto m = NotificationMessage::from_json(msg.at("message"));
                if (m.topic.empty()) throw ValidationError("PUB message requires a topic");
                sleep_delay(opt_.delays.publish_ms);
                std::uint64_t seq = 0;
                {
                    // Sequence assignment and fan-out under one lock so every
                    // subscriber observes topic order exactly.
                    std::lock_guard pub_lk(pub_mu_);
                    seq = ++topic_seq_[m.topic];
                    m.seq = seq;
                    m.publish_ts = monotonic_now_ns();
                    ++published_;
                    const bool dup = opt_.duplicate_every > 0 &&
                                     published_ % static_cast<std::uint64_t>(opt_.duplicate_every) == 0;
                    auto event = make_msg(WireOp::Event);
                    event["message"] = m.to_json();
                    std::lock_guard cl_lk(clients_mu_);
                    for (auto& sub : clients_) {
                        bool wants = false;
                        {
                            std::lock_guard lk(sub->mu);
                            wants = !sub->dead && !sub->closing && sub->topics.count(m.topic) > 0;
                        }
                        if (!wants) continue;
                        enqueue(*sub, event);
                        ++delivered_;
                        if (dup) {
                            enqueue(*sub, event);
                            ++duplicates_injected_;
                        }
                    }
                }
                auto ack = make_msg(WireOp::Ack, req_id);
                ack["seq"] = seq;
                enqueue(c, ack);
                return;
            }
            case WireOp::Put: {
                auto item = KVItem::from_json(msg.at("item"));
                sleep_delay(opt_.delays.put_ms);
                {
                    std::lock_guard lk(storage_mu_);
                    storage_.put(item);
                }
                ++puts_;
                enqueue(c, make_msg(WireOp::Ack, req_id));
                return;
            }
            case WireOp::Get: {
                const auto table = kv_table_from_string(msg.at("table").get<std::string>());
                KVKey key{msg.at("camera_id").get<std::string>(),
                          msg.at("timestamp").get<TimeNs>()};
                sleep_delay(opt_.delays.get_ms);
                std::optional<KVItem> found;
                {
                    std::lock_guard lk(storage_mu_);
                    found = storage_.get(table, key);
                }
                ++gets_;
                auto resp = make_msg(WireOp::Resp, req_id);
                resp["found"] = found.has_value();
                if (found) resp["item"] = found->to_json();
                enqueue(c, resp);
                return;
            }
            case WireOp::Query: {
                const auto table = kv_table_from_string(msg.at("table").get<std::string>());
                const auto camera = msg.at("camera_id").get<std::string>();
                const auto from = msg.value("from", TimeNs{0});
                const auto to = msg.value("to", std::numeric_limits<TimeNs>::max());
                sleep_delay(opt_.delays.get_ms);
                std::vector<KVItem> items;
                {
                    std::lock_guard lk(storage_mu_);
                    items = storage_.query(table, camera, from, to);
                }
                ++queries_;
                auto resp = make_msg(WireOp::Resp, req_id);
                auto arr = nlohmann::json::array();
                for (const auto& it : items) arr.push_back(it.to_json());
                resp["items"] = std::move(arr);
                enqueue(c, resp);
                return;
            }
            case WireOp::Stats: {
                const auto query = StatsQuery::from_json(msg.at("query"));
                sleep_delay(stats_is_complex(query.metric) ? opt_.delays.stats_complex_ms
                                                           : opt_.delays.stats_simple_ms);
                StatsResult result;
                {
                    std::lock_guard lk(storage_mu_);
                    result = stats_evaluate(storage_, query);
                }
                ++stats_calls_;
                auto resp = make_msg(WireOp::Resp, req_id);
                resp["metric"] = result.metric;
                resp["payload"] = result.payload;
                enqueue(c, resp);
                return;
            }
            case WireOp::Ingest: {
                enqueue(c, error_resp(req_id, "INGEST is a camera-to-analysis operation; "
                                              "the cloud node does not accept it"));
                return;
            }
            default: {
                enqueue(c, error_resp(req_id,
                                      std::string("unexpected client op: ") + to_string(op)));
                return;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        enqueue(c, error_resp(req_id, std::string("bad request fields: ") + e.what()));
    } catch (const ParseError& e) {
        enqueue(c, error_resp(req_id, e.what()));
    } catch (const ValidationError& e) {
        enqueue(c, error_resp(req_id, e.what()));
    } catch (const ProtocolError& e) {
        enqueue(c, error_resp(req_id, e.what()));
    }
}

nlohmann::json CloudServer::counters() const {
    nlohmann::json j;
    j["published"] = published_.load();
    j["delivered"] = delivered_.load();
    j["duplicates_injected"] = duplicates_injected_.load();
    j["puts"] = puts_.load();
    j["gets"] = gets_.load();
    j["queries"] = queries_.load();
    j["stats_calls"] = stats_calls_.load();
    j["connections_total"] = connections_total_.load();
    j["subscribers_dropped"] = subscribers_dropped_.load();
    return j;
}

// ---------------------------------------------------------------------------
// CloudClient
// ---------------------------------------------------------------------------

CloudClient::CloudClient(SimKernel& kernel, const std::string& addr)
    : kernel_(kernel), conn_(TcpConn::connect(addr)) {}

CloudClient::~CloudClient() = default;

nlohmann::json CloudClient::rpc(nlohmann::json payload) {
    const std::uint64_t id = next_req_id_++;
    payload["req_id"] = id;
    conn_.send_all(encode_frame(payload));
    char buf[64 * 1024];
    while (true) {
        if (auto msg = framer_.next()) {
            const WireOp op = msg_op(*msg);
            if ((op == WireOp::Resp || op == WireOp::Ack || op == WireOp::Pong) &&
                msg_req_id(*msg) == id) {
                if (msg->contains("error")) {
                    throw ValidationError("cloud request failed: " +
                                          (*msg)["error"].get<std::string>());
                }
                return std::move(*msg);
            }
            // EVENTs never arrive here (this connection never subscribes);
            // anything else is a correlation bug.
            throw ProtocolError(std::string("unexpected frame while awaiting response: ") +
                                to_string(op));
        }
        const std::size_t n = conn_.recv_some(buf, sizeof(buf));
        if (n == 0) throw RuntimeError("cloud connection closed mid-request");
        framer_.feed(buf, n);
    }
}

void CloudClient::ping() { rpc(make_msg(WireOp::Ping)); }

SimTask<void> CloudClient::publish(NotificationMessage msg) {
    auto req = make_msg(WireOp::Pub);
    req["message"] = msg.to_json();
    try {
        rpc(std::move(req));
    } catch (const RuntimeError& e) {
        // Surfaced with broker semantics so callers' retry policies apply.
        throw BrokerUnavailable(e.what());
    }
    co_return;
}

SimTask<void> CloudClient::put_item(KVItem item) {
    auto req = make_msg(WireOp::Put);
    req["item"] = item.to_json();
    rpc(std::move(req));
    co_return;
}

SimTask<std::optional<KVItem>> CloudClient::get_item(KvTable table, KVKey key) {
    auto req = make_msg(WireOp::Get);
    req["table"] = to_string(table);
    req["camera_id"] = key.camera_id;
    req["timestamp"] = key.timestamp;
    auto resp = rpc(std::move(req));
    std::optional<KVItem> out;
    if (resp.value("found", false)) out = KVItem::from_json(resp.at("item"));
    co_return out;
}

SimTask<std::vector<KVItem>> CloudClient::query_range(KvTable table, std::string camera_id,
                                                      TimeNs from, TimeNs to) {
    auto req = make_msg(WireOp::Query);
    req["table"] = to_string(table);
    req["camera_id"] = camera_id;
    req["from"] = from;
    req["to"] = to;
    auto resp = rpc(std::move(req));
    std::vector<KVItem> out;
    for (const auto& it : resp.at("items")) out.push_back(KVItem::from_json(it));
    co_return out;
}

SimTask<StatsResult> CloudClient::stats(StatsQuery query) {
    auto req = make_msg(WireOp::Stats);
    req["query"] = query.to_json();
    auto resp = rpc(std::move(req));
    StatsResult out;
    out.metric = resp.at("metric").get<std::string>();
    out.payload = resp.at("payload");
    co_return out;
}

// ---------------------------------------------------------------------------
// SubscriberClient
// ---------------------------------------------------------------------------

SubscriberClient::SubscriberClient(const std::string& addr, std::vector<std::string> topics)
    : conn_(TcpConn::connect(addr)) {
    auto req = make_msg(WireOp::Sub, 1);
    req["topics"] = topics;
    conn_.send_all(encode_frame(req));
}

void SubscriberClient::run(const std::function<void(const Delivery&)>& on_delivery) {
    char buf[64 * 1024];
    bool acked = false;
    while (!stopping_) {
        std::size_t n = 0;
        try {
            n = conn_.recv_some(buf, sizeof(buf));
        } catch (const RuntimeError&) {
            break;  // closed under us (stop() or dead server)
        }
        if (n == 0) break;
        framer_.feed(buf, n);
        while (auto msg = framer_.next()) {
            const WireOp op = msg_op(*msg);
            if (op == WireOp::Ack && !acked) {
                acked = true;
                continue;
            }
            if (op != WireOp::Event) continue;
            Delivery d;
            d.receipt_raw_ns = monotonic_now_ns();
            d.msg = NotificationMessage::from_json(msg->at("message"));
            std::string event_id = d.msg.detail.value("event_id", std::string{});
            if (event_id.empty()) {
                event_id = d.msg.topic + "#" + std::to_string(d.msg.seq);
            }
            if (!seen_event_ids_.insert(event_id).second) {
                ++duplicates_;
                continue;  // redelivery: suppressed, never surfaced
            }
            ++received_;
            if (on_delivery) on_delivery(d);
        }
    }
}

void SubscriberClient::stop() {
    stopping_ = true;
    conn_.shutdown_both();  // wakes run() out of recv; the fd outlives it
}

}  // namespace svs
