#include "svs/wire.hpp"

#include <array>

namespace svs {

namespace {

struct OpName {
    WireOp op;
    const char* name;
};

constexpr std::array<OpName, 12> kOpNames{{
    {WireOp::Sub, "SUB"},
    {WireOp::Pub, "PUB"},
    {WireOp::Event, "EVENT"},
    {WireOp::Put, "PUT"},
    {WireOp::Get, "GET"},
    {WireOp::Query, "QUERY"},
    {WireOp::Stats, "STATS"},
    {WireOp::Resp, "RESP"},
    {WireOp::Ack, "ACK"},
    {WireOp::Ping, "PING"},
    {WireOp::Pong, "PONG"},
    {WireOp::Ingest, "INGEST"},
}};

}  // namespace

const char* to_string(WireOp op) {
    for (const auto& e : kOpNames) {
        if (e.op == op) return e.name;
    }
    return "UNKNOWN";
}

WireOp wire_op_from_string(const std::string& s) {
    for (const auto& e : kOpNames) {
        if (s == e.name) return e.op;
    }
    throw ProtocolError("unknown wire op: " + s);
}

std::string encode_frame(const nlohmann::json& payload) {
    std::string body = payload.dump();
    if (body.size() > kMaxFramePayload) {
        throw ProtocolError("frame payload exceeds " + std::to_string(kMaxFramePayload) +
                            " bytes: " + std::to_string(body.size()));
    }
    const auto n = static_cast<std::uint32_t>(body.size());
    std::string out;
    out.reserve(4 + body.size());
    out.push_back(static_cast<char>((n >> 24) & 0xff));
    out.push_back(static_cast<char>((n >> 16) & 0xff));
    out.push_back(static_cast<char>((n >> 8) & 0xff));
    out.push_back(static_cast<char>(n & 0xff));
    out.append(body);
    return out;
}

std::optional<nlohmann::json> Framer::next() {
    if (buf_.size() < 4) return std::nullopt;
    const auto b = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[i])); };
    const std::uint32_t len = (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
    if (len > kMaxFramePayload) {
        throw ProtocolError("incoming frame length " + std::to_string(len) + " exceeds " +
                            std::to_string(kMaxFramePayload) + " bytes");
    }
    if (buf_.size() < 4 + static_cast<std::size_t>(len)) return std::nullopt;
    nlohmann::json payload;
    try {
        payload = nlohmann::json::parse(buf_.data() + 4, buf_.data() + 4 + len);
    } catch (const nlohmann::json::parse_error& e) {
        throw ProtocolError(std::string("malformed frame payload: ") + e.what());
    }
    buf_.erase(0, 4 + static_cast<std::size_t>(len));
    return payload;
}

nlohmann::json make_msg(WireOp op, std::uint64_t req_id) {
    nlohmann::json j;
    j["op"] = to_string(op);
    if (req_id != 0) j["req_id"] = req_id;
    return j;
}

WireOp msg_op(const nlohmann::json& payload) {
    if (!payload.is_object() || !payload.contains("op") || !payload["op"].is_string()) {
        throw ProtocolError("wire payload missing string `op`");
    }
    return wire_op_from_string(payload["op"].get<std::string>());
}

std::uint64_t msg_req_id(const nlohmann::json& payload) {
    if (!payload.contains("req_id")) return 0;
    if (!payload["req_id"].is_number_unsigned() && !payload["req_id"].is_number_integer()) {
        throw ProtocolError("wire payload `req_id` must be an integer");
    }
    return payload["req_id"].get<std::uint64_t>();
}

}  // namespace svs
