#pragma once

// Framed wire protocol for all node-to-cloud and client-to-cloud traffic:
// [4-byte big-endian payload length][UTF-8 JSON payload], 1 MiB max frame.
// Payload key `op` selects the operation; `req_id` correlates RESP/ACK.

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>

#include "svs/errors.hpp"

namespace svs {

enum class WireOp {
    Sub,
    Pub,
    Event,
    Put,
    Get,
    Query,
    Stats,
    Resp,
    Ack,
    Ping,
    Pong,
    Ingest,
};

const char* to_string(WireOp op);
WireOp wire_op_from_string(const std::string& s);

inline constexpr std::size_t kMaxFramePayload = 1024 * 1024;  // 1 MiB

// One complete frame for a payload. Throws ProtocolError when the encoded
// payload would exceed the frame limit.
std::string encode_frame(const nlohmann::json& payload);

// Incremental frame decoder. Feed arbitrary byte chunks; next() yields one
// decoded payload per complete frame, in order. Oversize length prefixes
// and malformed JSON raise ProtocolError (connection-fatal).
class Framer {
  public:
    void feed(const char* data, std::size_t n) { buf_.append(data, n); }
    void feed(const std::string& bytes) { buf_.append(bytes); }

    std::optional<nlohmann::json> next();

    std::size_t buffered() const { return buf_.size(); }

  private:
    std::string buf_;
};

// Payload skeleton: {"op": ..., "req_id": ...} (req_id omitted when 0).
nlohmann::json make_msg(WireOp op, std::uint64_t req_id = 0);

// Reads op (required) and req_id (default 0) off a decoded payload.
WireOp msg_op(const nlohmann::json& payload);
std::uint64_t msg_req_id(const nlohmann::json& payload);

}  // namespace svs
