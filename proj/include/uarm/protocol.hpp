#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "uarm/kinematic_config.hpp"
#include "uarm/session.hpp"

namespace uarm {

// Envelope: {"kind": ..., "seq": n, "t": ms since session start, "payload": {...}}
// Field-level documentation lives in docs/protocol.md; JSON Schemas in docs/schemas/.
enum class MessageKind { LeaderAngles, FollowerState, CommandBatch, SessionEvent, Error, Metric };

std::string to_string(MessageKind kind);
std::optional<MessageKind> parse_message_kind(std::string_view text);

struct WireMessage {
  MessageKind kind = MessageKind::Metric;
  nlohmann::json payload = nlohmann::json::object();
  std::uint64_t seq = 0;
  double t_ms = 0.0;
};

nlohmann::json to_json(const WireMessage& message);
std::string encode(const WireMessage& message);

// Parses and validates one message; throws ParseError(1, reason) on failure.
WireMessage decode(std::string_view text);

// Returns a description of the first schema violation, or nullopt if valid.
std::optional<std::string> validate_message(const nlohmann::json& message);

nlohmann::json pose_to_json(const EePose& pose);

nlohmann::json follower_state_payload(const TickReport& report, const ConfigDescriptor& config,
                                      const SessionState& state, std::uint64_t leader_seq);
nlohmann::json command_batch_payload(const CommandBatch& batch, std::uint64_t tick);
nlohmann::json session_event_payload(const PhaseChange& change, const SessionState& state);
nlohmann::json error_payload(std::string_view code, std::string_view message);
nlohmann::json params_to_json(const MappingParams& params);
// Overlays any of tau / N / alpha / rate_hz present in `j` onto `base`.
MappingParams params_from_json(const nlohmann::json& j, MappingParams base);

}  // namespace uarm
