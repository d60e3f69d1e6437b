#include "uarm/protocol.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "uarm/errors.hpp"

namespace uarm {

namespace {

using nlohmann::json;

constexpr std::array<std::pair<MessageKind, const char*>, 6> kKinds{{
    {MessageKind::LeaderAngles, "leader_angles"},
    {MessageKind::FollowerState, "follower_state"},
    {MessageKind::CommandBatch, "command_batch"},
    {MessageKind::SessionEvent, "session_event"},
    {MessageKind::Error, "error"},
    {MessageKind::Metric, "metric"},
}};

bool number_array(const json& j, std::optional<std::size_t> size = std::nullopt) {
  if (!j.is_array()) return false;
  if (size && j.size() != *size) return false;
  for (const auto& v : j) {
    if (!v.is_number()) return false;
  }
  return true;
}

std::optional<std::string> require(const json& p, const char* field, bool ok) {
  if (!p.contains(field)) return std::string("payload.") + field + " is required";
  if (!ok) return std::string("payload.") + field + " has the wrong type";
  return std::nullopt;
}

#define UARM_CHECK(expr)             \
  do {                               \
    if (auto problem = (expr)) return problem; \
  } while (false)

std::optional<std::string> validate_payload(MessageKind kind, const json& p) {
  auto field = [&](const char* name) -> const json& {
    static const json kNull;
    return p.contains(name) ? p.at(name) : kNull;
  };
  switch (kind) {
    case MessageKind::LeaderAngles:
      UARM_CHECK(require(p, "angles_deg", number_array(field("angles_deg")) && !field("angles_deg").empty()));
      break;
    case MessageKind::FollowerState: {
      UARM_CHECK(require(p, "phase", field("phase").is_string()));
      try {
        parse_phase(field("phase").get<std::string>());
      } catch (const Error&) {
        return std::string("payload.phase is not a known phase");
      }
      UARM_CHECK(require(p, "tick", field("tick").is_number_unsigned()));
      UARM_CHECK(require(p, "q", number_array(field("q"))));
      UARM_CHECK(require(p, "leader_seq", field("leader_seq").is_number_unsigned()));
      UARM_CHECK(require(p, "episode_id", field("episode_id").is_string() || field("episode_id").is_null()));
      UARM_CHECK(require(p, "ee", field("ee").is_object()));
      const auto& ee = field("ee");
      if (!ee.contains("position") || !number_array(ee.at("position"), 3)) return std::string("payload.ee.position must be 3 numbers");
      if (!ee.contains("orientation") || !number_array(ee.at("orientation"), 4)) {
        return std::string("payload.ee.orientation must be 4 numbers (w, x, y, z)");
      }
      break;
    }
    case MessageKind::CommandBatch: {
      UARM_CHECK(require(p, "tick", field("tick").is_number_unsigned()));
      UARM_CHECK(require(p, "joints", field("joints").is_array()));
      for (const auto& j : field("joints")) {
        if (!number_array(j)) return std::string("payload.joints must be an array of number arrays");
      }
      break;
    }
    case MessageKind::SessionEvent: {
      UARM_CHECK(require(p, "event", field("event").is_string()));
      if (p.contains("outcome")) {
        const auto& o = p.at("outcome");
        if (!o.is_string() || (o != "success" && o != "failure" && o != "estop")) {
          return std::string("payload.outcome must be success, failure or estop");
        }
      }
      if (p.contains("phase") && !p.at("phase").is_string()) return std::string("payload.phase has the wrong type");
      if (p.contains("params") && !p.at("params").is_object()) return std::string("payload.params has the wrong type");
      break;
    }
    case MessageKind::Error:
      UARM_CHECK(require(p, "code", field("code").is_string()));
      UARM_CHECK(require(p, "message", field("message").is_string()));
      break;
    case MessageKind::Metric:
      for (const auto& [key, value] : p.items()) {
        if (!value.is_number()) return "payload." + key + " must be a number";
      }
      break;
  }
  return std::nullopt;
}

#undef UARM_CHECK

}  // namespace

std::string to_string(MessageKind kind) {
  for (const auto& [k, name] : kKinds) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<MessageKind> parse_message_kind(std::string_view text) {
  for (const auto& [k, name] : kKinds) {
    if (text == name) return k;
  }
  return std::nullopt;
}

json to_json(const WireMessage& m) {
  return {{"kind", to_string(m.kind)}, {"seq", m.seq}, {"t", m.t_ms}, {"payload", m.payload}};
}

std::string encode(const WireMessage& m) { return to_json(m).dump(); }

std::optional<std::string> validate_message(const json& m) {
  if (!m.is_object()) return std::string("message must be a JSON object");
  if (!m.contains("kind") || !m.at("kind").is_string()) return std::string("kind is required");
  const auto kind = parse_message_kind(m.at("kind").get<std::string>());
  if (!kind) return "unknown kind '" + m.at("kind").get<std::string>() + "'";
  if (!m.contains("seq") || !m.at("seq").is_number_unsigned()) return std::string("seq must be a non-negative integer");
  if (!m.contains("t") || !m.at("t").is_number() || m.at("t").get<double>() < 0.0) {
    return std::string("t must be a non-negative number");
  }
  if (!m.contains("payload") || !m.at("payload").is_object()) return std::string("payload must be an object");
  return validate_payload(*kind, m.at("payload"));
}

WireMessage decode(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(1, e.what());
  }
  if (auto problem = validate_message(j)) throw ParseError(1, *problem);
  return {*parse_message_kind(j.at("kind").get<std::string>()), j.at("payload"), j.at("seq").get<std::uint64_t>(),
          j.at("t").get<double>()};
}

json pose_to_json(const EePose& pose) {
  const auto& q = pose.orientation;
  return {{"position", {pose.position.x(), pose.position.y(), pose.position.z()}},
          {"orientation", {q.w(), q.x(), q.y(), q.z()}}};
}

json follower_state_payload(const TickReport& report, const ConfigDescriptor& config, const SessionState& state,
                            std::uint64_t leader_seq) {
  json p{{"phase", to_string(report.phase)},
         {"tick", report.tick},
         {"leader_seq", leader_seq},
         {"episode_id", state.episode_id ? json(*state.episode_id) : json(nullptr)}};
  const JointVector q = report.follower_q.value_or(zero_vector(config));
  p["q"] = q.values;
  p["ee"] = pose_to_json(forward_kinematics(config, q));
  if (report.follower_target) p["q_target"] = report.follower_target->values;
  return p;
}

json command_batch_payload(const CommandBatch& batch, std::uint64_t tick) {
  return {{"tick", tick}, {"joints", batch.joints}};
}

json session_event_payload(const PhaseChange& change, const SessionState& state) {
  json p{{"event", to_string(change.event)}, {"from", to_string(change.from)}, {"phase", to_string(change.to)}};
  if (state.episode_id) p["episode_id"] = *state.episode_id;
  return p;
}

json error_payload(std::string_view code, std::string_view message) {
  return {{"code", std::string(code)}, {"message", std::string(message)}};
}

json params_to_json(const MappingParams& params) {
  return {{"tau", std::isinf(params.deadband_deg) ? json("inf") : json(params.deadband_deg)},
          {"N", params.interp_steps},
          {"alpha", params.ema_alpha},
          {"rate_hz", params.rate_hz}};
}

MappingParams params_from_json(const json& j, MappingParams base) {
  try {
    if (j.contains("tau")) {
      const auto& tau = j.at("tau");
      if (tau.is_string() && tau != "inf") throw ConfigError("bad params: tau must be a number or \"inf\"");
      base.deadband_deg = tau.is_string() ? std::numeric_limits<double>::infinity() : tau.get<double>();
    }
    if (j.contains("N")) base.interp_steps = j.at("N").get<int>();
    if (j.contains("alpha")) base.ema_alpha = j.at("alpha").get<double>();
    if (j.contains("rate_hz")) base.rate_hz = j.at("rate_hz").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad params: ") + e.what());
  }
  base.validate();
  return base;
}

}  // namespace uarm
