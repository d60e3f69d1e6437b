#include "uarm/follower_sim.hpp"

#include <sys/socket.h>
#include <sys/time.h>

#include <algorithm>
#include <boost/asio.hpp>
#include <cmath>

#include "uarm/errors.hpp"

namespace uarm {

FollowerState make_follower_state(const ConfigDescriptor& config, const JointVector& q, double vmax_deg_s) {
  check_dimension(config, q);
  if (!(vmax_deg_s > 0.0)) throw ConfigError("vmax must be positive");
  return {q, q, std::vector<double>(config.dof, vmax_deg_s), 0.0};
}

FollowerState advance(const FollowerState& state, double dt) {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  FollowerState next = state;
  for (std::size_t i = 0; i < next.q.size(); ++i) {
    const double diff = state.q_target[i] - state.q[i];
    const double limit = state.vmax[i] * dt;
    if (std::abs(diff) <= limit + kArrivalToleranceDeg) {
      next.q[i] = state.q_target[i];
    } else {
      next.q[i] = state.q[i] + std::copysign(limit, diff);
    }
  }
  next.sim_time = state.sim_time + dt;
  return next;
}

std::vector<FollowerState> move_to_initial(const ConfigDescriptor& config, const FollowerState& state,
                                           const JointVector& q_init, double dt) {
  check_dimension(config, q_init);
  if (!within_limits(config, q_init)) throw CalibrationError("initial pose outside follower joint limits");

  FollowerState s = state;
  s.q_target = q_init;
  double worst = 0.0;
  for (std::size_t i = 0; i < s.q.size(); ++i) worst = std::max(worst, std::abs(q_init[i] - s.q[i]) / (s.vmax[i] * dt));
  const auto max_steps = static_cast<std::size_t>(std::ceil(worst)) + 1;

  std::vector<FollowerState> trajectory{s};
  while (s.q != q_init && trajectory.size() <= max_steps) {
    s = advance(s, dt);
    trajectory.push_back(s);
  }
  return trajectory;
}

std::vector<EePose> ee_trace(const std::vector<FollowerState>& states, const ConfigDescriptor& config) {
  std::vector<EePose> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(forward_kinematics(config, s.q));
  return out;
}

FollowerState apply_batch(const ConfigDescriptor& config, FollowerState state, const CommandBatch& batch,
                          double dt, int substeps) {
  std::size_t steps = static_cast<std::size_t>(std::max(substeps, 1));
  for (const auto& j : batch.joints) steps = std::max(steps, j.size());
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t j = 0; j < batch.joints.size() && j < state.q_target.size(); ++j) {
      const auto& cmds = batch.joints[j];
      if (s < cmds.size()) state.q_target[j] = config.joints[j].clamp(cmds[s]);
    }
    state = advance(state, dt);
  }
  return state;
}

// --- FollowerBackend defaults ---------------------------------------------

void FollowerBackend::dispatch(const CommandBatch& batch) {
  std::size_t steps = 0;
  for (const auto& j : batch.joints) steps = std::max(steps, j.size());
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t j = 0; j < batch.joints.size(); ++j) {
      if (s < batch.joints[j].size()) send_command(batch.joints[j][s], static_cast<int>(j + 1));
    }
  }
}

void FollowerBackend::hold() { move_to(read_state(), false); }

// --- SimBackend ------------------------------------------------------------

SimBackend::SimBackend(ConfigDescriptor config, const JointVector& q0, SimParams params)
    : config_(std::move(config)), params_(params), state_(make_follower_state(config_, q0, params.vmax_deg_s)) {
  if (!(params_.dt > 0.0)) throw ConfigError("sim dt must be positive");
  if (params_.substeps < 1) throw ConfigError("sim substeps must be >= 1");
}

void SimBackend::move_to(const JointVector& q, bool blocking) {
  std::lock_guard lock(mutex_);
  if (blocking) {
    state_ = move_to_initial(config_, state_, q, params_.dt).back();
  } else {
    state_.q_target = clamp_to_limits(config_, q);
  }
}

void SimBackend::send_command(double angle_deg, int joint) {
  std::lock_guard lock(mutex_);
  if (joint < 1 || joint > static_cast<int>(config_.dof)) throw DimensionError("joint index out of range");
  const auto j = static_cast<std::size_t>(joint - 1);
  state_.q_target[j] = config_.joints[j].clamp(angle_deg);
}

JointVector SimBackend::read_state() {
  std::lock_guard lock(mutex_);
  return state_.q;
}

void SimBackend::dispatch(const CommandBatch& batch) {
  std::lock_guard lock(mutex_);
  state_ = apply_batch(config_, std::move(state_), batch, params_.dt, params_.substeps);
}

void SimBackend::hold() {
  std::lock_guard lock(mutex_);
  state_.q_target = state_.q;
}

FollowerState SimBackend::state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

// --- LoopbackBackend -------------------------------------------------------

LoopbackBackend::LoopbackBackend(const ConfigDescriptor& config) : config_(config), q_(zero_vector(config)) {}

void LoopbackBackend::move_to(const JointVector& q, bool /*blocking*/) {
  std::lock_guard lock(mutex_);
  q_ = clamp_to_limits(config_, q);
}

void LoopbackBackend::send_command(double angle_deg, int joint) {
  std::lock_guard lock(mutex_);
  if (joint < 1 || joint > static_cast<int>(config_.dof)) throw DimensionError("joint index out of range");
  const auto j = static_cast<std::size_t>(joint - 1);
  q_[j] = config_.joints[j].clamp(angle_deg);
  ++commands_;
}

JointVector LoopbackBackend::read_state() {
  std::lock_guard lock(mutex_);
  return q_;
}

// --- ExternalBackend -------------------------------------------------------

struct ExternalBackend::Connection {
  boost::asio::io_context io;
  boost::asio::ip::tcp::socket socket{io};
  boost::asio::streambuf inbound;
};

ExternalBackend::ExternalBackend(const ConfigDescriptor& config, std::string host, std::uint16_t port)
    : config_(config), conn_(std::make_unique<Connection>()) {
  boost::system::error_code ec;
  const auto address = boost::asio::ip::make_address(host, ec);
  if (!ec) conn_->socket.connect({address, port}, ec);
  if (ec) throw BackendUnavailable("external backend " + host + ":" + std::to_string(port) + ": " + ec.message());
  timeval tv{2, 0};
  ::setsockopt(conn_->socket.native_handle(), SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  healthy_ = true;
}

ExternalBackend::~ExternalBackend() = default;

nlohmann::json ExternalBackend::request(const nlohmann::json& payload, bool expect_reply) {
  if (!healthy_) throw BackendUnavailable("external backend disconnected");
  const nlohmann::json message{{"kind", "command_batch"}, {"seq", seq_++}, {"t", 0}, {"payload", payload}};
  const std::string line = message.dump() + "\n";
  boost::system::error_code ec;
  boost::asio::write(conn_->socket, boost::asio::buffer(line), ec);
  if (!ec && expect_reply) {
    boost::asio::read_until(conn_->socket, conn_->inbound, '\n', ec);
  }
  if (ec) {
    healthy_ = false;
    throw BackendUnavailable("external backend: " + ec.message());
  }
  if (!expect_reply) return {};
  std::istream in(&conn_->inbound);
  std::string reply;
  std::getline(in, reply);
  try {
    return nlohmann::json::parse(reply);
  } catch (const nlohmann::json::exception&) {
    healthy_ = false;
    throw BackendUnavailable("external backend sent malformed reply");
  }
}

void ExternalBackend::move_to(const JointVector& q, bool blocking) {
  check_dimension(config_, q);
  request({{"op", "move_to"}, {"q", q.values}, {"blocking", blocking}}, blocking);
}

void ExternalBackend::send_command(double angle_deg, int joint) {
  request({{"op", "send_command"}, {"joint", joint}, {"angle_deg", angle_deg}}, false);
}

JointVector ExternalBackend::read_state() {
  const auto reply = request({{"op", "read_state"}}, true);
  try {
    JointVector q{config_.id, reply.at("payload").at("q").get<std::vector<double>>()};
    check_dimension(config_, q);
    return q;
  } catch (const nlohmann::json::exception&) {
    healthy_ = false;
    throw BackendUnavailable("external backend reply lacks payload.q");
  }
}

void ExternalBackend::hold() { request({{"op", "hold"}}, false); }

// --- FaultInjectingBackend ------------------------------------------------

void FaultInjectingBackend::check() const {
  if (!alive_) throw BackendUnavailable("backend unreachable (injected fault)");
}

void FaultInjectingBackend::move_to(const JointVector& q, bool blocking) {
  check();
  ++moves_;
  inner_->move_to(q, blocking);
}

void FaultInjectingBackend::send_command(double angle_deg, int joint) {
  check();
  ++commands_;
  inner_->send_command(angle_deg, joint);
}

JointVector FaultInjectingBackend::read_state() {
  check();
  return inner_->read_state();
}

void FaultInjectingBackend::dispatch(const CommandBatch& batch) {
  check();
  for (const auto& j : batch.joints) commands_ += j.size();
  inner_->dispatch(batch);
}

void FaultInjectingBackend::hold() {
  check();
  inner_->hold();
}

}  // namespace uarm
