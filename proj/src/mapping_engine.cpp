#include "uarm/mapping_engine.hpp"

#include <cmath>

#include "uarm/errors.hpp"

namespace uarm {

namespace {

std::vector<double> displacement(const CalibrationState& state, const EncoderFrame& reading) {
  if (reading.config != state.config().id) {
    throw DimensionError("reading is for " + to_string(reading.config) + ", calibrated for " +
                         to_string(state.config().id));
  }
  if (reading.angles_deg.size() != state.config().dof) {
    throw DimensionError("reading has " + std::to_string(reading.angles_deg.size()) + " joints, expected " +
                         std::to_string(state.config().dof));
  }
  std::vector<double> d(reading.angles_deg.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = reading.angles_deg[i] - state.leader_init()[i];
  return d;
}

JointMapping map_displacement(const CalibrationState& state, int leader_joint, double delta) {
  const auto& config = state.config();
  const JointRoute route = config.route(leader_joint);
  const auto f = static_cast<std::size_t>(route.follower - 1);
  const double target = config.joints[f].clamp(route.sign * delta + state.follower_init()[f]);
  const double change = target - state.last_cmd()[f];
  // Measured against the last emitted target so slow drifts still accumulate.
  const bool emit = change != 0.0 && !(std::abs(change) < state.params().deadband_deg);
  return {route.follower, target, emit};
}

}  // namespace

void MappingParams::validate() const {
  if (!(deadband_deg >= 0.0)) throw ConfigError("deadband tau must be >= 0");
  if (interp_steps < 1) throw ConfigError("interpolation steps N must be >= 1");
  if (!(ema_alpha > 0.0 && ema_alpha <= 1.0)) throw ConfigError("ema alpha must be in (0, 1]");
  if (!(rate_hz > 0.0) || !std::isfinite(rate_hz)) throw ConfigError("control rate must be > 0");
}

const std::vector<double>& EmaFilter::update(const std::vector<double>& x) {
  if (state_.size() != x.size()) state_.assign(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) state_[i] = alpha_ * x[i] + (1.0 - alpha_) * state_[i];
  return state_;
}

CalibrationState::CalibrationState(ConfigDescriptor config, JointVector leader_init, JointVector follower_init,
                                   MappingParams params)
    : config_(std::move(config)),
      leader_init_(std::move(leader_init)),
      follower_init_(std::move(follower_init)),
      params_(params),
      last_cmd_(follower_init_),
      filter_(std::make_unique<EmaFilter>(params.ema_alpha)) {
  params_.validate();
  check_dimension(config_, leader_init_);
  check_dimension(config_, follower_init_);
  filter_->reset(std::vector<double>(config_.dof, 0.0));
}

CalibrationState::CalibrationState(const CalibrationState& other)
    : config_(other.config_),
      leader_init_(other.leader_init_),
      follower_init_(other.follower_init_),
      params_(other.params_),
      last_cmd_(other.last_cmd_),
      filter_(other.filter_->clone()) {}

CalibrationState& CalibrationState::operator=(const CalibrationState& other) {
  if (this != &other) *this = CalibrationState(other);
  return *this;
}

void CalibrationState::set_filter(std::unique_ptr<JointFilter> filter) {
  filter_ = std::move(filter);
  filter_->reset(std::vector<double>(config_.dof, 0.0));
}

bool CommandBatch::empty() const {
  for (const auto& j : joints) {
    if (!j.empty()) return false;
  }
  return true;
}

std::vector<std::optional<double>> CommandBatch::targets() const {
  std::vector<std::optional<double>> out(joints.size());
  for (std::size_t i = 0; i < joints.size(); ++i) {
    if (!joints[i].empty()) out[i] = joints[i].back();
  }
  return out;
}

CalibrationState calibrate(const ConfigDescriptor& config, const EncoderFrame& leader_now,
                           const JointVector& follower_init, const MappingParams& params) {
  if (leader_now.config != config.id || follower_init.config != config.id) {
    throw DimensionError("calibration inputs belong to different configs");
  }
  JointVector leader{config.id, leader_now.angles_deg};
  check_dimension(config, leader);
  check_dimension(config, follower_init);
  for (std::size_t i = 0; i < config.dof; ++i) {
    if (!std::isfinite(follower_init[i]) || !config.joints[i].contains(follower_init[i])) {
      throw CalibrationError("follower initial joint " + std::to_string(i + 1) + " = " +
                             std::to_string(follower_init[i]) + " deg is outside [" +
                             std::to_string(config.joints[i].range_min) + ", " +
                             std::to_string(config.joints[i].range_max) + "]");
    }
  }
  return CalibrationState(config, std::move(leader), follower_init, params);
}

JointVector smooth(CalibrationState& state, const EncoderFrame& reading) {
  const auto& d = state.filter().update(displacement(state, reading));
  JointVector out{state.config().id, std::vector<double>(d.size())};
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = state.leader_init()[i] + d[i];
  return out;
}

JointMapping map_joint(const CalibrationState& state, int leader_joint, double smoothed_leader_deg) {
  if (leader_joint < 1 || leader_joint > static_cast<int>(state.config().dof)) {
    throw DimensionError("joint index " + std::to_string(leader_joint) + " out of range");
  }
  const auto j = static_cast<std::size_t>(leader_joint - 1);
  return map_displacement(state, leader_joint, smoothed_leader_deg - state.leader_init()[j]);
}

std::vector<double> interpolate(double from, double to, int steps) {
  if (steps < 1) throw ConfigError("interpolation steps must be >= 1");
  std::vector<double> out(static_cast<std::size_t>(steps));
  const double span = to - from;
  for (int i = 1; i < steps; ++i) out[static_cast<std::size_t>(i - 1)] = from + i * span / steps;
  out.back() = to;
  return out;
}

CommandBatch step(CalibrationState& state, const EncoderFrame& reading) {
  const auto& smoothed = state.filter().update(displacement(state, reading));
  const int dof = static_cast<int>(state.config().dof);

  CommandBatch batch;
  batch.timestamp_ns = reading.timestamp_ns;
  batch.joints.resize(state.config().dof);
  for (int j = 1; j <= dof; ++j) {
    const JointMapping m = map_displacement(state, j, smoothed[static_cast<std::size_t>(j - 1)]);
    if (!m.emit) continue;
    const auto f = static_cast<std::size_t>(m.follower_joint - 1);
    batch.joints[f] = interpolate(state.last_cmd()[f], m.target, state.params().interp_steps);
    state.last_cmd()[f] = m.target;
  }
  return batch;
}

}  // namespace uarm
