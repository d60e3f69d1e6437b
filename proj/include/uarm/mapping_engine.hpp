#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "uarm/encoder_bus.hpp"
#include "uarm/kinematic_config.hpp"

namespace uarm {

struct MappingParams {
  double deadband_deg = 0.5;  // tau
  int interp_steps = 5;       // N
  double ema_alpha = 0.3;
  double rate_hz = 50.0;

  // Throws ConfigError on tau < 0, N < 1, alpha outside (0, 1] or rate <= 0.
  void validate() const;
  friend bool operator==(const MappingParams&, const MappingParams&) = default;
};

// Per-joint smoothing of the leader signal. Filters operate on the
// displacement from the calibration pose, so a constant offset applied to
// both the reading and the calibration pose cancels before filtering.
class JointFilter {
 public:
  virtual ~JointFilter() = default;
  virtual void reset(const std::vector<double>& displacement) = 0;
  virtual const std::vector<double>& update(const std::vector<double>& displacement) = 0;
  virtual const std::vector<double>& value() const = 0;
  virtual std::unique_ptr<JointFilter> clone() const = 0;
};

class EmaFilter final : public JointFilter {
 public:
  explicit EmaFilter(double alpha) : alpha_(alpha) {}
  void reset(const std::vector<double>& displacement) override { state_ = displacement; }
  const std::vector<double>& update(const std::vector<double>& displacement) override;
  const std::vector<double>& value() const override { return state_; }
  std::unique_ptr<JointFilter> clone() const override { return std::make_unique<EmaFilter>(*this); }

 private:
  double alpha_;
  std::vector<double> state_;
};

class CalibrationState {
 public:
  CalibrationState(ConfigDescriptor config, JointVector leader_init, JointVector follower_init,
                   MappingParams params);
  CalibrationState(const CalibrationState& other);
  CalibrationState& operator=(const CalibrationState& other);
  CalibrationState(CalibrationState&&) noexcept = default;
  CalibrationState& operator=(CalibrationState&&) noexcept = default;

  const ConfigDescriptor& config() const { return config_; }
  const JointVector& leader_init() const { return leader_init_; }
  const JointVector& follower_init() const { return follower_init_; }
  const MappingParams& params() const { return params_; }
  const JointVector& last_cmd() const { return last_cmd_; }
  JointVector& last_cmd() { return last_cmd_; }
  JointFilter& filter() { return *filter_; }
  const JointFilter& filter() const { return *filter_; }

  // Swap in a different smoothing filter; it is reset to the calibration pose.
  void set_filter(std::unique_ptr<JointFilter> filter);

 private:
  ConfigDescriptor config_;
  JointVector leader_init_;
  JointVector follower_init_;
  MappingParams params_;
  JointVector last_cmd_;
  std::unique_ptr<JointFilter> filter_;
};

// Interpolated follower commands for one control tick, indexed by follower
// joint (0-based). Each list is empty or holds exactly N values.
struct CommandBatch {
  std::vector<std::vector<double>> joints;
  std::int64_t timestamp_ns = 0;

  bool empty() const;
  // Final element of each non-empty list; nullopt for idle joints.
  std::vector<std::optional<double>> targets() const;
};

struct JointMapping {
  int follower_joint = 0;  // 1-based
  double target = 0.0;     // clamped follower target, degrees
  bool emit = false;
};

CalibrationState calibrate(const ConfigDescriptor& config, const EncoderFrame& leader_now,
                           const JointVector& follower_init, const MappingParams& params);

// Feeds one reading through the filter; returns the smoothed leader angles.
JointVector smooth(CalibrationState& state, const EncoderFrame& reading);

// Maps one smoothed leader joint (1-based index) onto its follower joint.
JointMapping map_joint(const CalibrationState& state, int leader_joint, double smoothed_leader_deg);

// N evenly spaced commands from `from` (exclusive) to `to` (inclusive);
// the last element is `to` exactly.
std::vector<double> interpolate(double from, double to, int steps);

CommandBatch step(CalibrationState& state, const EncoderFrame& reading);

}  // namespace uarm
