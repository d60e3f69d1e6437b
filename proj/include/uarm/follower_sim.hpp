#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "uarm/kinematic_config.hpp"
#include "uarm/mapping_engine.hpp"

namespace uarm {

inline constexpr double kDefaultVmaxDegPerSec = 90.0;
inline constexpr double kArrivalToleranceDeg = 1e-9;

struct FollowerState {
  JointVector q;
  JointVector q_target;
  std::vector<double> vmax;  // deg/s per joint
  double sim_time = 0.0;     // seconds

  friend bool operator==(const FollowerState&, const FollowerState&) = default;
};

FollowerState make_follower_state(const ConfigDescriptor& config, const JointVector& q,
                                  double vmax_deg_s = kDefaultVmaxDegPerSec);

// Moves each joint toward q_target by at most vmax*dt. A joint within
// vmax*dt (plus 1e-9 deg) of its target lands on it exactly.
FollowerState advance(const FollowerState& state, double dt);

// Advances until every joint sits on q_init. The returned trajectory starts
// with `state` (retargeted to q_init) and ends on q_init.
std::vector<FollowerState> move_to_initial(const ConfigDescriptor& config, const FollowerState& state,
                                           const JointVector& q_init, double dt);

std::vector<EePose> ee_trace(const std::vector<FollowerState>& states, const ConfigDescriptor& config);

// Applies one interpolated batch to a follower: sub-command i of every
// emitting joint becomes the target for integration sub-step i.
// At least `substeps` integration steps run even when the batch is empty.
FollowerState apply_batch(const ConfigDescriptor& config, FollowerState state, const CommandBatch& batch,
                          double dt, int substeps);

// Follower robot abstraction. Joint indices are 1-based.
class FollowerBackend {
 public:
  virtual ~FollowerBackend() = default;

  virtual void move_to(const JointVector& q, bool blocking) = 0;
  virtual void send_command(double angle_deg, int joint) = 0;
  virtual JointVector read_state() = 0;

  // Delivers one control tick of interpolated commands.
  virtual void dispatch(const CommandBatch& batch);
  // Stop in place (e-stop latch).
  virtual void hold();
  virtual bool healthy() const { return true; }
  virtual std::string name() const = 0;
};

struct SimParams {
  double vmax_deg_s = kDefaultVmaxDegPerSec;
  double dt = 1.0 / 250.0;
  int substeps = 5;  // integration steps per control tick (N)

  // dt = 1 / (N * rate), so one control tick spans N sub-steps.
  static SimParams for_mapping(const MappingParams& mapping, double vmax_deg_s = kDefaultVmaxDegPerSec) {
    return {vmax_deg_s, 1.0 / (mapping.interp_steps * mapping.rate_hz), mapping.interp_steps};
  }
  friend bool operator==(const SimParams&, const SimParams&) = default;
};

// Kinematic simulator backend. Time advances in lock-step with dispatched
// sub-commands so a recorded run can be replayed bit-exactly.
class SimBackend : public FollowerBackend {
 public:
  SimBackend(ConfigDescriptor config, const JointVector& q0, SimParams params);

  void move_to(const JointVector& q, bool blocking) override;
  void send_command(double angle_deg, int joint) override;
  JointVector read_state() override;
  void dispatch(const CommandBatch& batch) override;
  void hold() override;
  std::string name() const override { return "sim"; }

  FollowerState state() const;
  const SimParams& params() const { return params_; }
  const ConfigDescriptor& config() const { return config_; }

 private:
  ConfigDescriptor config_;
  SimParams params_;
  mutable std::mutex mutex_;
  FollowerState state_;
};

// Echo backend: the reported state is whatever was last commanded.
class LoopbackBackend : public FollowerBackend {
 public:
  explicit LoopbackBackend(const ConfigDescriptor& config);

  void move_to(const JointVector& q, bool blocking) override;
  void send_command(double angle_deg, int joint) override;
  JointVector read_state() override;
  std::string name() const override { return "loopback"; }

  std::uint64_t commands_received() const { return commands_; }

 private:
  ConfigDescriptor config_;
  mutable std::mutex mutex_;
  JointVector q_;
  std::uint64_t commands_ = 0;
};

// Adapter stub for a real robot: forwards operations as newline-delimited
// JSON to a local TCP endpoint (see docs/protocol.md, "External backend").
// Any socket failure marks the backend unhealthy and raises BackendUnavailable.
class ExternalBackend : public FollowerBackend {
 public:
  ExternalBackend(const ConfigDescriptor& config, std::string host, std::uint16_t port);
  ~ExternalBackend() override;
  ExternalBackend(const ExternalBackend&) = delete;
  ExternalBackend& operator=(const ExternalBackend&) = delete;

  void move_to(const JointVector& q, bool blocking) override;
  void send_command(double angle_deg, int joint) override;
  JointVector read_state() override;
  void hold() override;
  bool healthy() const override { return healthy_; }
  std::string name() const override { return "external"; }

 private:
  struct Connection;
  nlohmann::json request(const nlohmann::json& message, bool expect_reply);

  ConfigDescriptor config_;
  std::unique_ptr<Connection> conn_;
  std::atomic<bool> healthy_{false};
  std::uint64_t seq_ = 0;
};

// Wraps another backend and can be "unplugged" to inject a backend loss.
class FaultInjectingBackend : public FollowerBackend {
 public:
  explicit FaultInjectingBackend(std::shared_ptr<FollowerBackend> inner) : inner_(std::move(inner)) {}

  void kill() { alive_ = false; }
  void revive() { alive_ = true; }

  void move_to(const JointVector& q, bool blocking) override;
  void send_command(double angle_deg, int joint) override;
  JointVector read_state() override;
  void dispatch(const CommandBatch& batch) override;
  void hold() override;
  bool healthy() const override { return alive_ && inner_->healthy(); }
  std::string name() const override { return inner_->name(); }

  std::uint64_t commands_seen() const { return commands_; }
  std::uint64_t moves_seen() const { return moves_; }

 private:
  void check() const;

  std::shared_ptr<FollowerBackend> inner_;
  std::atomic<bool> alive_{true};
  std::atomic<std::uint64_t> commands_{0};
  std::atomic<std::uint64_t> moves_{0};
};

}  // namespace uarm
