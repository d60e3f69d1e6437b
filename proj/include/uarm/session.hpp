#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "uarm/encoder_bus.hpp"
#include "uarm/errors.hpp"
#include "uarm/follower_sim.hpp"
#include "uarm/mapping_engine.hpp"
#include "uarm/recorder.hpp"

namespace uarm {

enum class Phase { Idle, MovingToInit, Calibrating, Streaming, Paused, Estopped, Ended };
enum class Event { Start, FollowerAtInit, CalibrationDone, Pause, Resume, Estop, End, Reset };

inline constexpr std::array<Phase, 7> kAllPhases{Phase::Idle,     Phase::MovingToInit, Phase::Calibrating,
                                                 Phase::Streaming, Phase::Paused,      Phase::Estopped,
                                                 Phase::Ended};
inline constexpr std::array<Event, 8> kAllEvents{Event::Start, Event::FollowerAtInit, Event::CalibrationDone,
                                                 Event::Pause, Event::Resume,         Event::Estop,
                                                 Event::End,   Event::Reset};

std::string to_string(Phase phase);
std::string to_string(Event event);
Phase parse_phase(std::string_view text);
Event parse_event(std::string_view text);

class TransitionError : public Error {
 public:
  TransitionError(Phase phase, Event event)
      : Error("TransitionError", "event '" + to_string(event) + "' is not allowed in phase '" + to_string(phase) + "'"),
        phase_(phase),
        event_(event) {}
  Phase phase() const { return phase_; }
  Event event() const { return event_; }

 private:
  Phase phase_;
  Event event_;
};

// The transition table; nullopt for an illegal (phase, event) pair.
std::optional<Phase> transition(Phase phase, Event event);

struct SessionState {
  Phase phase = Phase::Idle;
  ConfigId config = ConfigId::Config1;
  std::optional<std::string> episode_id;
  std::uint64_t tick_count = 0;
  MappingParams params;
};

// Throws TransitionError and leaves `state` untouched for illegal pairs.
SessionState handle_event(const SessionState& state, Event event);

// Where leader readings come from for each control tick.
class LeaderSource {
 public:
  virtual ~LeaderSource() = default;
  // Latest reading, or nullopt when none is available. May throw IncompleteReading.
  virtual std::optional<EncoderFrame> poll(std::int64_t now_ns) = 0;
};

// Decodes leader readings from a byte source. With `cycle_aligned` every
// read() returns exactly one poll cycle (mock bus) and the decoder is flushed
// after it; otherwise frames accumulate until every joint has reported.
class BusLeaderSource : public LeaderSource {
 public:
  BusLeaderSource(std::shared_ptr<ByteSource> bytes, ConfigDescriptor config, bool cycle_aligned = true);
  std::optional<EncoderFrame> poll(std::int64_t now_ns) override;
  const FrameDecoder& decoder() const { return decoder_; }

 private:
  std::shared_ptr<ByteSource> bytes_;
  ConfigDescriptor config_;
  bool cycle_aligned_;
  FrameDecoder decoder_;
  std::vector<RawFrame> pending_;
  std::uint64_t cycle_ = 0;
};

// Leader angles pushed from the network (console sliders or a test harness).
// Latest value wins; a tick without a new message reuses the last one.
class VirtualLeaderSource : public LeaderSource {
 public:
  explicit VirtualLeaderSource(ConfigDescriptor config) : config_(std::move(config)) {}
  // Angles are neutral-relative joint degrees. Throws DimensionError on wrong length.
  void push(std::vector<double> angles_deg, std::uint64_t sequence, std::int64_t timestamp_ns);
  std::optional<EncoderFrame> poll(std::int64_t now_ns) override;

 private:
  ConfigDescriptor config_;
  LatestValue<EncoderFrame> slot_;
  std::optional<EncoderFrame> last_;
};

struct SessionOptions {
  ConfigDescriptor config = load_config(ConfigId::Config1);
  MappingParams params;
  double vmax_deg_s = kDefaultVmaxDegPerSec;
  std::optional<JointVector> follower_init;  // zero pose when unset
  bool record = true;
  std::filesystem::path data_dir = "data/episodes";
  std::string task = "default";
  std::optional<std::filesystem::path> episode_path;  // overrides data_dir/task/<id>.jsonl
  std::optional<std::string> episode_id;              // fixed id for a single-episode run
  // When false the header's started_at is left empty.
  bool stamp_wall_clock = true;
};

struct PhaseChange {
  Phase from = Phase::Idle;
  Phase to = Phase::Idle;
  Event event = Event::Start;
};

struct TickReport {
  Phase phase = Phase::Idle;
  std::uint64_t tick = 0;
  std::optional<JointVector> follower_q;
  std::optional<JointVector> follower_target;
  std::optional<EncoderFrame> reading;
  std::optional<CommandBatch> batch;
  std::vector<PhaseChange> changes;
  bool skipped = false;
  std::optional<std::string> error;
};

// One teleoperation session: owns the phase machine, the mapping state and
// the live episode. Not thread-safe; the control loop is its only caller.
class Session {
 public:
  struct Counters {
    std::uint64_t skipped_ticks = 0;
    std::uint64_t commands_sent = 0;
    std::uint64_t episodes_recorded = 0;
  };

  Session(SessionOptions options, std::shared_ptr<LeaderSource> leader, std::shared_ptr<FollowerBackend> backend);
  ~Session();

  // Applies an operator event. Throws TransitionError for illegal pairs.
  // `outcome` labels the episode on End (default success).
  std::vector<PhaseChange> handle(Event event, std::optional<Outcome> outcome = std::nullopt);

  // Per-session parameter override; only legal while idle.
  void set_params(const MappingParams& params);

  // One control-loop iteration at time `now_ns` (monotonic).
  TickReport update(std::int64_t now_ns);

  const SessionState& state() const { return state_; }
  const SessionOptions& options() const { return options_; }
  const Counters& counters() const { return counters_; }
  const std::optional<CalibrationState>& calibration() const { return calibration_; }
  std::optional<std::filesystem::path> last_episode_path() const { return last_episode_path_; }
  std::uint64_t last_leader_sequence() const { return last_leader_sequence_; }
  FollowerBackend& backend() { return *backend_; }

 private:
  PhaseChange apply(Event event);
  void open_episode(std::int64_t now_ns);
  void close_episode(Outcome outcome);
  void estop(std::vector<PhaseChange>& changes, const std::string& reason, TickReport* report);
  void tick(std::int64_t now_ns, TickReport& report);

  SessionOptions options_;
  std::shared_ptr<LeaderSource> leader_;
  std::shared_ptr<FollowerBackend> backend_;
  SessionState state_;
  std::optional<CalibrationState> calibration_;
  std::unique_ptr<EpisodeWriter> writer_;
  std::optional<std::filesystem::path> last_episode_path_;
  std::int64_t stream_start_ns_ = 0;
  std::uint64_t episode_counter_ = 0;
  std::string session_stamp_;
  std::uint64_t last_leader_sequence_ = 0;
  Counters counters_;
};

// Sleeps to a fixed-rate schedule. A tick that starts more than one period
// late counts as missed and the schedule restarts from now.
class RatePacer {
 public:
  explicit RatePacer(double rate_hz);
  void wait();
  std::uint64_t missed() const { return missed_; }
  std::chrono::nanoseconds period() const { return period_; }

 private:
  std::chrono::nanoseconds period_;
  std::chrono::steady_clock::time_point next_;
  std::uint64_t missed_ = 0;
};

// Headless session driven by a scripted mock bus on a simulated clock.
struct ScriptedRunOptions {
  SessionOptions session;
  BusScript script;
  BusFaults faults;
  Outcome outcome = Outcome::Success;
};

struct ScriptedRunResult {
  std::filesystem::path episode_path;
  std::uint64_t ticks = 0;
  std::uint64_t skipped_ticks = 0;
  Phase final_phase = Phase::Idle;
  FrameDecoder::Stats decoder;
  MockBus::FaultLog faults;
  FollowerState final_state;
};

ScriptedRunResult run_scripted_session(const ScriptedRunOptions& options);

}  // namespace uarm
