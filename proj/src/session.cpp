#include "uarm/session.hpp"

#include <algorithm>
#include <thread>

namespace uarm {

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::Idle: return "IDLE";
    case Phase::MovingToInit: return "MOVING_TO_INIT";
    case Phase::Calibrating: return "CALIBRATING";
    case Phase::Streaming: return "STREAMING";
    case Phase::Paused: return "PAUSED";
    case Phase::Estopped: return "ESTOPPED";
    case Phase::Ended: return "ENDED";
  }
  return "UNKNOWN";
}

std::string to_string(Event event) {
  switch (event) {
    case Event::Start: return "start";
    case Event::FollowerAtInit: return "follower_at_init";
    case Event::CalibrationDone: return "calibration_done";
    case Event::Pause: return "pause";
    case Event::Resume: return "resume";
    case Event::Estop: return "estop";
    case Event::End: return "end";
    case Event::Reset: return "reset";
  }
  return "unknown";
}

Phase parse_phase(std::string_view text) {
  for (Phase p : kAllPhases) {
    if (to_string(p) == text) return p;
  }
  throw ConfigError("unknown phase '" + std::string(text) + "'");
}

Event parse_event(std::string_view text) {
  for (Event e : kAllEvents) {
    if (to_string(e) == text) return e;
  }
  throw ConfigError("unknown event '" + std::string(text) + "'");
}

std::optional<Phase> transition(Phase phase, Event event) {
  if (event == Event::Estop) return Phase::Estopped;
  switch (phase) {
    case Phase::Idle:
      if (event == Event::Start) return Phase::MovingToInit;
      break;
    case Phase::MovingToInit:
      if (event == Event::FollowerAtInit) return Phase::Calibrating;
      break;
    case Phase::Calibrating:
      if (event == Event::CalibrationDone) return Phase::Streaming;
      break;
    case Phase::Streaming:
      if (event == Event::Pause) return Phase::Paused;
      if (event == Event::End) return Phase::Ended;
      break;
    case Phase::Paused:
      if (event == Event::Resume) return Phase::Streaming;
      break;
    case Phase::Estopped:
      if (event == Event::Reset) return Phase::Idle;
      break;
    case Phase::Ended:
      break;
  }
  return std::nullopt;
}

SessionState handle_event(const SessionState& state, Event event) {
  const auto next = transition(state.phase, event);
  if (!next) throw TransitionError(state.phase, event);
  SessionState out = state;
  out.phase = *next;
  if (event == Event::Start) out.tick_count = 0;
  if (event == Event::Reset) out.episode_id.reset();
  return out;
}

// --- leader sources --------------------------------------------------------

BusLeaderSource::BusLeaderSource(std::shared_ptr<ByteSource> bytes, ConfigDescriptor config, bool cycle_aligned)
    : bytes_(std::move(bytes)), config_(std::move(config)), cycle_aligned_(cycle_aligned) {}

std::optional<EncoderFrame> BusLeaderSource::poll(std::int64_t now_ns) {
  const Bytes bytes = bytes_->read();
  auto frames = decoder_.feed(bytes, now_ns);
  if (cycle_aligned_) {
    auto tail = decoder_.flush(now_ns);
    frames.insert(frames.end(), tail.begin(), tail.end());
    const std::uint64_t cycle = cycle_++;
    EncoderFrame reading = assemble_reading(frames, config_);
    reading.sequence = cycle;
    return reading;
  }
  pending_.insert(pending_.end(), frames.begin(), frames.end());
  if (pending_.empty()) return std::nullopt;
  try {
    EncoderFrame reading = assemble_reading(pending_, config_);
    reading.sequence = cycle_++;
    pending_.clear();
    return reading;
  } catch (const IncompleteReading&) {
    // Keep waiting, but never hold more than a few cycles' worth of frames.
    if (pending_.size() > 4 * config_.dof) pending_.erase(pending_.begin(), pending_.end() - static_cast<std::ptrdiff_t>(config_.dof));
    return std::nullopt;
  }
}

void VirtualLeaderSource::push(std::vector<double> angles_deg, std::uint64_t sequence, std::int64_t timestamp_ns) {
  if (angles_deg.size() != config_.dof) {
    throw DimensionError("leader_angles has " + std::to_string(angles_deg.size()) + " values, expected " +
                         std::to_string(config_.dof));
  }
  for (double a : angles_deg) {
    if (!std::isfinite(a)) throw DimensionError("leader_angles must be finite");
  }
  EncoderFrame frame;
  frame.config = config_.id;
  frame.angles_deg = std::move(angles_deg);
  frame.timestamp_ns = timestamp_ns;
  frame.sequence = sequence;
  slot_.put(std::move(frame));
}

std::optional<EncoderFrame> VirtualLeaderSource::poll(std::int64_t /*now_ns*/) {
  if (auto fresh = slot_.take()) last_ = std::move(fresh);
  return last_;
}

// --- Session ---------------------------------------------------------------

Session::Session(SessionOptions options, std::shared_ptr<LeaderSource> leader, std::shared_ptr<FollowerBackend> backend)
    : options_(std::move(options)), leader_(std::move(leader)), backend_(std::move(backend)) {
  options_.params.validate();
  if (!options_.follower_init) options_.follower_init = zero_vector(options_.config);
  check_dimension(options_.config, *options_.follower_init);
  state_.config = options_.config.id;
  state_.params = options_.params;
  auto stamp = utc_now_iso8601();
  stamp.erase(std::remove_if(stamp.begin(), stamp.end(), [](char c) { return c == '-' || c == ':' || c == '.'; }),
              stamp.end());
  session_stamp_ = stamp;
}

Session::~Session() {
  if (writer_ && !writer_->closed()) writer_->close(Outcome::Estop);
}

void Session::set_params(const MappingParams& params) {
  if (state_.phase != Phase::Idle) throw ConfigError("parameters can only change while IDLE");
  params.validate();
  options_.params = params;
  state_.params = params;
}

PhaseChange Session::apply(Event event) {
  const SessionState next = handle_event(state_, event);
  PhaseChange change{state_.phase, next.phase, event};
  state_ = next;
  return change;
}

std::vector<PhaseChange> Session::handle(Event event, std::optional<Outcome> outcome) {
  std::vector<PhaseChange> changes;
  if (event == Event::Estop) {
    estop(changes, "operator e-stop", nullptr);
    if (changes.empty()) changes.push_back(apply(Event::Estop));  // already latched
    return changes;
  }
  changes.push_back(apply(event));
  switch (event) {
    case Event::End:
      close_episode(outcome.value_or(Outcome::Success));
      calibration_.reset();
      break;
    case Event::Reset:
      calibration_.reset();
      break;
    default:
      break;
  }
  return changes;
}

void Session::open_episode(std::int64_t now_ns) {
  stream_start_ns_ = now_ns;
  ++episode_counter_;
  const std::string id = options_.episode_id.value_or(session_stamp_ + "-" + std::to_string(episode_counter_));
  state_.episode_id = id;
  if (!options_.record) return;
  const auto path = options_.episode_path.value_or(options_.data_dir / options_.task / (id + ".jsonl"));
  EpisodeHeader header;
  header.episode_id = id;
  header.config = options_.config.id;
  header.params = options_.params;
  header.sim = SimParams::for_mapping(options_.params, options_.vmax_deg_s);
  header.follower_init = *options_.follower_init;
  header.started_at = options_.stamp_wall_clock ? utc_now_iso8601() : std::string();
  header.task = options_.task;
  writer_ = std::make_unique<EpisodeWriter>(path, std::move(header));
  last_episode_path_ = path;
}

void Session::close_episode(Outcome outcome) {
  if (!writer_ || writer_->closed()) return;
  writer_->close(outcome);
  ++counters_.episodes_recorded;
}

void Session::estop(std::vector<PhaseChange>& changes, const std::string& reason, TickReport* report) {
  if (state_.phase != Phase::Estopped) changes.push_back(apply(Event::Estop));
  try {
    backend_->hold();
  } catch (const Error&) {
    // Backend already gone; the latch still holds.
  }
  close_episode(Outcome::Estop);
  calibration_.reset();
  if (report) report->error = reason;
}

void Session::tick(std::int64_t now_ns, TickReport& report) {
  std::optional<EncoderFrame> reading;
  try {
    reading = leader_->poll(now_ns);
  } catch (const IncompleteReading& e) {
    report.error = e.what();
  }
  if (!reading) {
    ++counters_.skipped_ticks;
    report.skipped = true;
    return;
  }

  CommandBatch batch = step(*calibration_, *reading);
  JointVector q;
  try {
    backend_->dispatch(batch);
    q = backend_->read_state();
  } catch (const BackendUnavailable& e) {
    estop(report.changes, e.what(), &report);
    return;
  }
  for (const auto& j : batch.joints) counters_.commands_sent += j.size();
  last_leader_sequence_ = reading->sequence;

  if (writer_ && !writer_->closed()) {
    EpisodeStep record;
    record.t_ms = static_cast<double>(now_ns - stream_start_ns_) / 1e6;
    record.leader_angles = reading->angles_deg;
    record.emitted_targets = batch.targets();
    record.follower_q = q.values;
    writer_->append(record);
  }
  ++state_.tick_count;
  report.reading = std::move(reading);
  report.batch = std::move(batch);
  report.follower_q = std::move(q);
}

TickReport Session::update(std::int64_t now_ns) {
  TickReport report;
  try {
    switch (state_.phase) {
      case Phase::MovingToInit:
        backend_->move_to(*options_.follower_init, true);
        report.changes.push_back(apply(Event::FollowerAtInit));
        break;
      case Phase::Calibrating: {
        std::optional<EncoderFrame> reading;
        try {
          reading = leader_->poll(now_ns);
        } catch (const IncompleteReading& e) {
          report.error = e.what();
        }
        if (!reading) {
          ++counters_.skipped_ticks;
          report.skipped = true;
          break;
        }
        calibration_ = calibrate(options_.config, *reading, *options_.follower_init, options_.params);
        last_leader_sequence_ = reading->sequence;
        open_episode(now_ns);
        report.changes.push_back(apply(Event::CalibrationDone));
        report.reading = std::move(reading);
        break;
      }
      case Phase::Streaming:
        tick(now_ns, report);
        break;
      default:
        break;
    }
    if (!report.follower_q && state_.phase != Phase::Estopped) report.follower_q = backend_->read_state();
  } catch (const BackendUnavailable& e) {
    estop(report.changes, e.what(), &report);
  } catch (const CalibrationError& e) {
    estop(report.changes, e.what(), &report);
  }
  if (!report.follower_q) {
    try {
      report.follower_q = backend_->read_state();
    } catch (const Error&) {
    }
  }
  if (auto* sim = dynamic_cast<SimBackend*>(backend_.get())) report.follower_target = sim->state().q_target;
  report.phase = state_.phase;
  report.tick = state_.tick_count;
  return report;
}

// --- RatePacer -------------------------------------------------------------

RatePacer::RatePacer(double rate_hz)
    : period_(std::chrono::nanoseconds(static_cast<std::int64_t>(1e9 / rate_hz))),
      next_(std::chrono::steady_clock::now() + period_) {}

void RatePacer::wait() {
  const auto now = std::chrono::steady_clock::now();
  if (now > next_ + period_) {
    missed_ += static_cast<std::uint64_t>((now - next_) / period_);
    next_ = now + period_;
    return;
  }
  std::this_thread::sleep_until(next_);
  next_ += period_;
}

// --- scripted headless run -------------------------------------------------

ScriptedRunResult run_scripted_session(const ScriptedRunOptions& options) {
  const auto& config = options.session.config;
  if (options.script.dof() != config.dof) {
    throw DimensionError("script drives " + std::to_string(options.script.dof()) + " joints, " + to_string(config.id) +
                         " has " + std::to_string(config.dof));
  }
  MockBus bus(options.script, options.session.params.rate_hz, options.faults);
  auto leader = std::make_shared<BusLeaderSource>(std::make_shared<MockByteSource>(bus), config);
  auto backend = std::make_shared<SimBackend>(config, zero_vector(config),
                                              SimParams::for_mapping(options.session.params, options.session.vmax_deg_s));
  Session session(options.session, leader, backend);
  session.handle(Event::Start);

  while (!bus.finished()) {
    const auto phase = session.update(bus.next_timestamp_ns()).phase;
    if (phase == Phase::Estopped || phase == Phase::Ended) break;
  }
  if (session.state().phase == Phase::Streaming) session.handle(Event::End, options.outcome);

  ScriptedRunResult result;
  result.episode_path = session.last_episode_path().value_or(std::filesystem::path{});
  result.ticks = session.state().tick_count;
  result.skipped_ticks = session.counters().skipped_ticks;
  result.final_phase = session.state().phase;
  result.decoder = leader->decoder().stats();
  result.faults = bus.faults();
  result.final_state = backend->state();
  return result;
}

}  // namespace uarm
