#include "uarm/recorder.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <limits>
#include <sstream>

#include "uarm/errors.hpp"

namespace uarm {

namespace {

// JSON has no infinity; tau = inf (never emit) is stored as the string "inf".
nlohmann::json number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double read_number(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw nlohmann::json::type_error::create(302, "expected number, got '" + s + "'", &j);
  }
  return j.get<double>();
}

EpisodeHeader header_from_json(const nlohmann::json& j) {
  EpisodeHeader h;
  if (j.at("schema").get<std::string>() != kEpisodeSchema) {
    throw std::invalid_argument("unsupported schema " + j.at("schema").get<std::string>());
  }
  h.episode_id = j.at("episode_id").get<std::string>();
  h.config = parse_config_id(j.at("config_id").get<std::string>());
  const auto& p = j.at("params");
  h.params.deadband_deg = read_number(p.at("deadband_deg"));
  h.params.interp_steps = p.at("interp_steps").get<int>();
  h.params.ema_alpha = p.at("ema_alpha").get<double>();
  h.params.rate_hz = p.at("rate_hz").get<double>();
  h.sim.vmax_deg_s = p.at("vmax_deg_s").get<double>();
  h.sim.dt = p.at("dt").get<double>();
  h.sim.substeps = h.params.interp_steps;
  h.follower_init = JointVector{h.config, j.at("follower_init").get<std::vector<double>>()};
  h.started_at = j.at("started_at").get<std::string>();
  h.task = j.value("task", "");
  return h;
}

EpisodeStep step_from_json(const nlohmann::json& j) {
  EpisodeStep s;
  s.t_ms = j.at("t_ms").get<double>();
  s.leader_angles = j.at("leader_angles").get<std::vector<double>>();
  for (const auto& v : j.at("emitted_targets")) {
    s.emitted_targets.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
  }
  s.follower_q = j.at("follower_q").get<std::vector<double>>();
  return s;
}

}  // namespace

std::string to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::Success: return "success";
    case Outcome::Failure: return "failure";
    case Outcome::Estop: return "estop";
  }
  return "estop";
}

Outcome parse_outcome(std::string_view text) {
  if (text == "success") return Outcome::Success;
  if (text == "failure") return Outcome::Failure;
  if (text == "estop") return Outcome::Estop;
  throw ConfigError("unknown outcome '" + std::string(text) + "'");
}

double Episode::computed_duration_s() const {
  if (steps.size() < 2) return 0.0;
  return (steps.back().t_ms - steps.front().t_ms) / 1000.0;
}

nlohmann::json header_to_json(const EpisodeHeader& h) {
  return {{"type", "header"},
          {"schema", kEpisodeSchema},
          {"episode_id", h.episode_id},
          {"config_id", to_string(h.config)},
          {"params",
           {{"deadband_deg", number(h.params.deadband_deg)},
            {"interp_steps", h.params.interp_steps},
            {"ema_alpha", h.params.ema_alpha},
            {"rate_hz", h.params.rate_hz},
            {"vmax_deg_s", h.sim.vmax_deg_s},
            {"dt", h.sim.dt}}},
          {"follower_init", h.follower_init.values},
          {"started_at", h.started_at},
          {"task", h.task}};
}

nlohmann::json step_to_json(const EpisodeStep& s) {
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& t : s.emitted_targets) targets.push_back(t ? nlohmann::json(*t) : nlohmann::json(nullptr));
  return {{"type", "step"},
          {"t_ms", s.t_ms},
          {"leader_angles", s.leader_angles},
          {"emitted_targets", targets},
          {"follower_q", s.follower_q}};
}

nlohmann::json footer_to_json(const EpisodeFooter& f) {
  return {{"type", "footer"}, {"outcome", to_string(f.outcome)}, {"duration_s", f.duration_s}};
}

void write_episode(const std::filesystem::path& path, const Episode& episode) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << header_to_json(episode.header).dump() << '\n';
  for (const auto& s : episode.steps) out << step_to_json(s).dump() << '\n';
  out << footer_to_json(episode.footer).dump() << '\n';
  if (!out) throw ConfigError("write failed for " + path.string());
}

Episode read_episode(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open episode " + path.string());

  Episode episode;
  bool have_header = false;
  bool have_footer = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (have_footer) throw ParseError(line_no, "content after footer");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, e.what());
    }
    try {
      const auto type = j.at("type").get<std::string>();
      if (!have_header) {
        if (type != "header") throw ParseError(line_no, "first line must be the header");
        episode.header = header_from_json(j);
        have_header = true;
      } else if (type == "step") {
        auto step = step_from_json(j);
        if (!episode.steps.empty() && !(step.t_ms > episode.steps.back().t_ms)) {
          throw ParseError(line_no, "t_ms must be strictly increasing");
        }
        episode.steps.push_back(std::move(step));
      } else if (type == "footer") {
        episode.footer.outcome = parse_outcome(j.at("outcome").get<std::string>());
        episode.footer.duration_s = j.at("duration_s").get<double>();
        have_footer = true;
      } else {
        throw ParseError(line_no, "unknown record type '" + type + "'");
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  if (!have_header) throw ParseError(line_no, "missing header");
  if (!have_footer) {
    episode.footer = {Outcome::Estop, episode.computed_duration_s()};
    episode.warnings.push_back(path.string() + ": no footer (truncated); recovered as outcome estop");
  }
  return episode;
}

std::vector<std::string> validate_episode(const Episode& episode, const ConfigDescriptor& config) {
  std::vector<std::string> problems;
  if (episode.header.config != config.id) problems.push_back("episode config differs from descriptor");
  for (std::size_t i = 0; i < episode.steps.size(); ++i) {
    const auto& s = episode.steps[i];
    if (s.emitted_targets.size() != config.dof) {
      problems.push_back("step " + std::to_string(i) + ": emitted_targets has wrong length");
      continue;
    }
    for (std::size_t j = 0; j < s.emitted_targets.size(); ++j) {
      if (s.emitted_targets[j] && !config.joints[j].contains(*s.emitted_targets[j])) {
        problems.push_back("step " + std::to_string(i) + ": joint " + std::to_string(j + 1) + " target outside limits");
      }
    }
  }
  if (std::abs(episode.footer.duration_s - episode.computed_duration_s()) > 1e-3) {
    problems.push_back("footer duration disagrees with step timestamps");
  }
  return problems;
}

// --- EpisodeWriter ---------------------------------------------------------

EpisodeWriter::EpisodeWriter(const std::filesystem::path& path, EpisodeHeader header)
    : path_(path), header_(std::move(header)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  out_.open(path_, std::ios::trunc);
  if (!out_) throw ConfigError("cannot write episode " + path_.string());
  out_ << header_to_json(header_).dump() << '\n';
  out_.flush();
}

EpisodeWriter::~EpisodeWriter() = default;

void EpisodeWriter::append(const EpisodeStep& step) {
  if (closed_) throw ConfigError("episode already closed");
  if (first_t_ms_ && !(step.t_ms > last_t_ms_)) throw ConfigError("episode t_ms must be strictly increasing");
  if (!first_t_ms_) first_t_ms_ = step.t_ms;
  last_t_ms_ = step.t_ms;
  out_ << step_to_json(step).dump() << '\n';
  ++steps_;
}

void EpisodeWriter::close(Outcome outcome) {
  if (closed_) return;
  const double duration = first_t_ms_ ? (last_t_ms_ - *first_t_ms_) / 1000.0 : 0.0;
  out_ << footer_to_json({outcome, duration}).dump() << '\n';
  out_.flush();
  out_.close();
  closed_ = true;
}

// --- replay ----------------------------------------------------------------

ReplayResult replay(const Episode& episode, SimBackend& backend) {
  const auto& config = backend.config();
  if (config.id != episode.header.config) {
    throw ReplayError("episode recorded on " + to_string(episode.header.config) + ", backend is " +
                      to_string(config.id));
  }
  ReplayResult result;
  if (episode.steps.empty()) return result;

  const int steps = episode.header.params.interp_steps;
  backend.move_to(episode.header.follower_init, true);
  JointVector last_cmd = episode.header.follower_init;

  for (std::size_t i = 0; i < episode.steps.size(); ++i) {
    const auto& step = episode.steps[i];
    if (step.emitted_targets.size() != config.dof || step.follower_q.size() != config.dof) {
      throw ReplayError("step " + std::to_string(i) + " has the wrong joint count");
    }
    CommandBatch batch;
    batch.joints.resize(config.dof);
    for (std::size_t j = 0; j < config.dof; ++j) {
      if (const auto& target = step.emitted_targets[j]) {
        batch.joints[j] = interpolate(last_cmd[j], *target, steps);
        last_cmd[j] = *target;
      }
    }
    backend.dispatch(batch);
    auto state = backend.state();
    for (std::size_t j = 0; j < config.dof; ++j) {
      const double err = std::abs(state.q[j] - step.follower_q[j]);
      if (state.q[j] != step.follower_q[j]) {
        result.matches = false;
        if (!result.first_divergence) result.first_divergence = i;
      }
      result.max_abs_error_deg = std::max(result.max_abs_error_deg, err);
    }
    result.states.push_back(std::move(state));
  }
  return result;
}

std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
  return os.str();
}

}  // namespace uarm
