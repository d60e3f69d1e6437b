#include "uarm/cli.hpp"

#include <array>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "uarm/errors.hpp"
#include "uarm/metrics.hpp"
#include "uarm/protocol.hpp"
#include "uarm/recorder.hpp"
#include "uarm/service.hpp"
#include "uarm/session.hpp"

namespace uarm {

using nlohmann::json;
namespace fs = std::filesystem;

// --- configuration layers --------------------------------------------------------

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

CliLayer layer_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config file must contain a JSON object");
  CliLayer layer;
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "config_id") layer.config_id = value.get<std::string>();
      else if (key == "source") layer.source = value.get<std::string>();
      else if (key == "backend") layer.backend = value.get<std::string>();
      else if (key == "bind") layer.bind = value.get<std::string>();
      else if (key == "tau") layer.tau = value.is_string() ? std::stod(value.get<std::string>()) : value.get<double>();
      else if (key == "N") layer.n = value.get<int>();
      else if (key == "alpha") layer.alpha = value.get<double>();
      else if (key == "rate") layer.rate = value.get<double>();
      else if (key == "vmax") layer.vmax = value.get<double>();
      else if (key == "data_dir") layer.data_dir = value.get<std::string>();
      else if (key == "descriptor_file") layer.descriptor_file = value.get<std::string>();
      else throw ConfigError("unknown config key '" + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    } catch (const std::invalid_argument&) {
      throw ConfigError("config key '" + key + "' is not a number");
    }
  }
  return layer;
}

CliLayer layer_from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return layer_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
}

namespace {

double env_number(const std::string& name, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(name + "='" + text + "' is not a number");
  }
}

}  // namespace

CliLayer layer_from_env(const EnvLookup& env) {
  CliLayer layer;
  layer.config_id = env("UARM_CONFIG_ID");
  layer.source = env("UARM_SOURCE");
  layer.backend = env("UARM_BACKEND");
  layer.bind = env("UARM_BIND");
  layer.data_dir = env("UARM_DATA_DIR");
  layer.descriptor_file = env("UARM_DESCRIPTOR_FILE");
  if (auto v = env("UARM_TAU")) layer.tau = env_number("UARM_TAU", *v);
  if (auto v = env("UARM_N")) {
    const double n = env_number("UARM_N", *v);
    if (n != static_cast<int>(n)) throw ConfigError("UARM_N must be an integer");
    layer.n = static_cast<int>(n);
  }
  if (auto v = env("UARM_ALPHA")) layer.alpha = env_number("UARM_ALPHA", *v);
  if (auto v = env("UARM_RATE")) layer.rate = env_number("UARM_RATE", *v);
  if (auto v = env("UARM_VMAX")) layer.vmax = env_number("UARM_VMAX", *v);
  return layer;
}

void apply_layer(CliConfig& c, const CliLayer& l) {
  if (l.config_id) c.config_id = *l.config_id;
  if (l.source) c.source = *l.source;
  if (l.backend) c.backend = *l.backend;
  if (l.bind) c.bind = *l.bind;
  if (l.tau) c.tau = *l.tau;
  if (l.n) c.n = *l.n;
  if (l.alpha) c.alpha = *l.alpha;
  if (l.rate) c.rate = *l.rate;
  if (l.vmax) c.vmax = *l.vmax;
  if (l.data_dir) c.data_dir = *l.data_dir;
  if (l.descriptor_file) c.descriptor_file = *l.descriptor_file;
}

json settings_to_json(const CliConfig& c) {
  return {{"config_id", c.config_id},
          {"source", c.source},
          {"backend", c.backend},
          {"bind", c.bind},
          {"tau", std::isinf(c.tau) ? json("inf") : json(c.tau)},
          {"N", c.n},
          {"alpha", c.alpha},
          {"rate", c.rate},
          {"vmax", c.vmax},
          {"data_dir", c.data_dir},
          {"descriptor_file", c.descriptor_file}};
}

BindAddress parse_bind(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0) throw ConfigError("bind must be host:port, got '" + text + "'");
  BindAddress out;
  out.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  if (port.empty() || port.find_first_not_of("0123456789") != std::string::npos || port.size() > 5 ||
      std::stoi(port) > 65535) {
    throw ConfigError("bind port must be 0..65535, got '" + port + "'");
  }
  out.port = static_cast<std::uint16_t>(std::stoi(port));
  return out;
}

MappingParams mapping_params(const CliConfig& c) {
  MappingParams p;
  p.deadband_deg = c.tau;
  p.interp_steps = c.n;
  p.ema_alpha = c.alpha;
  p.rate_hz = c.rate;
  return p;
}

ConfigDescriptor descriptor(const CliConfig& c) {
  const ConfigId id = parse_config_id(c.config_id);
  if (c.descriptor_file.empty()) return load_config(id);
  return load_config_file(c.descriptor_file, id);
}

void validate(const CliConfig& c) {
  descriptor(c);
  parse_leader_kind(c.source);
  mapping_params(c).validate();
  if (!(c.vmax > 0.0) || !std::isfinite(c.vmax)) throw ConfigError("vmax must be a positive number of deg/s");
  if (c.backend != "sim" && c.backend != "loopback" && c.backend.rfind("tcp://", 0) != 0) {
    throw ConfigError("backend must be sim, loopback or tcp://host:port, got '" + c.backend + "'");
  }
  if (c.backend.rfind("tcp://", 0) == 0) parse_bind(c.backend.substr(6));
  parse_bind(c.bind);
  if (c.data_dir.empty()) throw ConfigError("data_dir must not be empty");
}

CliConfig resolve_config(const CliLayer& file, const CliLayer& env, const CliLayer& flags) {
  CliConfig c;
  apply_layer(c, file);
  apply_layer(c, env);
  apply_layer(c, flags);
  validate(c);
  return c;
}

// --- subcommands -------------------------------------------------------------------

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt_deg(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

std::shared_ptr<FollowerBackend> make_backend(const CliConfig& c, const ConfigDescriptor& config) {
  if (c.backend == "sim") {
    return std::make_shared<SimBackend>(config, zero_vector(config), SimParams::for_mapping(mapping_params(c), c.vmax));
  }
  if (c.backend == "loopback") return std::make_shared<LoopbackBackend>(config);
  const auto addr = parse_bind(c.backend.substr(6));
  return std::make_shared<ExternalBackend>(config, addr.host, addr.port);
}

int cmd_configs(const CliConfig& settings, const std::optional<std::string>& id, bool as_json, std::ostream& out) {
  // The active config reflects --descriptor-file; the others are built in.
  const ConfigDescriptor active = descriptor(settings);
  auto pick = [&](ConfigId c) { return c == active.id ? active : load_config(c); };
  std::vector<ConfigDescriptor> configs;
  if (id) {
    configs.push_back(pick(parse_config_id(*id)));
  } else {
    for (ConfigId c : kAllConfigs) configs.push_back(pick(c));
  }
  if (as_json) {
    json doc = json::array();
    for (const auto& c : configs) doc.push_back(to_json(c));
    out << (id ? doc.at(0) : doc).dump(2) << "\n";
    return 0;
  }
  for (const auto& c : configs) {
    out << to_string(c.id) << " (" << c.dof << " DoF)\n";
    out << "  compatible robots: ";
    for (std::size_t i = 0; i < c.compatible_robots.size(); ++i) out << (i ? ", " : "") << c.compatible_robots[i];
    out << "\n";
    for (const auto& j : c.joints) {
      out << "  joint" << j.index << "  " << j.axis.to_string() << "  [" << fmt_deg(j.range_min) << ", "
          << fmt_deg(j.range_max) << "] deg\n";
    }
    for (const auto& s : c.swap_pairs) {
      out << "  swap: leader joint" << s.leader << " -> follower joint" << s.follower
          << (s.sign < 0 ? " (inverted)" : "") << "\n";
    }
  }
  return 0;
}

struct SimArgs {
  std::string script;
  std::optional<std::string> out_path;
  std::string task = "default";
  std::string outcome = "success";
  std::optional<std::string> episode_id;
  double bit_flip_rate = 0.0;
  double drop_rate = 0.0;
  std::uint64_t seed = 0;
};

int cmd_sim(const CliConfig& c, const SimArgs& a, std::ostream& out) {
  ScriptedRunOptions o;
  o.session.config = descriptor(c);
  o.session.params = mapping_params(c);
  o.session.vmax_deg_s = c.vmax;
  o.session.data_dir = c.data_dir;
  o.session.task = a.task;
  if (a.out_path) o.session.episode_path = *a.out_path;
  o.session.episode_id = a.episode_id.value_or(a.out_path ? fs::path(*a.out_path).stem().string() : "sim");
  o.script = BusScript::load(a.script);
  o.faults = {a.bit_flip_rate, a.drop_rate, a.seed};
  o.outcome = parse_outcome(a.outcome);
  const ScriptedRunResult r = run_scripted_session(o);
  json report{{"episode", r.episode_path.string()},
              {"ticks", r.ticks},
              {"skipped_ticks", r.skipped_ticks},
              {"final_phase", to_string(r.final_phase)},
              {"final_q", r.final_state.q.values},
              {"decoder",
               {{"frames", r.decoder.frames},
                {"checksum_errors", r.decoder.checksum_errors},
                {"framing_errors", r.decoder.framing_errors},
                {"bytes_discarded", r.decoder.bytes_discarded}}},
              {"bus",
               {{"frames_sent", r.faults.frames_sent},
                {"frames_flipped", r.faults.frames_flipped},
                {"frames_dropped", r.faults.frames_dropped}}}};
  out << report.dump(2) << "\n";
  return 0;
}

int cmd_replay(const std::string& path, std::optional<double> vmax, std::ostream& out, std::ostream& err) {
  const Episode episode = read_episode(path);
  for (const auto& w : episode.warnings) spdlog::warn("{}: {}", path, w);
  const ConfigDescriptor config = load_config(episode.header.config);
  SimParams sim = episode.header.sim;
  if (vmax) sim.vmax_deg_s = *vmax;
  SimBackend backend(config, episode.header.follower_init, sim);
  const ReplayResult r = replay(episode, backend);
  json report{{"episode", path},
              {"episode_id", episode.header.episode_id},
              {"steps", episode.steps.size()},
              {"matches", r.matches},
              {"max_abs_error_deg", r.max_abs_error_deg},
              {"first_divergence", r.first_divergence ? json(*r.first_divergence) : json(nullptr)}};
  out << report.dump(2) << "\n";
  if (!r.matches) {
    err << json{{"error", "ReplayDivergence"},
                {"message", "replay diverged from the recording at step " + std::to_string(*r.first_divergence)}}
               .dump()
        << "\n";
    return 1;
  }
  return 0;
}

std::vector<fs::path> collect_episode_files(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file() && e.path().extension() == ".jsonl") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(p)) {
      files.push_back(p);
    } else {
      throw MetricError("no such file or directory: " + in);
    }
  }
  return files;
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

int cmd_metrics(const std::vector<std::string>& inputs, const std::optional<std::string>& table, int bucket,
                const std::string& format, std::ostream& out) {
  if (inputs.empty() && !table) throw UsageError("metrics needs episode paths or --table5");
  if (format != "json" && format != "text") throw UsageError("--format must be json or text");
  json report = json::object();

  if (table) {
    const ComparisonTable t = load_comparison_table(*table);
    const ComparisonReport r = compare(t);
    json rows = json::array();
    for (const auto& row : t.rows) {
      rows.push_back({{"task", row.task},
                      {"time_a", row.time_a},
                      {"time_b", row.time_b},
                      {"success_a", row.success_a},
                      {"success_b", row.success_b}});
    }
    report["comparison"] = {{"device_a", t.label_a},
                            {"device_b", t.label_b},
                            {"rows", rows},
                            {"mean_time_a", r.mean_time_a},
                            {"mean_time_b", r.mean_time_b},
                            {"mean_success_a", r.mean_success_a},
                            {"mean_success_b", r.mean_success_b},
                            {"time_reduction_percent", r.reduction_percent}};
    if (format == "text") {
      const int w = static_cast<int>(std::max<std::size_t>({10, t.label_a.size(), t.label_b.size()})) + 4;
      auto line = [&](const std::string& task, const std::array<std::string, 4>& cells) {
        out << std::left << std::setw(22) << task << std::right;
        for (const auto& cell : cells) out << std::setw(w) << cell;
        out << "\n";
      };
      line("task", {t.label_a + " s", t.label_b + " s", t.label_a + " %", t.label_b + " %"});
      for (const auto& row : t.rows) {
        line(row.task, {fixed(row.time_a, 2), fixed(row.time_b, 2), fixed(row.success_a, 1), fixed(row.success_b, 1)});
      }
      line("mean", {fixed(r.mean_time_a, 2), fixed(r.mean_time_b, 2), fixed(r.mean_success_a, 1),
                    fixed(r.mean_success_b, 1)});
      out << "time reduction (" << t.label_a << " vs " << t.label_b << "): " << fixed(r.reduction_percent, 2)
          << "%\n";
    }
  }

  if (!inputs.empty()) {
    std::vector<Episode> episodes;
    json summaries = json::array();
    for (const auto& file : collect_episode_files(inputs)) {
      Episode e = read_episode(file);
      for (const auto& w : e.warnings) spdlog::warn("{}: {}", file.string(), w);
      const EpisodeSummary s = summarize(e, load_config(e.header.config), file.string());
      summaries.push_back({{"path", s.path},
                           {"episode_id", s.episode_id},
                           {"task", s.task},
                           {"config", to_string(s.config)},
                           {"outcome", to_string(s.outcome)},
                           {"duration_s", s.duration_s},
                           {"steps", s.steps},
                           {"ee_path_length_m", s.ee_path_length_m},
                           {"ee_mean_sq_jerk", s.ee_mean_sq_jerk ? json(*s.ee_mean_sq_jerk) : json(nullptr)}});
      episodes.push_back(std::move(e));
    }
    TrialSeries series = trials_from_episodes(episodes);
    series.bucket_width = bucket;
    json curves = json::object();
    for (const auto& [task, curve] : proficiency_curve(series)) curves[task] = curve;
    json tasks = json::object();
    for (const auto& [task, trials] : series.tasks) {
      std::vector<double> durations;
      std::size_t ok = 0;
      for (const auto& t : trials) {
        durations.push_back(t.duration_s);
        ok += t.outcome == Outcome::Success;
      }
      tasks[task] = {{"trials", trials.size()},
                     {"success_rate", static_cast<double>(ok) / static_cast<double>(trials.size())},
                     {"mean_duration_s", mean(durations)}};
    }
    report["episodes"] = summaries;
    report["tasks"] = tasks;
    report["proficiency"] = curves;

    if (format == "text") {
      if (table) out << "\n";
      out << std::left << std::setw(28) << "episode" << std::setw(12) << "task" << std::setw(9) << "outcome"
          << std::right << std::setw(10) << "dur s" << std::setw(8) << "steps" << std::setw(10) << "path m"
          << std::setw(14) << "jerk m2/s6" << "\n";
      for (const auto& s : summaries) {
        out << std::left << std::setw(28) << s.at("episode_id").get<std::string>() << std::setw(12)
            << s.at("task").get<std::string>() << std::setw(9) << s.at("outcome").get<std::string>() << std::right
            << std::setw(10) << fixed(s.at("duration_s").get<double>(), 3) << std::setw(8)
            << s.at("steps").get<std::size_t>() << std::setw(10) << fixed(s.at("ee_path_length_m").get<double>(), 4)
            << std::setw(14)
            << (s.at("ee_mean_sq_jerk").is_null() ? std::string("-")
                                                   : fixed(s.at("ee_mean_sq_jerk").get<double>(), 4))
            << "\n";
      }
      for (const auto& [task, info] : tasks.items()) {
        out << "task " << task << ": " << info.at("trials") << " trials, success "
            << fixed(100.0 * info.at("success_rate").get<double>(), 1) << "%, proficiency per " << bucket
            << " trials:";
        for (double v : curves.at(task)) out << " " << fixed(v, 2);
        out << "\n";
      }
    }
  }

  if (format == "json") out << report.dump(2) << "\n";
  return 0;
}

struct ServeArgs {
  std::optional<std::string> console_dir;
  std::optional<std::string> script;
  std::optional<std::string> device;
  int baud = 1000000;
  double duration_s = 0.0;
  std::string task = "default";
};

int cmd_serve(const CliConfig& c, const ServeArgs& a) {
  const ConfigDescriptor config = descriptor(c);
  const LeaderKind kind = parse_leader_kind(c.source);

  std::unique_ptr<MockBus> bus;
  std::shared_ptr<LeaderSource> leader;
  if (kind == LeaderKind::Mock) {
    if (!a.script) throw UsageError("--source mock needs --script");
    bus = std::make_unique<MockBus>(BusScript::load(*a.script), c.rate);
    leader = std::make_shared<BusLeaderSource>(std::make_shared<MockByteSource>(*bus), config);
  } else if (kind == LeaderKind::Serial) {
    if (!a.device) throw UsageError("--source serial needs --device");
    leader = std::make_shared<BusLeaderSource>(std::make_shared<SerialByteSource>(*a.device, a.baud), config, false);
  }

  ServiceOptions so;
  const auto bind = parse_bind(c.bind);
  so.host = bind.host;
  so.port = bind.port;
  so.source = kind;
  if (a.console_dir) so.console_dir = *a.console_dir;

  SessionOptions session;
  session.config = config;
  session.params = mapping_params(c);
  session.vmax_deg_s = c.vmax;
  session.data_dir = c.data_dir;
  session.task = a.task;

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  SessionService service(so, session, leader, make_backend(c, config));
  service.start();
  if (a.duration_s > 0.0) {
    const timespec limit{static_cast<time_t>(a.duration_s),
                         static_cast<long>((a.duration_s - static_cast<double>(static_cast<time_t>(a.duration_s))) * 1e9)};
    sigtimedwait(&signals, nullptr, &limit);
  } else {
    int received = 0;
    sigwait(&signals, &received);
  }
  service.stop();
  pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
  return 0;
}

void print_error(std::ostream& err, std::string_view kind, std::string_view message) {
  err << json{{"error", std::string(kind)}, {"message", std::string(message)}}.dump() << "\n";
}

void use_stderr_logger() {
  if (!spdlog::get("uarm")) {
    auto logger = spdlog::stderr_color_mt("uarm");
    spdlog::set_default_logger(logger);
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
  use_stderr_logger();

  CLI::App app{"Leader-follower teleoperation engine for low-cost leader arms."};
  app.name("uarm");
  app.fallthrough();
  app.require_subcommand(1);

  std::optional<std::string> config_file;
  CliLayer flags;
  app.add_option("--config", config_file, "JSON settings file");
  app.add_option("--config-id", flags.config_id, "kinematic configuration: config1, config2 or config3 [UARM_CONFIG_ID]");
  app.add_option("--source", flags.source, "leader source: serial, mock or virtual [UARM_SOURCE]");
  app.add_option("--backend", flags.backend, "follower backend: sim, loopback or tcp://host:port [UARM_BACKEND]");
  app.add_option("--bind", flags.bind, "service address host:port [UARM_BIND]");
  app.add_option("--tau", flags.tau, "deadband in degrees; inf disables motion [UARM_TAU]");
  app.add_option("-N,--interp-steps", flags.n, "interpolation sub-steps per tick [UARM_N]");
  app.add_option("--alpha", flags.alpha, "EMA smoothing factor in (0, 1] [UARM_ALPHA]");
  app.add_option("--rate", flags.rate, "control rate in Hz [UARM_RATE]");
  app.add_option("--vmax", flags.vmax, "simulated follower joint speed limit in deg/s [UARM_VMAX]");
  app.add_option("--data-dir", flags.data_dir, "episode directory [UARM_DATA_DIR]");
  app.add_option("--descriptor-file", flags.descriptor_file,
                 "JSON kinematic descriptor overriding the built-in one [UARM_DESCRIPTOR_FILE]");
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  auto* configs = app.add_subcommand("configs", "print the built-in kinematic configurations");
  std::optional<std::string> configs_id;
  bool configs_json = false;
  configs->add_option("--id", configs_id, "only this configuration");
  configs->add_flag("--json", configs_json, "emit the descriptor JSON");

  auto* settings = app.add_subcommand("settings", "print the merged settings as JSON");

  auto* sim = app.add_subcommand("sim", "run a scripted mock-bus session headlessly and record it");
  SimArgs sim_args;
  sim->add_option("--script", sim_args.script, "leader script (JSON keyframes)")->required();
  sim->add_option("--out", sim_args.out_path, "episode file (default <data-dir>/<task>/<id>.jsonl)");
  sim->add_option("--task", sim_args.task, "task label");
  sim->add_option("--outcome", sim_args.outcome, "label for the episode: success or failure");
  sim->add_option("--episode-id", sim_args.episode_id, "episode id (default: file stem)");
  sim->add_option("--bit-flip-rate", sim_args.bit_flip_rate, "per-frame probability of a flipped bit");
  sim->add_option("--drop-rate", sim_args.drop_rate, "per-frame probability of a dropped frame");
  sim->add_option("--seed", sim_args.seed, "fault RNG seed");

  auto* replay_cmd = app.add_subcommand("replay", "re-execute an episode on the simulator and compare");
  std::string replay_path;
  std::optional<double> replay_vmax;
  replay_cmd->add_option("episode", replay_path, "episode file")->required();
  replay_cmd->add_option("--sim-vmax", replay_vmax, "override the recorded simulator speed limit");

  auto* metrics = app.add_subcommand("metrics", "report episode metrics or a device comparison table");
  std::vector<std::string> metric_inputs;
  std::optional<std::string> table5;
  int bucket = 10;
  std::string format = "text";
  metrics->add_option("paths", metric_inputs, "episode files or directories");
  metrics->add_option("--table5,--table", table5, "comparison table fixture (JSON)");
  metrics->add_option("--bucket", bucket, "trials per proficiency bucket")->check(CLI::PositiveNumber);
  metrics->add_option("--format", format, "json or text");

  auto* serve = app.add_subcommand("serve", "run the session service (WebSocket + HTTP)");
  ServeArgs serve_args;
  serve->add_option("--console-dir", serve_args.console_dir, "directory served under /console/");
  serve->add_option("--script", serve_args.script, "leader script for --source mock");
  serve->add_option("--device", serve_args.device, "serial device for --source serial");
  serve->add_option("--baud", serve_args.baud, "serial baud rate");
  serve->add_option("--duration", serve_args.duration_s, "stop after this many seconds (0 = until SIGINT)");
  serve->add_option("--task", serve_args.task, "task label for recorded episodes");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    print_error(err, "UsageError", e.what());
    return 2;
  }

  if (const auto level = spdlog::level::from_str(log_level); level != spdlog::level::off || log_level == "off") {
    spdlog::set_level(level);
  } else {
    print_error(err, "UsageError", "unknown log level '" + log_level + "'");
    return 2;
  }

  CliConfig config;
  try {
    const CliLayer file = config_file ? layer_from_file(*config_file) : CliLayer{};
    config = resolve_config(file, layer_from_env(env), flags);
  } catch (const Error& e) {
    print_error(err, e.kind(), e.what());
    return 2;
  }

  try {
    if (configs->parsed()) return cmd_configs(config, configs_id, configs_json, out);
    if (settings->parsed()) {
      out << settings_to_json(config).dump(2) << '\n';
      return 0;
    }
    if (sim->parsed()) return cmd_sim(config, sim_args, out);
    if (replay_cmd->parsed()) return cmd_replay(replay_path, replay_vmax, out, err);
    if (metrics->parsed()) return cmd_metrics(metric_inputs, table5, bucket, format, out);
    if (serve->parsed()) {
      if (serve_args.duration_s < 0.0) throw UsageError("--duration must be >= 0");
      return cmd_serve(config, serve_args);
    }
  } catch (const UsageError& e) {
    print_error(err, "UsageError", e.what());
    return 2;
  } catch (const Error& e) {
    print_error(err, e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error(err, "RuntimeError", e.what());
    return 1;
  }
  return 2;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr, process_env());
}

}  // namespace uarm
