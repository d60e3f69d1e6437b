#include "uarm/metrics.hpp"

#include <fstream>
#include <numeric>

#include "uarm/errors.hpp"

namespace uarm {

namespace {

std::vector<Eigen::Vector3d> positions(std::span<const EePose> trace) {
  std::vector<Eigen::Vector3d> p;
  p.reserve(trace.size());
  for (const auto& pose : trace) p.push_back(pose.position);
  return p;
}

}  // namespace

double path_length(std::span<const Eigen::Vector3d> points) {
  double total = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) total += (points[i] - points[i - 1]).norm();
  return total;
}

double path_length(std::span<const EePose> trace) {
  const auto p = positions(trace);
  return path_length(std::span<const Eigen::Vector3d>(p));
}

double smoothness(std::span<const Eigen::Vector3d> points, double dt) {
  if (points.size() < 4) throw MetricError("smoothness needs at least 4 samples");
  if (!(dt > 0.0)) throw MetricError("smoothness needs dt > 0");
  const double dt3 = dt * dt * dt;
  double sum = 0.0;
  const std::size_t n = points.size() - 3;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d jerk = (points[i + 3] - 3.0 * points[i + 2] + 3.0 * points[i + 1] - points[i]) / dt3;
    sum += jerk.squaredNorm();
  }
  return sum / static_cast<double>(n);
}

double smoothness(std::span<const EePose> trace, double dt) {
  const auto p = positions(trace);
  return smoothness(std::span<const Eigen::Vector3d>(p), dt);
}

double mean(std::span<const double> values) {
  if (values.empty()) throw MetricError("mean of an empty list");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double time_reduction(std::span<const double> times_a, std::span<const double> times_b) {
  const double a = mean(times_a);
  const double b = mean(times_b);
  if (b == 0.0) throw MetricError("reference mean time is zero");
  return 100.0 * (b - a) / b;
}

std::vector<double> proficiency_curve(std::span<const Trial> trials, int width) {
  if (width < 1) throw MetricError("bucket width must be >= 1");
  std::vector<double> curve;
  const auto w = static_cast<std::size_t>(width);
  for (std::size_t start = 0; start < trials.size(); start += w) {
    const std::size_t end = std::min(trials.size(), start + w);
    std::size_t ok = 0;
    for (std::size_t i = start; i < end; ++i) ok += trials[i].outcome == Outcome::Success;
    curve.push_back(static_cast<double>(ok) / static_cast<double>(end - start));
  }
  return curve;
}

std::map<std::string, std::vector<double>> proficiency_curve(const TrialSeries& series) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [task, trials] : series.tasks) out[task] = proficiency_curve(trials, series.bucket_width);
  return out;
}

TrialSeries trials_from_episodes(std::span<const Episode> episodes) {
  TrialSeries series;
  for (const auto& e : episodes) {
    const std::string task = e.header.task.empty() ? "default" : e.header.task;
    series.tasks[task].push_back({e.footer.duration_s, e.footer.outcome});
  }
  return series;
}

ComparisonTable load_comparison_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    const auto doc = nlohmann::json::parse(in);
    ComparisonTable table;
    table.label_a = doc.at("devices").at(0).get<std::string>();
    table.label_b = doc.at("devices").at(1).get<std::string>();
    for (const auto& row : doc.at("tasks")) {
      table.rows.push_back({row.at("task").get<std::string>(), row.at("time_s").at(0).get<double>(),
                            row.at("success_pct").at(0).get<double>(), row.at("time_s").at(1).get<double>(),
                            row.at("success_pct").at(1).get<double>()});
    }
    if (table.rows.empty()) throw MetricError("comparison table has no tasks");
    return table;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ComparisonReport compare(const ComparisonTable& table) {
  std::vector<double> ta, tb, sa, sb;
  for (const auto& r : table.rows) {
    ta.push_back(r.time_a);
    tb.push_back(r.time_b);
    sa.push_back(r.success_a);
    sb.push_back(r.success_b);
  }
  return {mean(ta), mean(tb), mean(sa), mean(sb), time_reduction(ta, tb)};
}

EpisodeSummary summarize(const Episode& episode, const ConfigDescriptor& config, std::string path) {
  EpisodeSummary s;
  s.path = std::move(path);
  s.episode_id = episode.header.episode_id;
  s.task = episode.header.task;
  s.config = episode.header.config;
  s.outcome = episode.footer.outcome;
  s.duration_s = episode.footer.duration_s;
  s.steps = episode.steps.size();
  std::vector<Eigen::Vector3d> points;
  points.reserve(episode.steps.size());
  for (const auto& step : episode.steps) {
    points.push_back(forward_kinematics(config, JointVector{config.id, step.follower_q}).position);
  }
  s.ee_path_length_m = path_length(std::span<const Eigen::Vector3d>(points));
  if (points.size() >= 4) s.ee_mean_sq_jerk = smoothness(std::span<const Eigen::Vector3d>(points), 1.0 / episode.header.params.rate_hz);
  return s;
}

}  // namespace uarm
