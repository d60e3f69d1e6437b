#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "uarm/kinematic_config.hpp"
#include "uarm/recorder.hpp"

namespace uarm {

// Sum of Euclidean distances between consecutive positions (meters).
double path_length(std::span<const EePose> trace);
double path_length(std::span<const Eigen::Vector3d> points);

// Mean squared jerk (m^2/s^6) from third finite differences at uniform dt.
// Throws MetricError with fewer than 4 samples or dt <= 0.
double smoothness(std::span<const EePose> trace, double dt);
double smoothness(std::span<const Eigen::Vector3d> points, double dt);

double mean(std::span<const double> values);

// Percent reduction of mean(a) relative to mean(b): 100 * (mean(b) - mean(a)) / mean(b).
double time_reduction(std::span<const double> times_a, std::span<const double> times_b);

struct Trial {
  double duration_s = 0.0;
  Outcome outcome = Outcome::Failure;
};

struct TrialSeries {
  std::map<std::string, std::vector<Trial>> tasks;
  int bucket_width = 10;
};

// Success fraction per consecutive bucket of `width` trials; a partial last
// bucket uses its own size as denominator.
std::vector<double> proficiency_curve(std::span<const Trial> trials, int width);
std::map<std::string, std::vector<double>> proficiency_curve(const TrialSeries& series);

TrialSeries trials_from_episodes(std::span<const Episode> episodes);

// Per-task comparison fixture (two devices, mean time and success rate per task).
struct ComparisonRow {
  std::string task;
  double time_a = 0.0;
  double success_a = 0.0;  // percent
  double time_b = 0.0;
  double success_b = 0.0;  // percent
};

struct ComparisonTable {
  std::string label_a;
  std::string label_b;
  std::vector<ComparisonRow> rows;
};

struct ComparisonReport {
  double mean_time_a = 0.0;
  double mean_time_b = 0.0;
  double mean_success_a = 0.0;
  double mean_success_b = 0.0;
  double reduction_percent = 0.0;
};

ComparisonTable load_comparison_table(const std::filesystem::path& path);
ComparisonReport compare(const ComparisonTable& table);

struct EpisodeSummary {
  std::string path;
  std::string episode_id;
  std::string task;
  ConfigId config = ConfigId::Config1;
  Outcome outcome = Outcome::Estop;
  double duration_s = 0.0;
  std::size_t steps = 0;
  double ee_path_length_m = 0.0;
  std::optional<double> ee_mean_sq_jerk;  // needs >= 4 steps
};

EpisodeSummary summarize(const Episode& episode, const ConfigDescriptor& config, std::string path = {});

}  // namespace uarm
