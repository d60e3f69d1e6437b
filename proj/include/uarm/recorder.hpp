#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "uarm/follower_sim.hpp"
#include "uarm/kinematic_config.hpp"
#include "uarm/mapping_engine.hpp"

namespace uarm {

inline constexpr const char* kEpisodeSchema = "uarm.episode/1";

enum class Outcome { Success, Failure, Estop };

std::string to_string(Outcome outcome);
Outcome parse_outcome(std::string_view text);

struct EpisodeHeader {
  std::string episode_id;
  ConfigId config = ConfigId::Config1;
  MappingParams params;
  SimParams sim;
  JointVector follower_init;
  std::string started_at;  // ISO-8601 UTC, wall clock
  std::string task;

  friend bool operator==(const EpisodeHeader&, const EpisodeHeader&) = default;
};

struct EpisodeStep {
  double t_ms = 0.0;
  std::vector<double> leader_angles;
  std::vector<std::optional<double>> emitted_targets;  // per follower joint, sparse
  std::vector<double> follower_q;

  friend bool operator==(const EpisodeStep&, const EpisodeStep&) = default;
};

struct EpisodeFooter {
  Outcome outcome = Outcome::Estop;
  double duration_s = 0.0;

  friend bool operator==(const EpisodeFooter&, const EpisodeFooter&) = default;
};

struct Episode {
  EpisodeHeader header;
  std::vector<EpisodeStep> steps;
  EpisodeFooter footer;
  std::vector<std::string> warnings;  // populated by read_episode; not serialized

  double computed_duration_s() const;
  bool operator==(const Episode& other) const {
    return header == other.header && steps == other.steps && footer == other.footer;
  }
};

nlohmann::json header_to_json(const EpisodeHeader& header);
nlohmann::json step_to_json(const EpisodeStep& step);
nlohmann::json footer_to_json(const EpisodeFooter& footer);

void write_episode(const std::filesystem::path& path, const Episode& episode);

// Throws ParseError(line) on a malformed line or non-increasing t_ms.
// A file without a footer is recovered with outcome estop and a warning.
Episode read_episode(const std::filesystem::path& path);

// Checks every emitted target against the follower limits; returns problems found.
std::vector<std::string> validate_episode(const Episode& episode, const ConfigDescriptor& config);

// Append-only single-writer episode stream.
class EpisodeWriter {
 public:
  EpisodeWriter(const std::filesystem::path& path, EpisodeHeader header);
  ~EpisodeWriter();
  EpisodeWriter(const EpisodeWriter&) = delete;
  EpisodeWriter& operator=(const EpisodeWriter&) = delete;

  void append(const EpisodeStep& step);
  // Writes the footer; further appends are rejected.
  void close(Outcome outcome);

  bool closed() const { return closed_; }
  std::size_t steps() const { return steps_; }
  const EpisodeHeader& header() const { return header_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  EpisodeHeader header_;
  std::ofstream out_;
  std::optional<double> first_t_ms_;
  double last_t_ms_ = 0.0;
  std::size_t steps_ = 0;
  bool closed_ = false;
};

struct ReplayResult {
  std::vector<FollowerState> states;  // one per step
  bool matches = true;
  std::optional<std::size_t> first_divergence;  // step index
  double max_abs_error_deg = 0.0;
};

// Re-drives `backend` with the recorded targets, starting from the
// episode's follower_init, and compares against the recorded follower_q.
// Throws ReplayError when the backend config differs from the episode's.
ReplayResult replay(const Episode& episode, SimBackend& backend);

std::string utc_now_iso8601();

}  // namespace uarm
