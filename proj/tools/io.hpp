#pragma once

#include <optional>
#include <string>
#include <vector>

#include "elfslam/mapping.hpp"
#include "elfslam/motion.hpp"

namespace elfslam::cli {

std::string base64_encode(const void* data, std::size_t bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

/// Little-endian float32 arrays as base64.
std::string encode_floats(std::span<const float> v);
std::vector<float> decode_floats(const std::string& text);

struct EchoRecord {
  std::size_t step_idx = 0;
  std::size_t echo_idx = 0;
  Pose2 pose;                  // true device pose at capture
  double heading = 0.0;        // nominal heading (grid orientation or walking direction)
  dsp::EchoTrace trace;
  std::optional<std::size_t> spot_id;
  std::size_t room = 0;        // pre-training grids only
  int group = 0;               // orientation index for grids
};

/// JSON-lines dataset: a header line, then node and odometry lines for
/// walks, then echo records sorted by (step_idx, echo_idx).
struct Dataset {
  enum class Kind { Grid, Walk };
  Kind kind = Kind::Walk;
  std::string config;          // config snapshot (dump format)
  std::vector<Pose2> nodes;    // ground-truth footsteps
  std::vector<motion::OdometryEdge> odometry;
  std::vector<EchoRecord> records;

  /// Walk echoes regrouped per step.
  mapping::StepTraces step_traces() const;
};

inline constexpr int kDatasetVersion = 1;

void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

void write_trajectory_map(const std::string& path, const mapping::TrajectoryMap& m);
mapping::TrajectoryMap read_trajectory_map(const std::string& path);

void write_floor_map(const std::string& path, const mapping::FloorMap& m);
mapping::FloorMap read_floor_map(const std::string& path);

/// "trajectory" or "floor", read from the file's format tag.
std::string map_kind(const std::string& path);

/// Numeric CSV with a header row. Non-numeric cells are a Data error.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::size_t column(const std::string& name) const;
};
Table read_csv(const std::string& path);

}  // namespace elfslam::cli
