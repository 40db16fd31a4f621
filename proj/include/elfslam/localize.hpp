#pragma once

#include <optional>
#include <span>
#include <vector>

#include "elfslam/loop_closure.hpp"
#include "elfslam/mapping.hpp"
#include "elfslam/motion.hpp"

namespace elfslam::localize {

/// One reference entry: a position and the ELFs stored for it.
struct MapEntry {
  Vec2 position;
  loop::ElfList elfs;
};

/// An ordered sequence of map nodes with the ELFs of each step between
/// node k and node k+1 (steps.size() == nodes.size() - 1).
struct MapTrack {
  std::vector<Vec2> nodes;
  std::vector<loop::ElfList> steps;
};

/// Read-only view of a trajectory or floor map for queries.
struct LocalizationMap {
  std::vector<MapEntry> entries;
  std::vector<MapTrack> tracks;

  static LocalizationMap from(const mapping::TrajectoryMap& m);
  static LocalizationMap from(const mapping::FloorMap& m);
};

struct Query {
  /// ELFs grouped per step; one-shot queries use a single group.
  std::vector<loop::ElfList> step_elfs;
  std::vector<motion::OdometryEdge> odometry;

  loop::ElfList flattened() const;
};

struct Estimate {
  Vec2 position;
  std::size_t entry = 0;
  double score = 0.0;
  bool low_confidence = false;
  bool used_fallback = false;
};

struct LocalizeConfig {
  double low_confidence_ess = 0.4;
  double curve_tol_m = 0.5;
  bool allow_reversed_windows = true;
};

Estimate one_shot_localize(std::span<const model::Elf> query, const LocalizationMap& map,
                           const LocalizeConfig& cfg = {});

struct RigidFit {
  double rotation = 0.0;
  Vec2 translation{0.0, 0.0};
  double rmsd = 0.0;
};

/// Least-squares rotation + translation taking `src` onto `dst` (no scale).
RigidFit procrustes_2d(std::span<const Vec2> src, std::span<const Vec2> dst);

/// Curve matching of the dead-reckoned query polyline against every map
/// window with the same number of steps, then ESS ranking of the windows
/// passing the RMSD gate. Falls back to one-shot when no window passes.
Estimate trajectory_localize(const Query& q, const LocalizationMap& map,
                             const LocalizeConfig& cfg = {});

struct ErrorStats {
  double median = 0.0;
  double mean = 0.0;
  double q3 = 0.0;
  std::vector<double> errors;
};

/// Linear-interpolation (type 7) quantile of unsorted values.
double quantile(std::vector<double> values, double p);

ErrorStats error_stats(std::span<const Vec2> estimates, std::span<const Vec2> truth);

}  // namespace elfslam::localize
