#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "elfslam/chirp_dsp.hpp"
#include "elfslam/elf_model.hpp"
#include "elfslam/geometry.hpp"
#include "elfslam/loop_closure.hpp"
#include "elfslam/motion.hpp"
#include "elfslam/pose_graph.hpp"
#include "elfslam/room_sim.hpp"

namespace elfslam::mapping {

/// Echo traces captured between footstep k and k+1 are stored at index k,
/// so a walk with N footsteps carries N-1 steps of echoes.
using StepTraces = std::vector<std::vector<dsp::EchoTrace>>;

/// Simulates every echo of a walk with the device held along the walking direction.
StepTraces capture_walk(const room::Room& room, const room::Device& device_template,
                        const motion::Walk& walk, const room::EchoSimConfig& sim,
                        std::uint64_t seed);

struct TrajectoryMap {
  std::vector<Pose2> nodes;
  StepTraces per_step_traces;             // index-aligned with nodes[0 .. N-2]
  std::vector<loop::ElfList> per_step_elfs;
  std::string extractor_version;
  Pose2 initial_pose;

  /// Position of echo j of step k, interpolated between nodes k and k+1.
  Vec2 trace_position(std::size_t step, std::size_t echo) const;
};

struct MapBuildConfig {
  model::EncoderConfig finetune = [] {
    model::EncoderConfig c;
    c.steps = 1500;
    return c;
  }();
  loop::CurationConfig curation;
  graph::SolverConfig solver;
  double loop_sigma_m = 0.25;
  Pose2 initial_pose;
  dsp::StftConfig stft;
  std::uint64_t seed = 0;
};

enum class MapStatus { Ok, NoLoopClosures };

struct MapBuildResult {
  TrajectoryMap map;
  MapStatus status = MapStatus::Ok;
  model::ModelParams extractor;
  std::vector<double> finetune_losses;
  std::vector<Pose2> dead_reckoned;
  loop::EssMatrix ess;
  loop::BinaryMatrix binary;
  loop::CandidateSet closures;
  graph::SolveReport report;
};

std::vector<dsp::Spectrogram> spectrograms(const StepTraces& traces, const dsp::StftConfig& stft);

/// Dead reckoning, fine-tuning on consecutive echoes, per-step ELFs, ESS
/// matrix, curation and pose-graph optimisation.
MapBuildResult build_trajectory_map(const StepTraces& echoes,
                                    std::span<const motion::OdometryEdge> odometry,
                                    const model::ModelParams& extractor,
                                    const MapBuildConfig& cfg);

/// Pose-graph stage only, given per-step ELFs; used by build_trajectory_map.
MapBuildResult map_from_elfs(std::vector<loop::ElfList> per_step_elfs,
                             std::span<const motion::OdometryEdge> odometry,
                             const MapBuildConfig& cfg);

/// Rigidly moves the map so its initial pose lands on `reference_frame`.
TrajectoryMap align_map(const TrajectoryMap& m, const Pose2& reference_frame);

struct FloorSpot {
  Vec2 position;
  model::Elf floor_elf;
  std::size_t support = 0;
};

/// A constituent trajectory of a floor map: its nodes and, per step, the
/// spots its traces were assigned to.
struct FloorTrack {
  std::vector<Vec2> nodes;
  std::vector<std::vector<std::size_t>> step_spots;
};

struct FloorMap {
  std::vector<FloorSpot> spots;
  std::vector<FloorTrack> tracks;
  std::string extractor_version;
  double grid_m = 0.25;
};

struct SuperimposeConfig {
  double grid_m = 0.25;
  model::EncoderConfig retrain = [] {
    model::EncoderConfig c;
    c.steps = 1500;
    return c;
  }();
  dsp::StftConfig stft;
  std::uint64_t seed = 0;
};

struct SuperimposeResult {
  FloorMap floor;
  model::ModelParams extractor;
  std::vector<double> losses;
  /// Spot index of every trace, flattened over maps, steps and echoes.
  std::vector<std::size_t> trace_spots;
};

/// Quantises trace positions into spots, retrains the extractor with
/// same-spot positives and stores one normalised mean ELF per spot.
SuperimposeResult superimpose(std::span<const TrajectoryMap> maps,
                              const model::ModelParams& base, const SuperimposeConfig& cfg);

/// Floor map from an extractor without retraining (spots and mean ELFs only).
FloorMap build_floor_map(std::span<const TrajectoryMap> maps, const model::ModelParams& extractor,
                         double grid_m, const dsp::StftConfig& stft = {},
                         std::vector<std::size_t>* trace_spots = nullptr);

}  // namespace elfslam::mapping
