#include "elfslam/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "elfslam/errors.hpp"
#include "elfslam/rng.hpp"

namespace elfslam::mapping {

StepTraces capture_walk(const room::Room& room, const room::Device& device_template,
                        const motion::Walk& walk, const room::EchoSimConfig& sim,
                        std::uint64_t seed) {
  const auto chirp = dsp::generate_chirp(sim.chirp);
  StepTraces out(walk.ground_truth.empty() ? 0 : walk.ground_truth.size() - 1);
  for (const auto& ep : walk.echo_poses) {
    room::Device dev = device_template;
    dev.position = ep.pose.translation();
    dev.heading_rad = ep.pose.theta;
    out.at(ep.step_idx).push_back(room::simulate_echo(
        room, dev, chirp, derive_seed(seed, "walk-echo", ep.step_idx, ep.echo_idx), sim));
  }
  return out;
}

Vec2 TrajectoryMap::trace_position(std::size_t step, std::size_t echo) const {
  const auto k = per_step_traces.at(step).size();
  const Vec2 a = nodes.at(step).translation();
  const Vec2 b = nodes.at(step + 1).translation();
  return a + (double(echo) / double(k)) * (b - a);
}

std::vector<dsp::Spectrogram> spectrograms(const StepTraces& traces, const dsp::StftConfig& stft) {
  std::vector<dsp::Spectrogram> out;
  for (const auto& step : traces)
    for (const auto& t : step) out.push_back(dsp::compute_spectrogram(t, stft));
  return out;
}

MapBuildResult map_from_elfs(std::vector<loop::ElfList> per_step_elfs,
                             std::span<const motion::OdometryEdge> odometry,
                             const MapBuildConfig& cfg) {
  require(per_step_elfs.size() == odometry.size(), ErrorKind::Argument,
          "map: echo steps and odometry edges are not aligned");
  MapBuildResult res;
  res.dead_reckoned = motion::dead_reckon(odometry, cfg.initial_pose);
  res.ess = loop::build_ess_matrix(per_step_elfs);
  res.binary = loop::binarize(res.ess, cfg.curation);
  res.closures = loop::curate(res.binary, cfg.curation);

  graph::PoseGraph g;
  g.nodes = res.dead_reckoned;
  g.odo_edges.assign(odometry.begin(), odometry.end());
  const Eigen::Matrix2d info =
      Eigen::Matrix2d::Identity() / (cfg.loop_sigma_m * cfg.loop_sigma_m);
  for (const auto& [i, j] : res.closures) g.loop_edges.push_back({i, j, info});

  res.map.initial_pose = cfg.initial_pose;
  res.map.per_step_elfs = std::move(per_step_elfs);
  if (res.closures.empty()) {
    res.status = MapStatus::NoLoopClosures;
    res.map.nodes = res.dead_reckoned;
    res.report.initial_cost = res.report.final_cost = graph::cost(g);
    res.report.converged = true;
  } else {
    auto solved = graph::optimize(g, cfg.solver);
    res.map.nodes = std::move(solved.nodes);
    res.report = solved.report;
  }
  return res;
}

MapBuildResult build_trajectory_map(const StepTraces& echoes,
                                    std::span<const motion::OdometryEdge> odometry,
                                    const model::ModelParams& extractor,
                                    const MapBuildConfig& cfg) {
  require(echoes.size() == odometry.size(), ErrorKind::Argument,
          "map: echo steps and odometry edges are not aligned");
  const auto pool = spectrograms(echoes, cfg.stft);
  require(!pool.empty(), ErrorKind::Argument, "map: no echoes");

  auto sampler = model::pair_consecutive(pool.size());
  auto trained = model::train(extractor, *sampler, pool, cfg.finetune,
                              derive_seed(cfg.seed, "finetune"));
  const auto elfs = model::encode_batch(trained.params, pool);

  std::vector<loop::ElfList> per_step(echoes.size());
  std::size_t k = 0;
  for (std::size_t s = 0; s < echoes.size(); ++s) {
    require(!echoes[s].empty(), ErrorKind::Argument,
            "map: step " + std::to_string(s) + " has no echoes");
    for (std::size_t e = 0; e < echoes[s].size(); ++e) per_step[s].push_back(elfs[k++]);
  }

  auto res = map_from_elfs(std::move(per_step), odometry, cfg);
  res.map.per_step_traces = echoes;
  res.map.extractor_version = trained.params.version();
  res.extractor = std::move(trained.params);
  res.finetune_losses = std::move(trained.losses);
  return res;
}

TrajectoryMap align_map(const TrajectoryMap& m, const Pose2& reference_frame) {
  const Pose2 transform = reference_frame.compose(m.initial_pose.inverse());
  TrajectoryMap out = m;
  for (auto& n : out.nodes) n = transform.compose(n);
  out.initial_pose = reference_frame;
  return out;
}

namespace {

struct SpotAssignment {
  std::vector<Vec2> spot_positions;
  std::vector<std::size_t> trace_spots;
  std::vector<FloorTrack> tracks;
};

SpotAssignment assign_spots(std::span<const TrajectoryMap> maps, double grid_m) {
  require(grid_m > 0.0, ErrorKind::Config, "superimpose grid must be positive");
  SpotAssignment sa;
  std::map<std::pair<long, long>, std::size_t> index;
  for (const auto& m : maps) {
    FloorTrack track;
    for (const auto& n : m.nodes) track.nodes.push_back(n.translation());
    for (std::size_t s = 0; s < m.per_step_traces.size(); ++s) {
      std::vector<std::size_t> step_spots;
      for (std::size_t e = 0; e < m.per_step_traces[s].size(); ++e) {
        const Vec2 p = m.trace_position(s, e);
        const std::pair<long, long> key{std::lround(p.x() / grid_m), std::lround(p.y() / grid_m)};
        auto [it, inserted] = index.emplace(key, sa.spot_positions.size());
        if (inserted) {
          sa.spot_positions.emplace_back(double(key.first) * grid_m, double(key.second) * grid_m);
        }
        sa.trace_spots.push_back(it->second);
        if (std::find(step_spots.begin(), step_spots.end(), it->second) == step_spots.end()) {
          step_spots.push_back(it->second);
        }
      }
      track.step_spots.push_back(std::move(step_spots));
    }
    sa.tracks.push_back(std::move(track));
  }
  return sa;
}

FloorMap assemble_floor(SpotAssignment sa, const std::vector<model::Elf>& elfs,
                        const std::string& version, double grid_m) {
  FloorMap fm;
  fm.grid_m = grid_m;
  fm.extractor_version = version;
  fm.spots.resize(sa.spot_positions.size());
  for (std::size_t s = 0; s < fm.spots.size(); ++s) {
    fm.spots[s].position = sa.spot_positions[s];
    fm.spots[s].floor_elf = Eigen::VectorXd::Zero(elfs.front().size());
  }
  for (std::size_t t = 0; t < elfs.size(); ++t) {
    auto& spot = fm.spots[sa.trace_spots[t]];
    spot.floor_elf += elfs[t];
    ++spot.support;
  }
  for (auto& spot : fm.spots) {
    const double n = spot.floor_elf.norm();
    require(n > 0.0, ErrorKind::Numeric, "floor ELF mean vanished");
    spot.floor_elf /= n;
  }
  fm.tracks = std::move(sa.tracks);
  return fm;
}

std::vector<dsp::Spectrogram> all_spectrograms(std::span<const TrajectoryMap> maps,
                                               const dsp::StftConfig& stft) {
  std::vector<dsp::Spectrogram> pool;
  for (const auto& m : maps) {
    auto s = spectrograms(m.per_step_traces, stft);
    pool.insert(pool.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  return pool;
}

}  // namespace

FloorMap build_floor_map(std::span<const TrajectoryMap> maps, const model::ModelParams& extractor,
                         double grid_m, const dsp::StftConfig& stft,
                         std::vector<std::size_t>* trace_spots) {
  require(!maps.empty(), ErrorKind::Argument, "floor map needs at least one trajectory map");
  auto sa = assign_spots(maps, grid_m);
  require(!sa.trace_spots.empty(), ErrorKind::Argument, "floor map: maps hold no traces");
  const auto pool = all_spectrograms(maps, stft);
  const auto elfs = model::encode_batch(extractor, pool);
  if (trace_spots) *trace_spots = sa.trace_spots;
  return assemble_floor(std::move(sa), elfs, extractor.version(), grid_m);
}

SuperimposeResult superimpose(std::span<const TrajectoryMap> maps,
                              const model::ModelParams& base, const SuperimposeConfig& cfg) {
  require(!maps.empty(), ErrorKind::Argument, "superimpose needs at least one trajectory map");
  auto sa = assign_spots(maps, cfg.grid_m);
  require(!sa.trace_spots.empty(), ErrorKind::Argument, "superimpose: maps hold no traces");
  const auto pool = all_spectrograms(maps, cfg.stft);

  auto sampler = model::pair_by_location(sa.trace_spots);
  auto trained = model::train(base, *sampler, pool, cfg.retrain, derive_seed(cfg.seed, "floor"));
  const auto elfs = model::encode_batch(trained.params, pool);

  SuperimposeResult res;
  res.trace_spots = sa.trace_spots;
  res.floor = assemble_floor(std::move(sa), elfs, trained.params.version(), cfg.grid_m);
  res.extractor = std::move(trained.params);
  res.losses = std::move(trained.losses);
  return res;
}

}  // namespace elfslam::mapping
