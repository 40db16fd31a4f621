#include "elfslam/scenario.hpp"

#include <cmath>
#include <numbers>

#include "elfslam/errors.hpp"
#include "elfslam/rng.hpp"

namespace elfslam::scenario {

room::Room survey_room() {
  return room::Room({{0.0, 0.0}, {8.0, 0.0}, {8.0, 6.0}, {0.0, 6.0}}, {0.9, 0.55, 0.8, 0.7});
}

motion::WalkConfig survey_walk(bool reverse) {
  constexpr double x0 = 1.0, y0 = 0.7, x1 = 6.1, y1 = 4.7;
  motion::WalkConfig w;
  w.waypoints = motion::rectangle_loop(x0, y0, x1, y1, reverse);
  w.stride_m = 2.0 * ((x1 - x0) + (y1 - y0)) / double(kStepsPerRound);
  // feet land near, not on, the floor markers
  w.placement_sigma_m = 0.05;
  return w;
}

std::vector<room::Room> pretraining_rooms() {
  return {room::Room({{0.0, 0.0}, {7.0, 0.0}, {7.0, 5.0}, {0.0, 5.0}}, {0.85, 0.6, 0.75, 0.9}),
          room::Room({{0.0, 0.0}, {6.0, 0.0}, {6.0, 3.0}, {3.0, 3.0}, {3.0, 5.0}, {0.0, 5.0}},
                     {0.9, 0.8, 0.7, 0.85, 0.6, 0.75})};
}

model::EncoderConfig desk_encoder(int steps) {
  model::EncoderConfig c;
  c.conv_channels = {8, 16, 32, 64};
  c.embed_dim = 128;
  c.batch_pairs_M = 32;
  c.temperature_tau = 0.1;
  c.steps = steps;
  return c;
}

loop::CurationConfig desk_curation() {
  loop::CurationConfig c;
  c.ess_threshold = 0.6;
  return c;
}

PretrainSet pretraining_set(const std::vector<room::Room>& rooms, const room::Device& device,
                            const PretrainSpec& spec, std::uint64_t seed,
                            const room::EchoSimConfig& sim, const dsp::StftConfig& stft) {
  require(!rooms.empty(), ErrorKind::Config, "pre-training needs at least one room");
  require(spec.orientations >= 1, ErrorKind::Config, "pre-training needs at least one orientation");
  room::GridConfig grid;
  grid.spacing_m = spec.spacing_m;
  grid.traces_per_pose = spec.traces_per_pose;
  grid.orientations.clear();
  for (int o = 0; o < spec.orientations; ++o) {
    grid.orientations.push_back(2.0 * std::numbers::pi * o / spec.orientations);
  }
  PretrainSet out;
  // rooms are laid side by side far enough apart that no pair crosses rooms
  double shift = 0.0;
  for (std::size_t r = 0; r < rooms.size(); ++r) {
    const auto ds = room::synth_grid_dataset(rooms[r], device, grid, derive_seed(seed, "pretrain-room", r), sim);
    for (const auto& rec : ds.records) {
      out.pool.push_back(dsp::compute_spectrogram(rec.trace, stft));
      out.positions.push_back(rec.position + Vec2(shift - rooms[r].bbox_min().x(), 0.0));
      out.groups.push_back(static_cast<int>(rec.orientation_idx));
    }
    shift += rooms[r].bbox_max().x() - rooms[r].bbox_min().x() + 10.0;
  }
  return out;
}

model::TrainResult pretrain(const PretrainSet& data, const model::EncoderConfig& cfg,
                            std::uint64_t seed, const PretrainSpec& spec) {
  const auto sampler = model::pair_by_distance(data.positions, spec.positive_threshold_m, data.groups);
  const auto init = model::ModelParams::initialize(cfg, derive_seed(seed, "pretrain-init"));
  return model::train(init, *sampler, data.pool, cfg, derive_seed(seed, "pretrain"));
}

Survey survey(const room::Room& room, const motion::WalkConfig& walk, std::size_t rounds,
              const room::Device& device, std::uint64_t seed, const room::EchoSimConfig& sim) {
  Survey s;
  s.walk = motion::simulate_walk(walk, rounds, derive_seed(seed, "walk"));
  s.traces = mapping::capture_walk(room, device, s.walk, sim, derive_seed(seed, "capture"));
  return s;
}

mapping::MapBuildConfig desk_map_config(const Survey& s, int finetune_steps, std::uint64_t seed) {
  mapping::MapBuildConfig cfg;
  cfg.finetune = desk_encoder(finetune_steps);
  cfg.curation = desk_curation();
  cfg.initial_pose = s.walk.ground_truth.front();
  cfg.seed = seed;
  return cfg;
}

}  // namespace elfslam::scenario
