#pragma once

#include <cstdint>
#include <vector>

#include "elfslam/chirp_dsp.hpp"
#include "elfslam/elf_model.hpp"
#include "elfslam/loop_closure.hpp"
#include "elfslam/mapping.hpp"
#include "elfslam/motion.hpp"
#include "elfslam/room_sim.hpp"

/// Desk-scale scene presets shared by the acceptance suite, the command line
/// tool's sample config and the Python smoke tests.
namespace elfslam::scenario {

inline constexpr std::size_t kStepsPerRound = 58;

/// 8 x 6 m room with a different reflection coefficient on every wall.
room::Room survey_room();

/// Off-centre rectangular loop inside survey_room() holding kStepsPerRound
/// footsteps per round.
motion::WalkConfig survey_walk(bool reverse = false);

/// Two rooms (a rectangle and an L shape) used only for pre-training.
std::vector<room::Room> pretraining_rooms();

/// Encoder used at desk scale: narrower convolutions, small batches and a
/// low temperature. Output stays 128-dimensional.
model::EncoderConfig desk_encoder(int steps = 0);

/// Curation with the ESS threshold calibrated to desk_encoder() features.
loop::CurationConfig desk_curation();

struct PretrainSpec {
  double spacing_m = 0.15;
  int orientations = 8;
  std::size_t traces_per_pose = 1;
  double positive_threshold_m = 0.20;
};

/// Grid traces from several rooms as one training pool. Positions of
/// different rooms are kept apart and each trace is grouped by its nominal
/// orientation, so positives are same-room, same-orientation neighbours.
struct PretrainSet {
  std::vector<dsp::Spectrogram> pool;
  std::vector<Vec2> positions;
  std::vector<int> groups;
};

PretrainSet pretraining_set(const std::vector<room::Room>& rooms, const room::Device& device,
                            const PretrainSpec& spec, std::uint64_t seed,
                            const room::EchoSimConfig& sim = {}, const dsp::StftConfig& stft = {});

model::TrainResult pretrain(const PretrainSet& data, const model::EncoderConfig& cfg,
                            std::uint64_t seed, const PretrainSpec& spec = {});

/// A simulated multi-round walk with its captured echoes.
struct Survey {
  motion::Walk walk;
  mapping::StepTraces traces;
};

Survey survey(const room::Room& room, const motion::WalkConfig& walk, std::size_t rounds,
              const room::Device& device, std::uint64_t seed, const room::EchoSimConfig& sim = {});

/// Mapping configuration for a survey: desk encoder and curation, anchored
/// at the walk's true starting pose.
mapping::MapBuildConfig desk_map_config(const Survey& s, int finetune_steps, std::uint64_t seed);

}  // namespace elfslam::scenario
