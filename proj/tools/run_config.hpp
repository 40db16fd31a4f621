#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "elfslam/chirp_dsp.hpp"
#include "elfslam/elf_model.hpp"
#include "elfslam/localize.hpp"
#include "elfslam/loop_closure.hpp"
#include "elfslam/mapping.hpp"
#include "elfslam/motion.hpp"
#include "elfslam/pose_graph.hpp"
#include "elfslam/room_sim.hpp"
#include "elfslam/scenario.hpp"

namespace elfslam::cli {

/// Flat `section.key = value` configuration. Every key has a default; the
/// defaults reproduce the desk-scale scene. Unknown keys are rejected.
class RunConfig {
 public:
  RunConfig();

  /// Parses `key = value` lines; `#` starts a comment. Throws Config errors.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);

  /// Full config, one documented key per line, in a stable order.
  std::string dump() const;

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

  double real(const std::string& key) const;
  long long integer(const std::string& key) const;
  bool boolean(const std::string& key) const;

  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seeds.root")); }

  dsp::ChirpConfig chirp() const;
  room::EchoSimConfig echo_sim() const;
  room::Room survey_room() const;
  std::vector<room::Room> pretrain_rooms() const;
  room::Device device() const;
  motion::WalkConfig walk() const;
  std::size_t rounds() const;
  scenario::PretrainSpec pretrain_spec() const;
  model::EncoderConfig encoder(int steps) const;
  loop::CurationConfig curation() const;
  graph::SolverConfig solver() const;
  localize::LocalizeConfig localization() const;

  /// Validates every typed section; throws the first Config error found.
  void validate() const;

 private:
  std::map<std::string, std::string> values_;
};

/// "x,y;x,y;..." polygons and "a,b,c" lists.
std::vector<Vec2> parse_points(const std::string& s);
std::vector<double> parse_reals(const std::string& s);

}  // namespace elfslam::cli
