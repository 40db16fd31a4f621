#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "elfslam/chirp_dsp.hpp"
#include "elfslam/geometry.hpp"

namespace elfslam::room {

struct Segment {
  Vec2 a;
  Vec2 b;
};

/// Plan-view room: a simple polygon whose edge i runs from vertex i to
/// vertex i+1 (mod n). Vertices are normalised to counter-clockwise order on
/// construction so the interior is always on the left of each wall.
class Room {
 public:
  Room() = default;
  Room(std::vector<Vec2> vertices, std::vector<double> reflection_coeff, int max_order = 3,
       double speed_of_sound_mps = 343.0);

  static Room rectangle(double width, double height, double reflection_coeff = 0.8,
                        int max_order = 3);

  std::size_t wall_count() const { return vertices_.size(); }
  Segment wall(std::size_t i) const;
  const std::vector<Vec2>& vertices() const { return vertices_; }
  const std::vector<double>& reflection_coeff() const { return reflection_; }
  int max_order() const { return max_order_; }
  double speed_of_sound() const { return speed_of_sound_; }

  /// Strict point-in-polygon test (points on the boundary are outside).
  bool contains(const Vec2& p) const;
  double distance_to_boundary(const Vec2& p) const;
  /// True when the open segment p-q crosses no wall other than `ignore_a`/`ignore_b`.
  bool segment_clear(const Vec2& p, const Vec2& q, int ignore_a = -1, int ignore_b = -1) const;

  Vec2 bbox_min() const;
  Vec2 bbox_max() const;

 private:
  std::vector<Vec2> vertices_;
  std::vector<double> reflection_;
  int max_order_ = 3;
  double speed_of_sound_ = 343.0;
};

struct ImageSource {
  Vec2 position;
  double reflection_product = 1.0;
  int order = 0;
  /// Walls in the order the source was mirrored across them; sound meets
  /// them in the same order on its way from the source.
  std::vector<int> walls;
  /// Reflection points from the source outwards; filled only when a receiver
  /// was supplied.
  std::vector<Vec2> path;
};

/// Mirror images of `src` up to `order`. Images not in front of the next
/// mirroring wall are pruned. With a receiver, only images whose unfolded
/// path to the receiver hits every wall segment in sequence without
/// occlusion are kept.
std::vector<ImageSource> compute_image_sources(const Room& room, const Vec2& src, int order,
                                               const std::optional<Vec2>& receiver = std::nullopt);

Vec2 reflect_across(const Segment& wall, const Vec2& p);

/// Reflection points of the specular path src -> walls... -> receiver, ordered
/// from the source outwards; nullopt when the path misses a wall segment or
/// is occluded.
std::optional<std::vector<Vec2>> trace_specular_path(const Room& room, const Vec2& src,
                                                     const std::vector<int>& walls,
                                                     const Vec2& receiver);

struct Device {
  Vec2 position{0.0, 0.0};
  double heading_rad = 0.0;
  double speaker_offset_m = 0.075;  // forward of position
  double mic_offset_m = 0.075;      // backward of position
  double directivity_alpha = 0.5;
  double snr_db = 30.0;  // +inf disables noise

  Vec2 speaker() const;
  Vec2 mic() const;
};

struct Tap {
  double delay_samples = 0.0;
  double amplitude = 0.0;
};

struct ImpulseResponse {
  std::vector<Tap> taps;
};

/// Cardioid mix (1 - alpha) + alpha * cos(theta).
double directivity_gain(double alpha, double theta);

ImpulseResponse render_impulse_response(const Room& room, const Device& dev, int sample_rate_hz);

/// Point-to-point variant used by render_impulse_response.
ImpulseResponse render_impulse_response(const Room& room, const Vec2& speaker, const Vec2& mic,
                                        double heading_rad, double alpha, int sample_rate_hz);

/// Convolves the chirp with the taps using linear fractional-delay interpolation.
dsp::Recording synthesize_recording(const ImpulseResponse& ir, const dsp::Recording& chirp,
                                    std::size_t length);

struct EchoSimConfig {
  dsp::ChirpConfig chirp;
  std::size_t recording_samples = 4410;  // 100 ms at 44.1 ksps
  std::size_t trace_length = dsp::kTraceLength;
};

dsp::EchoTrace simulate_echo(const Room& room, const Device& dev, const dsp::Recording& chirp,
                             std::uint64_t seed, const EchoSimConfig& cfg = {});

struct GridRecord {
  std::size_t spot_id = 0;
  std::size_t orientation_idx = 0;  // index into GridConfig::orientations
  Vec2 position;
  double heading_rad = 0.0;
  dsp::EchoTrace trace;
};

struct GridDataset {
  std::vector<Vec2> spots;
  std::vector<GridRecord> records;
};

struct GridConfig {
  double spacing_m = 0.25;
  std::vector<double> orientations{0.0};
  std::size_t traces_per_pose = 1;
  double heading_jitter_rad = 5.0 * 3.14159265358979323846 / 180.0;
  /// Minimum clearance from every wall; defaults to the larger device offset.
  std::optional<double> wall_margin_m;
};

/// Lattice points bbox_min + (i, j) * spacing lying inside the room with clearance `margin`.
std::vector<Vec2> interior_grid(const Room& room, double spacing_m, double margin_m);

GridDataset synth_grid_dataset(const Room& room, const Device& device_template,
                               const GridConfig& grid, std::uint64_t seed,
                               const EchoSimConfig& sim = {});

}  // namespace elfslam::room
