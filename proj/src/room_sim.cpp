#include "elfslam/room_sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "elfslam/errors.hpp"
#include "elfslam/rng.hpp"

namespace elfslam::room {

namespace {

constexpr double kEps = 1e-9;

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Signed distance of p from the wall line; positive on the interior (left) side.
double front_distance(const Segment& w, const Vec2& p) {
  const Vec2 d = w.b - w.a;
  return cross(d, p - w.a) / d.norm();
}

double point_segment_distance(const Vec2& p, const Segment& s) {
  const Vec2 d = s.b - s.a;
  const double len2 = d.squaredNorm();
  double t = len2 > 0.0 ? (p - s.a).dot(d) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (s.a + t * d - p).norm();
}

// Intersection parameters of p + t (q - p) with a + u (b - a).
bool intersect(const Vec2& p, const Vec2& q, const Segment& s, double& t, double& u) {
  const Vec2 r = q - p;
  const Vec2 e = s.b - s.a;
  const double denom = cross(r, e);
  if (std::abs(denom) < 1e-15) return false;
  const Vec2 ap = s.a - p;
  t = cross(ap, e) / denom;
  u = cross(ap, r) / denom;
  return true;
}

bool segments_cross(const Segment& s1, const Segment& s2) {
  double t = 0.0, u = 0.0;
  if (!intersect(s1.a, s1.b, s2, t, u)) return false;
  return t >= -kEps && t <= 1.0 + kEps && u >= -kEps && u <= 1.0 + kEps;
}

void expand_images(const Room& room, const ImageSource parent, int order,
                   std::vector<ImageSource>& out) {
  if (parent.order >= order) return;
  for (std::size_t w = 0; w < room.wall_count(); ++w) {
    if (!parent.walls.empty() && parent.walls.back() == static_cast<int>(w)) continue;
    const Segment wall = room.wall(w);
    if (front_distance(wall, parent.position) <= kEps) continue;
    ImageSource child;
    child.position = reflect_across(wall, parent.position);
    child.reflection_product = parent.reflection_product * room.reflection_coeff()[w];
    child.order = parent.order + 1;
    child.walls = parent.walls;
    child.walls.push_back(static_cast<int>(w));
    out.push_back(child);
    expand_images(room, out.back(), order, out);
  }
}

}  // namespace

Room::Room(std::vector<Vec2> vertices, std::vector<double> reflection_coeff, int max_order,
           double speed_of_sound_mps)
    : vertices_(std::move(vertices)),
      reflection_(std::move(reflection_coeff)),
      max_order_(max_order),
      speed_of_sound_(speed_of_sound_mps) {
  const std::size_t n = vertices_.size();
  require(n >= 3, ErrorKind::Geometry, "room polygon needs at least 3 vertices");
  if (reflection_.size() == 1) reflection_.assign(n, reflection_.front());
  require(reflection_.size() == n, ErrorKind::Config,
          "room needs one reflection coefficient per wall");
  for (double c : reflection_) {
    require(c > 0.0 && c < 1.0, ErrorKind::Config, "reflection coefficients must lie in (0, 1)");
  }
  require(max_order_ >= 1, ErrorKind::Config, "room.max_order must be >= 1");
  require(speed_of_sound_ > 0.0, ErrorKind::Config, "speed of sound must be positive");

  double area2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) area2 += cross(vertices_[i], vertices_[(i + 1) % n]);
  require(std::abs(area2) > 1e-12, ErrorKind::Geometry, "room polygon has zero area");
  if (area2 < 0.0) {
    std::vector<Vec2> v(n);
    std::vector<double> c(n);
    for (std::size_t k = 0; k < n; ++k) {
      v[k] = vertices_[n - 1 - k];
      c[k] = reflection_[(2 * n - 2 - k) % n];
    }
    vertices_ = std::move(v);
    reflection_ = std::move(c);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      if (adjacent) continue;
      require(!segments_cross(wall(i), wall(j)), ErrorKind::Geometry,
              "room polygon is not simple");
    }
  }
}

Room Room::rectangle(double width, double height, double reflection_coeff, int max_order) {
  require(width > 0.0 && height > 0.0, ErrorKind::Geometry, "rectangle needs positive size");
  return Room({{0.0, 0.0}, {width, 0.0}, {width, height}, {0.0, height}},
              {reflection_coeff}, max_order);
}

Segment Room::wall(std::size_t i) const {
  return {vertices_[i], vertices_[(i + 1) % vertices_.size()]};
}

bool Room::contains(const Vec2& p) const {
  const std::size_t n = vertices_.size();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = vertices_[i];
    const Vec2& b = vertices_[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
      if (p.x() < x) inside = !inside;
    }
  }
  return inside && distance_to_boundary(p) > 1e-12;
}

double Room::distance_to_boundary(const Vec2& p) const {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < wall_count(); ++i) d = std::min(d, point_segment_distance(p, wall(i)));
  return d;
}

bool Room::segment_clear(const Vec2& p, const Vec2& q, int ignore_a, int ignore_b) const {
  for (std::size_t w = 0; w < wall_count(); ++w) {
    const int wi = static_cast<int>(w);
    if (wi == ignore_a || wi == ignore_b) continue;
    double t = 0.0, u = 0.0;
    if (!intersect(p, q, wall(w), t, u)) continue;
    if (t > kEps && t < 1.0 - kEps && u >= -kEps && u <= 1.0 + kEps) return false;
  }
  return true;
}

Vec2 Room::bbox_min() const {
  Vec2 m = vertices_.front();
  for (const auto& v : vertices_) m = m.cwiseMin(v);
  return m;
}

Vec2 Room::bbox_max() const {
  Vec2 m = vertices_.front();
  for (const auto& v : vertices_) m = m.cwiseMax(v);
  return m;
}

Vec2 reflect_across(const Segment& wall, const Vec2& p) {
  const Vec2 d = (wall.b - wall.a).normalized();
  const Vec2 ap = p - wall.a;
  const Vec2 foot = wall.a + ap.dot(d) * d;
  return 2.0 * foot - p;
}

std::optional<std::vector<Vec2>> trace_specular_path(const Room& room, const Vec2& src,
                                                     const std::vector<int>& walls,
                                                     const Vec2& receiver) {
  const std::size_t k = walls.size();
  std::vector<Vec2> images(k + 1);
  images[0] = src;
  for (std::size_t i = 0; i < k; ++i) {
    images[i + 1] = reflect_across(room.wall(static_cast<std::size_t>(walls[i])), images[i]);
  }

  std::vector<Vec2> points(k);
  Vec2 p = receiver;
  int prev_wall = -1;
  for (std::size_t i = k; i-- > 0;) {
    const int w = walls[i];
    const Segment seg = room.wall(static_cast<std::size_t>(w));
    if (front_distance(seg, p) <= kEps) return std::nullopt;
    double t = 0.0, u = 0.0;
    if (!intersect(p, images[i + 1], seg, t, u)) return std::nullopt;
    if (t <= kEps || t > 1.0 + kEps || u < -kEps || u > 1.0 + kEps) return std::nullopt;
    const Vec2 q = p + t * (images[i + 1] - p);
    if (!room.segment_clear(p, q, w, prev_wall)) return std::nullopt;
    points[i] = q;
    p = q;
    prev_wall = w;
  }
  if (!room.segment_clear(p, src, prev_wall)) return std::nullopt;
  return points;
}

std::vector<ImageSource> compute_image_sources(const Room& room, const Vec2& src, int order,
                                               const std::optional<Vec2>& receiver) {
  require(room.contains(src), ErrorKind::Geometry, "image source: source outside room");
  require(order >= 0, ErrorKind::Config, "image source order must be non-negative");
  if (receiver) {
    require(room.contains(*receiver), ErrorKind::Geometry, "image source: receiver outside room");
  }
  ImageSource root;
  root.position = src;
  std::vector<ImageSource> all;
  expand_images(room, root, order, all);
  if (!receiver) return all;

  std::vector<ImageSource> visible;
  for (auto& img : all) {
    if (auto path = trace_specular_path(room, src, img.walls, *receiver)) {
      img.path = std::move(*path);
      visible.push_back(std::move(img));
    }
  }
  return visible;
}

Vec2 Device::speaker() const {
  return position + speaker_offset_m * Vec2(std::cos(heading_rad), std::sin(heading_rad));
}

Vec2 Device::mic() const {
  return position - mic_offset_m * Vec2(std::cos(heading_rad), std::sin(heading_rad));
}

double directivity_gain(double alpha, double theta) {
  return (1.0 - alpha) + alpha * std::cos(theta);
}

ImpulseResponse render_impulse_response(const Room& room, const Vec2& speaker, const Vec2& mic,
                                        double heading_rad, double alpha, int sample_rate_hz) {
  require(room.contains(speaker), ErrorKind::Geometry, "speaker outside room");
  require(room.contains(mic), ErrorKind::Geometry, "microphone outside room");
  const double fs = sample_rate_hz;
  const double c = room.speed_of_sound();

  auto angle_of = [heading_rad](const Vec2& d) {
    return std::atan2(d.y(), d.x()) - heading_rad;
  };
  auto make_tap = [&](double dist, double product, const Vec2& depart, const Vec2& arrive_from) {
    Tap tap;
    tap.delay_samples = dist / c * fs;
    tap.amplitude = product * directivity_gain(alpha, angle_of(depart)) *
                    directivity_gain(alpha, angle_of(arrive_from)) / std::max(dist, 0.1);
    return tap;
  };

  ImpulseResponse ir;
  if (room.segment_clear(speaker, mic)) {
    ir.taps.push_back(make_tap((mic - speaker).norm(), 1.0, mic - speaker, speaker - mic));
  }
  for (const auto& img : compute_image_sources(room, speaker, room.max_order(), mic)) {
    const double dist = (mic - img.position).norm();
    ir.taps.push_back(make_tap(dist, img.reflection_product, img.path.front() - speaker,
                               img.path.back() - mic));
  }
  std::stable_sort(ir.taps.begin(), ir.taps.end(),
                   [](const Tap& a, const Tap& b) { return a.delay_samples < b.delay_samples; });
  return ir;
}

ImpulseResponse render_impulse_response(const Room& room, const Device& dev, int sample_rate_hz) {
  return render_impulse_response(room, dev.speaker(), dev.mic(), dev.heading_rad,
                                 dev.directivity_alpha, sample_rate_hz);
}

dsp::Recording synthesize_recording(const ImpulseResponse& ir, const dsp::Recording& chirp,
                                    std::size_t length) {
  std::vector<double> acc(length, 0.0);
  const std::size_t m = chirp.samples.size();
  for (const auto& tap : ir.taps) {
    if (!std::isfinite(tap.delay_samples) || !std::isfinite(tap.amplitude) ||
        tap.delay_samples < 0.0) {
      fail(ErrorKind::Numeric, "impulse response tap is not finite");
    }
    const double base = std::floor(tap.delay_samples);
    const double frac = tap.delay_samples - base;
    const auto n0 = static_cast<std::size_t>(base);
    const double a0 = tap.amplitude * (1.0 - frac);
    const double a1 = tap.amplitude * frac;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t idx = n0 + i;
      if (idx >= length) break;
      acc[idx] += a0 * chirp.samples[i];
      if (idx + 1 < length) acc[idx + 1] += a1 * chirp.samples[i];
    }
  }
  dsp::Recording rec;
  rec.sample_rate_hz = chirp.sample_rate_hz;
  rec.samples.resize(length);
  for (std::size_t i = 0; i < length; ++i) rec.samples[i] = static_cast<float>(acc[i]);
  return rec;
}

dsp::EchoTrace simulate_echo(const Room& room, const Device& dev, const dsp::Recording& chirp,
                             std::uint64_t seed, const EchoSimConfig& cfg) {
  const auto ir = render_impulse_response(room, dev, chirp.sample_rate_hz);
  const auto rec = synthesize_recording(ir, chirp, cfg.recording_samples);
  auto trace = dsp::extract_echo_trace(rec, cfg.chirp, 0, cfg.trace_length);

  if (std::isfinite(dev.snr_db)) {
    double power = 0.0;
    for (float v : trace.samples) power += double(v) * v;
    power /= double(trace.samples.size());
    const double sigma = std::sqrt(power / std::pow(10.0, dev.snr_db / 10.0));
    Rng rng(derive_seed(seed, "echo-noise"));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (float& v : trace.samples) {
      v = static_cast<float>(std::clamp(double(v) + sigma * noise(rng), -1.0, 1.0));
    }
  } else {
    for (float& v : trace.samples) v = std::clamp(v, -1.0f, 1.0f);
  }
  return trace;
}

std::vector<Vec2> interior_grid(const Room& room, double spacing_m, double margin_m) {
  require(spacing_m > 0.0, ErrorKind::Config, "grid spacing must be positive");
  const Vec2 lo = room.bbox_min();
  const Vec2 hi = room.bbox_max();
  const auto nx = static_cast<long>(std::floor((hi.x() - lo.x()) / spacing_m + 1e-9));
  const auto ny = static_cast<long>(std::floor((hi.y() - lo.y()) / spacing_m + 1e-9));
  std::vector<Vec2> pts;
  for (long j = 0; j <= ny; ++j) {
    for (long i = 0; i <= nx; ++i) {
      const Vec2 p(lo.x() + double(i) * spacing_m, lo.y() + double(j) * spacing_m);
      if (room.contains(p) && room.distance_to_boundary(p) > margin_m) pts.push_back(p);
    }
  }
  return pts;
}

GridDataset synth_grid_dataset(const Room& room, const Device& device_template,
                               const GridConfig& grid, std::uint64_t seed,
                               const EchoSimConfig& sim) {
  require(!grid.orientations.empty(), ErrorKind::Config, "grid needs at least one orientation");
  const double margin = grid.wall_margin_m.value_or(
      std::max(device_template.speaker_offset_m, device_template.mic_offset_m));
  GridDataset ds;
  ds.spots = interior_grid(room, grid.spacing_m, margin);
  require(!ds.spots.empty(), ErrorKind::Config, "grid has no interior points");
  const auto chirp = dsp::generate_chirp(sim.chirp);

  ds.records.reserve(ds.spots.size() * grid.orientations.size() * grid.traces_per_pose);
  for (std::size_t s = 0; s < ds.spots.size(); ++s) {
    for (std::size_t o = 0; o < grid.orientations.size(); ++o) {
      for (std::size_t t = 0; t < grid.traces_per_pose; ++t) {
        const std::uint64_t task_seed = derive_seed(seed, "grid-trace", s, o, t);
        Rng rng(task_seed);
        std::uniform_real_distribution<double> jitter(-grid.heading_jitter_rad,
                                                      grid.heading_jitter_rad);
        Device dev = device_template;
        dev.position = ds.spots[s];
        dev.heading_rad = wrap_angle(grid.orientations[o] + jitter(rng));
        GridRecord rec;
        rec.spot_id = s;
        rec.orientation_idx = o;
        rec.position = dev.position;
        rec.heading_rad = dev.heading_rad;
        rec.trace = simulate_echo(room, dev, chirp, task_seed, sim);
        ds.records.push_back(std::move(rec));
      }
    }
  }
  return ds;
}

}  // namespace elfslam::room
