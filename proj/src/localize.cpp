#include "elfslam/localize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "elfslam/errors.hpp"

namespace elfslam::localize {

LocalizationMap LocalizationMap::from(const mapping::TrajectoryMap& m) {
  LocalizationMap lm;
  MapTrack track;
  for (const auto& n : m.nodes) track.nodes.push_back(n.translation());
  for (std::size_t s = 0; s < m.per_step_elfs.size(); ++s) {
    lm.entries.push_back({m.nodes.at(s).translation(), m.per_step_elfs[s]});
    track.steps.push_back(m.per_step_elfs[s]);
  }
  lm.tracks.push_back(std::move(track));
  return lm;
}

LocalizationMap LocalizationMap::from(const mapping::FloorMap& m) {
  LocalizationMap lm;
  for (const auto& s : m.spots) lm.entries.push_back({s.position, {s.floor_elf}});
  for (const auto& t : m.tracks) {
    MapTrack track;
    track.nodes = t.nodes;
    for (const auto& spots : t.step_spots) {
      loop::ElfList elfs;
      for (auto id : spots) elfs.push_back(m.spots.at(id).floor_elf);
      track.steps.push_back(std::move(elfs));
    }
    lm.tracks.push_back(std::move(track));
  }
  return lm;
}

loop::ElfList Query::flattened() const {
  loop::ElfList out;
  for (const auto& s : step_elfs) out.insert(out.end(), s.begin(), s.end());
  return out;
}

Estimate one_shot_localize(std::span<const model::Elf> query, const LocalizationMap& map,
                           const LocalizeConfig& cfg) {
  require(!map.entries.empty(), ErrorKind::Argument, "one-shot localization: empty map");
  require(!query.empty(), ErrorKind::Argument, "one-shot localization: empty query");
  Estimate best;
  best.score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < map.entries.size(); ++i) {
    const double s = loop::ess(query, map.entries[i].elfs);
    if (s > best.score) {
      best.score = s;
      best.entry = i;
      best.position = map.entries[i].position;
    }
  }
  best.low_confidence = best.score < cfg.low_confidence_ess;
  return best;
}

RigidFit procrustes_2d(std::span<const Vec2> src, std::span<const Vec2> dst) {
  require(src.size() == dst.size() && !src.empty(), ErrorKind::Argument,
          "procrustes: point sets differ in size");
  Vec2 cs = Vec2::Zero(), cd = Vec2::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= double(src.size());
  cd /= double(dst.size());
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec2 a = src[i] - cs, b = dst[i] - cd;
    sxx += a.dot(b);
    sxy += a.x() * b.y() - a.y() * b.x();
  }
  RigidFit fit;
  fit.rotation = std::atan2(sxy, sxx);
  const double c = std::cos(fit.rotation), s = std::sin(fit.rotation);
  const Eigen::Matrix2d r{{c, -s}, {s, c}};
  fit.translation = cd - r * cs;
  double ss = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    ss += (r * src[i] + fit.translation - dst[i]).squaredNorm();
  }
  fit.rmsd = std::sqrt(ss / double(src.size()));
  return fit;
}

Estimate trajectory_localize(const Query& q, const LocalizationMap& map,
                             const LocalizeConfig& cfg) {
  require(q.odometry.size() >= 2, ErrorKind::Argument,
          "trajectory localization needs at least 2 odometry edges");
  require(q.step_elfs.size() == q.odometry.size(), ErrorKind::Argument,
          "trajectory localization: one ELF group per odometry edge required");
  const auto dr = motion::dead_reckon(q.odometry);
  std::vector<Vec2> shape;
  for (const auto& p : dr) shape.push_back(p.translation());
  const std::size_t edges = q.odometry.size();

  Estimate best;
  best.score = -std::numeric_limits<double>::infinity();
  bool found = false;
  std::vector<Vec2> window(edges + 1);
  for (const auto& track : map.tracks) {
    if (track.nodes.size() < edges + 1 || track.steps.size() + 1 < edges + 1) continue;
    for (std::size_t s = 0; s + edges < track.nodes.size() && s + edges <= track.steps.size();
         ++s) {
      for (int dir = 0; dir < (cfg.allow_reversed_windows ? 2 : 1); ++dir) {
        const bool reversed = dir == 1;
        for (std::size_t k = 0; k <= edges; ++k) {
          window[k] = reversed ? track.nodes[s + edges - k] : track.nodes[s + k];
        }
        const auto fit = procrustes_2d(shape, window);
        if (!(fit.rmsd < cfg.curve_tol_m)) continue;
        double score = 0.0;
        for (std::size_t k = 0; k < edges; ++k) {
          const auto& map_step = reversed ? track.steps[s + edges - 1 - k] : track.steps[s + k];
          score += loop::ess(q.step_elfs[k], map_step);
        }
        score /= double(edges);
        if (score > best.score) {
          best.score = score;
          best.position = window[edges];
          found = true;
        }
      }
    }
  }
  if (!found) {
    const auto flat = q.flattened();
    auto est = one_shot_localize(flat, map, cfg);
    est.used_fallback = true;
    return est;
  }
  best.low_confidence = best.score < cfg.low_confidence_ess;
  return best;
}

double quantile(std::vector<double> values, double p) {
  require(!values.empty(), ErrorKind::Argument, "quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double h = (double(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - double(lo)) * (values[hi] - values[lo]);
}

ErrorStats error_stats(std::span<const Vec2> estimates, std::span<const Vec2> truth) {
  require(estimates.size() == truth.size(), ErrorKind::Argument,
          "error_stats: estimate and truth counts differ");
  require(!estimates.empty(), ErrorKind::Argument, "error_stats: no samples");
  ErrorStats st;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    st.errors.push_back((estimates[i] - truth[i]).norm());
  }
  st.mean = std::accumulate(st.errors.begin(), st.errors.end(), 0.0) / double(st.errors.size());
  st.median = quantile(st.errors, 0.5);
  st.q3 = quantile(st.errors, 0.75);
  return st;
}

}  // namespace elfslam::localize
