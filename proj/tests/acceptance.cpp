// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run everything
//   acceptance A1 A5      run a subset (shared mapping runs are built on demand)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "elfslam/elf_model.hpp"
#include "elfslam/localize.hpp"
#include "elfslam/loop_closure.hpp"
#include "elfslam/mapping.hpp"
#include "elfslam/motion.hpp"
#include "elfslam/pose_graph.hpp"
#include "elfslam/rng.hpp"
#include "elfslam/room_sim.hpp"
#include "elfslam/scenario.hpp"

using namespace elfslam;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) { return localize::quantile(std::move(v), 0.5); }

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

double median_node_error(const std::vector<Pose2>& est, const std::vector<Pose2>& truth) {
  std::vector<Vec2> a, b;
  for (std::size_t k = 0; k < est.size(); ++k) {
    a.push_back(est[k].translation());
    b.push_back(truth[k].translation());
  }
  return localize::error_stats(a, b).median;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

// Distance of a step offset from the nearest whole number of loop rounds.
std::size_t loop_phase_distance(std::size_t offset) {
  const std::size_t r = offset % scenario::kStepsPerRound;
  return std::min(r, scenario::kStepsPerRound - r);
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const char* id, const Outcome& o) {
  std::printf("%s %s %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& s) {
  std::fprintf(stderr, "  .. %s\n", s.c_str());
}

// ---------------------------------------------------------------------------
// Shared scene: pre-trained extractor and the ten A1 mapping runs.

constexpr std::uint64_t kPretrainSeed = 7;
constexpr int kPretrainSteps = 2000;
constexpr int kFinetuneSteps = 1200;
constexpr std::size_t kRounds = 3;
constexpr std::size_t kSeeds = 10;

struct MappingRun {
  std::uint64_t seed = 0;
  scenario::Survey survey;
  mapping::MapBuildResult result;
  double seconds = 0.0;
};

class Scene {
 public:
  const room::Room room = scenario::survey_room();
  const room::Device device{};

  const model::ModelParams& pretrained() {
    if (!pretrained_) {
      const auto t0 = Clock::now();
      const auto data = scenario::pretraining_set(scenario::pretraining_rooms(), device, {},
                                                  kPretrainSeed);
      auto tr = scenario::pretrain(data, scenario::desk_encoder(kPretrainSteps), kPretrainSeed);
      progress(fmt("pre-trained on %zu traces in %.0f s, loss %.3f -> %.3f", data.pool.size(),
                   seconds_since(t0), tr.losses.front(), tr.losses.back()));
      pretrain_seconds_ = seconds_since(t0);
      pretrained_ = std::move(tr.params);
    }
    return *pretrained_;
  }

  double pretrain_seconds() const { return pretrain_seconds_; }

  const MappingRun& run(std::uint64_t seed) {
    auto it = runs_.find(seed);
    if (it != runs_.end()) return it->second;
    const auto& base = pretrained();
    const auto t0 = Clock::now();
    MappingRun r;
    r.seed = seed;
    r.survey = scenario::survey(room, scenario::survey_walk(), kRounds, device, seed);
    const auto cfg = scenario::desk_map_config(r.survey, kFinetuneSteps, seed);
    r.result = mapping::build_trajectory_map(r.survey.traces, r.survey.walk.odometry, base, cfg);
    r.seconds = seconds_since(t0);
    progress(fmt("mapped seed %llu in %.0f s: %zu closures, DR %.2f m, optimised %.2f m",
                 static_cast<unsigned long long>(seed), r.seconds, r.result.closures.size(),
                 median_node_error(r.result.dead_reckoned, r.survey.walk.ground_truth),
                 median_node_error(r.result.map.nodes, r.survey.walk.ground_truth)));
    return runs_.emplace(seed, std::move(r)).first->second;
  }

 private:
  std::optional<model::ModelParams> pretrained_;
  double pretrain_seconds_ = 0.0;
  std::map<std::uint64_t, MappingRun> runs_;
};

// ---------------------------------------------------------------------------

Outcome a1(Scene& scene) {
  std::vector<double> dr, opt;
  double mapping_seconds = 0.0;
  for (std::uint64_t s = 0; s < kSeeds; ++s) {
    const auto& r = scene.run(s);
    dr.push_back(median_node_error(r.result.dead_reckoned, r.survey.walk.ground_truth));
    opt.push_back(median_node_error(r.result.map.nodes, r.survey.walk.ground_truth));
    mapping_seconds += r.seconds;
  }
  const double total = mapping_seconds + scene.pretrain_seconds();
  Outcome o;
  o.pass = median(dr) > 0.8 && median(opt) < 0.3 && total < 600.0;
  o.detail = fmt(
      "dead-reckoning median node error %.3f m (need > 0.8), optimised %.3f m (need < 0.3) "
      "over %zu seeds; runtime %.0f s incl. pre-training (need < 600)",
      median(dr), median(opt), kSeeds, total);
  return o;
}

// Off-loop cells: outside the band mask and at least 3 steps from any loop offset.
Outcome a2(Scene& scene) {
  std::vector<double> worst_margin, frac_ok;
  for (std::uint64_t s = 0; s < kSeeds; ++s) {
    const auto& m = scene.run(s).result.ess;
    const std::size_t n = std::size_t(m.rows());
    std::vector<double> off;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 20; j < n; ++j)
        if (loop_phase_distance(j - i) >= 3) off.push_back(m(Eigen::Index(i), Eigen::Index(j)));
    const double p95 = localize::quantile(off, 0.95);
    double worst = 1e9;
    std::size_t ok = 0, total = 0;
    for (std::size_t i = 0; i + scenario::kStepsPerRound < n; ++i) {
      std::vector<double> at;
      for (std::size_t j = i + scenario::kStepsPerRound; j < n; j += scenario::kStepsPerRound)
        at.push_back(m(Eigen::Index(i), Eigen::Index(j)));
      const double margin = mean(at) - p95;
      worst = std::min(worst, margin);
      ok += margin >= 0.1;
      ++total;
    }
    worst_margin.push_back(worst);
    frac_ok.push_back(double(ok) / double(total));
  }
  Outcome o;
  const double min_frac = *std::min_element(frac_ok.begin(), frac_ok.end());
  o.pass = min_frac == 1.0;
  o.detail = fmt(
      "loop ESS minus off-loop p95 >= 0.1 for %.1f%% of steps in the worst seed; smallest "
      "margin %.3f (median over seeds %.3f)",
      100.0 * min_frac, *std::min_element(worst_margin.begin(), worst_margin.end()),
      median(worst_margin));
  return o;
}

Outcome a3(Scene& scene) {
  std::vector<double> elf_c, psd_c, elf_loop, psd_loop;
  for (std::uint64_t s = 0; s < kSeeds; ++s) {
    const auto& r = scene.run(s);
    const auto& traces = r.survey.traces;
    const auto& elfs = r.result.map.per_step_elfs;
    std::vector<std::vector<Eigen::VectorXd>> psd(traces.size());
    for (std::size_t i = 0; i < traces.size(); ++i)
      for (const auto& t : traces[i]) {
        const auto p = dsp::compute_psd(t);
        psd[i].push_back(Eigen::Map<const Eigen::VectorXd>(p.data(), Eigen::Index(p.size())));
      }
    double el = 0, en = 0, pl = 0, pn = 0;
    std::size_t nl = 0, nn = 0;
    for (std::size_t i = 0; i < traces.size(); ++i)
      for (std::size_t j = i + 20; j < traces.size(); ++j) {
        const std::size_t d = loop_phase_distance(j - i);
        if (d != 0 && d < 3) continue;
        const std::size_t k = std::min(traces[i].size(), traces[j].size());
        for (std::size_t e = 0; e < k; ++e) {
          const double ce = elfs[i][e].dot(elfs[j][e]);
          const double cp = cosine(psd[i][e], psd[j][e]);
          if (d == 0) {
            el += ce, pl += cp, ++nl;
          } else {
            en += ce, pn += cp, ++nn;
          }
        }
      }
    elf_c.push_back(el / double(nl) - en / double(nn));
    psd_c.push_back(pl / double(nl) - pn / double(nn));
    psd_loop.push_back(pl / double(nl));
    elf_loop.push_back(el / double(nl));
  }
  Outcome o;
  o.pass = median(elf_c) >= 0.2 && median(psd_c) < 0.1;
  o.detail = fmt(
      "loop minus non-loop mean cosine: ELF %.3f (loop %.3f, need >= 0.2), PSD %.3f (loop "
      "%.3f, need < 0.1); medians over %zu seeds",
      median(elf_c), median(elf_loop), median(psd_c), median(psd_loop), kSeeds);
  return o;
}

Outcome a4() {
  constexpr std::size_t kCurationSeeds = 20;
  const auto walk_cfg = scenario::survey_walk();
  std::size_t line_total = 0, line_kept = 0, noise_total = 0, noise_kept = 0;
  std::vector<double> curated_err, uncurated_err;
  for (std::uint64_t seed = 0; seed < kCurationSeeds; ++seed) {
    const auto walk = motion::simulate_walk(walk_cfg, kRounds, derive_seed(seed, "a4-walk"));
    const auto n = Eigen::Index(walk.odometry.size());
    loop::BinaryMatrix bin = loop::BinaryMatrix::Constant(n, n, false);
    const auto per = Eigen::Index(scenario::kStepsPerRound);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + per; j < n; j += per) bin(i, j) = bin(j, i) = true;
    const loop::BinaryMatrix truth = bin;
    Rng rng(derive_seed(seed, "a4-noise"));
    std::bernoulli_distribution coin(0.05);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j && !truth(i, j) && coin(rng)) bin(i, j) = true;

    loop::CurationConfig cfg;
    cfg.seed = seed;
    const auto curated = loop::curate(bin, cfg);
    std::set<std::pair<std::size_t, std::size_t>> got(curated.begin(), curated.end());
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const bool kept = got.count({std::size_t(i), std::size_t(j)}) > 0;
        if (truth(i, j)) {
          ++line_total;
          line_kept += kept;
        } else if (bin(i, j)) {
          ++noise_total;
          noise_kept += kept;
        }
      }

    auto solve = [&](const loop::CandidateSet& closures) {
      graph::PoseGraph g;
      g.nodes = motion::dead_reckon(walk.odometry, walk.ground_truth.front());
      g.odo_edges = walk.odometry;
      for (const auto& [i, j] : closures) g.loop_edges.push_back({i, j});
      return median_node_error(graph::optimize(g).nodes, walk.ground_truth);
    };
    curated_err.push_back(solve(curated));
    uncurated_err.push_back(solve(loop::uncurated(bin)));
  }
  const double retained = double(line_kept) / double(line_total);
  const double removed = 1.0 - double(noise_kept) / double(noise_total);
  const double ratio = median(uncurated_err) / median(curated_err);
  Outcome o;
  o.pass = retained >= 0.9 && removed >= 0.95 && ratio >= 3.0;
  o.detail = fmt(
      "true pairs retained %.1f%% (need >= 90), false pairs removed %.1f%% (need >= 95); "
      "pose error uncurated %.3f m vs curated %.3f m = %.1fx (need >= 3) over %zu seeds",
      100.0 * retained, 100.0 * removed, median(uncurated_err), median(curated_err), ratio,
      kCurationSeeds);
  return o;
}

Outcome a5() {
  auto wc = scenario::survey_walk();
  wc.stride_sigma_m = 0.0;
  wc.heading_sigma_rad = 0.0;
  wc.heading_bias_rad = 0.0;
  wc.placement_sigma_m = 0.0;
  const auto walk = motion::simulate_walk(wc, kRounds, 5);
  graph::PoseGraph g;
  g.odo_edges = walk.odometry;
  // Start far from the answer so the solver has work to do.
  Rng rng(derive_seed(5, "a5-init"));
  std::normal_distribution<double> jitter(0.0, 0.3);
  g.nodes = walk.ground_truth;
  for (std::size_t k = 1; k < g.nodes.size(); ++k)
    g.nodes[k] = Pose2(g.nodes[k].x + jitter(rng), g.nodes[k].y + jitter(rng),
                       g.nodes[k].theta + 0.3 * jitter(rng));
  const std::size_t n = walk.ground_truth.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + scenario::kStepsPerRound; j < n; j += scenario::kStepsPerRound)
      g.loop_edges.push_back({i, j});
  graph::SolverConfig sc;
  sc.max_iterations = 200;
  const auto res = graph::optimize(g, sc);
  double worst_node = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    worst_node = std::max(worst_node,
                          (res.nodes[k].translation() - walk.ground_truth[k].translation()).norm());

  // Jacobians against central differences at random linearisation points.
  std::mt19937_64 g64(11);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  double worst_jac = 0.0;
  const double h = 1e-6;
  for (int t = 0; t < 200; ++t) {
    const Pose2 xi(u(g64), u(g64), u(g64)), uu(u(g64), u(g64), u(g64));
    const Pose2 xj = graph::motion_predict(xi, uu).compose(Pose2(0.2 * u(g64), 0.2 * u(g64), 0.3));
    Eigen::Matrix3d ji, jj;
    graph::odometry_jacobians(xi, xj, uu, ji, jj);
    for (int c = 0; c < 3; ++c) {
      auto bump = [&](Pose2 p, double d) {
        if (c == 0) p.x += d;
        if (c == 1) p.y += d;
        if (c == 2) p.theta += d;
        return p;
      };
      const Eigen::Vector3d di = (graph::odometry_residual(bump(xi, h), xj, uu) -
                                  graph::odometry_residual(bump(xi, -h), xj, uu)) / (2 * h);
      const Eigen::Vector3d dj = (graph::odometry_residual(xi, bump(xj, h), uu) -
                                  graph::odometry_residual(xi, bump(xj, -h), uu)) / (2 * h);
      worst_jac = std::max({worst_jac, (ji.col(c) - di).cwiseAbs().maxCoeff(),
                            (jj.col(c) - dj).cwiseAbs().maxCoeff()});
    }
    // loop residual p_j - p_i is linear: d/dp_i = -I, d/dp_j = I
    const Pose2 xi_up(xi.x + h, xi.y, xi.theta), xi_dn(xi.x - h, xi.y, xi.theta);
    const Eigen::Vector2d dl =
        (graph::loop_residual(xi_up, xj) - graph::loop_residual(xi_dn, xj)) / (2 * h);
    worst_jac = std::max(worst_jac, (dl - Eigen::Vector2d(-1.0, 0.0)).cwiseAbs().maxCoeff());
  }
  Outcome o;
  o.pass = worst_node <= 1e-6 && worst_jac <= 1e-6;
  o.detail = fmt(
      "noiseless odometry + exact closures from a perturbed start: max node error %.2e m "
      "(need <= 1e-6); max Jacobian deviation from central differences %.2e (need <= 1e-6)",
      worst_node, worst_jac);
  return o;
}

Outcome a6(Scene& scene) {
  double worst = 0.0, worst_fine = 0.0;
  std::size_t checked = 0;
  auto rel_error = [](double fd, double g) {
    return std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-8});
  };
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto& traces = scene.run(seed).survey.traces;
    std::vector<dsp::Spectrogram> pool;
    for (std::size_t s = 0; s < 8; ++s) pool.push_back(dsp::compute_spectrogram(traces[s * 20][0]));
    const auto params = model::ModelParams::initialize(scenario::desk_encoder(),
                                                       derive_seed(seed, "a6-init"));
    model::PairBatch batch;
    batch.slots = {0, 1, 2, 3, 4, 5, 6, 7};
    const std::span<const model::PairBatch> batches(&batch, 1);
    const double tau = params.config.temperature_tau;
    const auto grad = model::loss_gradient(params, pool, batches, tau);
    auto central = [&](std::size_t i, double eps) {
      auto a = params, b = params;
      a.values[i] += eps;
      b.values[i] -= eps;
      return (model::batch_loss(a, pool, batches, tau) - model::batch_loss(b, pool, batches, tau)) /
             (2 * eps);
    };
    // every bias and weight tensor contributes its first entry plus random entries
    std::set<std::size_t> coords;
    for (const auto& t : params.manifest) coords.insert(t.offset);
    Rng rng(derive_seed(seed, "a6-coords"));
    std::uniform_int_distribution<std::size_t> pick(0, params.values.size() - 1);
    while (coords.size() < 120) coords.insert(pick(rng));
    for (const auto i : coords) {
      worst = std::max(worst, rel_error(central(i, 1e-3), grad.gradient[i]));
      // a smaller step separates truncation error from a wrong derivative
      worst_fine = std::max(worst_fine, rel_error(central(i, 1e-5), grad.gradient[i]));
      ++checked;
    }
  }
  Outcome o;
  o.pass = worst <= 1e-4;
  o.detail = fmt(
      "max relative error of the analytic gradient vs central differences (float64, eps 1e-3) "
      "%.2e over %zu coordinates, 3 seeds (need <= 1e-4); info: same check with eps 1e-5 %.2e",
      worst, checked, worst_fine);
  return o;
}

// Trailing mean of the last `w` losses ending at each step.
std::vector<double> trailing_mean(const std::vector<double>& v, std::size_t w) {
  std::vector<double> out(v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc += v[i];
    if (i >= w) acc -= v[i - w];
    out[i] = acc / double(std::min(i + 1, w));
  }
  return out;
}

Outcome a7(Scene& scene) {
  constexpr int kScratchSteps = 2000;
  constexpr std::size_t kWindow = 100;
  std::vector<double> fractions;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto& r = scene.run(seed);
    const auto pool = mapping::spectrograms(r.survey.traces, {});
    const auto sampler = model::pair_consecutive(pool.size());
    const auto cfg = scenario::desk_encoder(kScratchSteps);
    const auto init = model::ModelParams::initialize(cfg, derive_seed(seed, "scratch-init"));
    // same batch sequence as the pre-trained fine-tune inside build_trajectory_map
    const auto scratch = model::train(init, *sampler, pool, cfg,
                                      derive_seed(seed, "finetune"));
    const double target = trailing_mean(scratch.losses, kWindow).back();
    const auto pre = trailing_mean(r.result.finetune_losses, kWindow);
    double frac = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pre.size(); ++i)
      if (pre[i] <= target) {
        frac = double(i + 1) / double(kScratchSteps);
        break;
      }
    fractions.push_back(frac);
    per_seed += fmt(" %.2f", frac);
    progress(fmt("A7 seed %llu: scratch loss %.3f -> %.3f; pre-trained start %.3f, fraction %.3f",
                 static_cast<unsigned long long>(seed), scratch.losses.front(), target,
                 r.result.finetune_losses.front(), frac));
  }

  // One-shot localisation on a grid floor map of the survey room, device facing +x.
  // The floor extractor is trained on synthetic grid traces of that room; the
  // extractor pre-trained on other rooms is reported alongside.
  scenario::PretrainSpec floor_spec;
  floor_spec.orientations = 1;
  const auto floor_data = scenario::pretraining_set({scene.room}, scene.device, floor_spec, 101);
  const auto floor_extractor =
      scenario::pretrain(floor_data, scenario::desk_encoder(kPretrainSteps), 101, floor_spec).params;
  room::GridConfig grid;
  grid.spacing_m = 0.25;
  grid.orientations = {0.0};
  grid.traces_per_pose = 6;
  const auto ds = room::synth_grid_dataset(scene.room, scene.device, grid, 102);
  std::vector<dsp::Spectrogram> specs;
  for (const auto& rec : ds.records) specs.push_back(dsp::compute_spectrogram(rec.trace));
  auto grid_map = [&](const model::ModelParams& p) {
    const auto elfs = model::encode_batch(p, specs);
    localize::LocalizationMap map;
    for (const auto& pos : ds.spots) map.entries.push_back({pos, {}});
    for (std::size_t i = 0; i < ds.records.size(); ++i)
      map.entries[ds.records[i].spot_id].elfs.push_back(elfs[i]);
    return map;
  };
  const auto map = grid_map(floor_extractor);
  const auto map_other = grid_map(scene.pretrained());

  const auto chirp = dsp::generate_chirp({});
  Rng rng(derive_seed(103, "a7-queries"));
  const Vec2 lo = scene.room.bbox_min(), hi = scene.room.bbox_max();
  std::uniform_real_distribution<double> ux(lo.x(), hi.x()), uy(lo.y(), hi.y());
  std::uniform_real_distribution<double> jitter(-grid.heading_jitter_rad, grid.heading_jitter_rad);
  std::vector<Vec2> est, est_other, truth;
  while (truth.size() < 200) {
    const Vec2 p(ux(rng), uy(rng));
    if (!scene.room.contains(p) || scene.room.distance_to_boundary(p) < 0.3) continue;
    std::vector<dsp::Spectrogram> q;
    for (int k = 0; k < 6; ++k) {
      room::Device dev = scene.device;
      dev.position = p;
      dev.heading_rad = jitter(rng);
      q.push_back(dsp::compute_spectrogram(room::simulate_echo(scene.room, dev, chirp, rng())));
    }
    est.push_back(localize::one_shot_localize(model::encode_batch(floor_extractor, q), map).position);
    est_other.push_back(
        localize::one_shot_localize(model::encode_batch(scene.pretrained(), q), map_other).position);
    truth.push_back(p);
  }
  const auto st = localize::error_stats(est, truth);
  const auto st_other = localize::error_stats(est_other, truth);

  Outcome o;
  const double med_frac = median(fractions);
  o.pass = med_frac <= 0.6 && st.median <= 0.25;
  o.detail = fmt(
      "pre-trained fine-tune reaches the scratch 2000-step loss after %.2f of the steps "
      "(median of 5 seeds:%s; need <= 0.60); in-orientation one-shot median error %.3f m "
      "(need <= 0.25); info: extractor trained on other rooms only %.3f m",
      med_frac, per_seed.c_str(), st.median, st_other.median);
  return o;
}

struct QueryWalk {
  scenario::Survey survey;
  std::vector<loop::ElfList> elfs;
};

QueryWalk query_walk(Scene& scene, bool reverse, std::uint64_t seed,
                     const model::ModelParams& extractor) {
  QueryWalk q;
  q.survey = scenario::survey(scene.room, scenario::survey_walk(reverse), 1, scene.device, seed);
  const auto specs = mapping::spectrograms(q.survey.traces, {});
  const auto flat = model::encode_batch(extractor, specs);
  std::size_t k = 0;
  for (const auto& step : q.survey.traces) {
    q.elfs.emplace_back();
    for (std::size_t e = 0; e < step.size(); ++e) q.elfs.back().push_back(flat[k++]);
  }
  return q;
}

// Mean true position of the echoes of step k.
Vec2 step_truth(const motion::Walk& w, std::size_t k) {
  Vec2 acc = Vec2::Zero();
  std::size_t n = 0;
  for (const auto& ep : w.echo_poses)
    if (ep.step_idx == k) acc += ep.pose.translation(), ++n;
  return acc / double(n);
}

double one_shot_median(const QueryWalk& q, const localize::LocalizationMap& map) {
  std::vector<Vec2> est, truth;
  for (std::size_t k = 0; k < q.elfs.size(); ++k) {
    est.push_back(localize::one_shot_localize(q.elfs[k], map).position);
    truth.push_back(step_truth(q.survey.walk, k));
  }
  return localize::error_stats(est, truth).median;
}

Outcome a8(Scene& scene) {
  constexpr std::size_t kA8Seeds = 3;
  std::vector<double> sim_before, sim_after, one_before, one_after, one_mixed, traj;
  for (std::uint64_t seed = 0; seed < kA8Seeds; ++seed) {
    const auto& fwd = scene.run(seed);
    // The same loop walked the other way round.
    const auto rev_survey = scenario::survey(scene.room, scenario::survey_walk(true), kRounds,
                                             scene.device, derive_seed(seed, "reverse"));
    const auto rev = mapping::build_trajectory_map(
        rev_survey.traces, rev_survey.walk.odometry, scene.pretrained(),
        scenario::desk_map_config(rev_survey, kFinetuneSteps, derive_seed(seed, "reverse")));
    // both maps are anchored at their true start, so they share the world frame
    const std::vector<mapping::TrajectoryMap> maps{fwd.result.map, rev.map};

    const auto& base = fwd.result.extractor;
    mapping::SuperimposeConfig sc;
    sc.retrain = scenario::desk_encoder(1000);
    sc.seed = seed;
    const auto sup = mapping::superimpose(maps, base, sc);

    // same-spot similarity between the two walking directions
    const auto specs = [&] {
      auto a = mapping::spectrograms(maps[0].per_step_traces, {});
      auto b = mapping::spectrograms(maps[1].per_step_traces, {});
      a.insert(a.end(), b.begin(), b.end());
      return a;
    }();
    const std::size_t n_fwd = mapping::spectrograms(maps[0].per_step_traces, {}).size();
    auto cross_similarity = [&](const model::ModelParams& p) {
      const auto e = model::encode_batch(p, specs);
      std::map<std::size_t, std::pair<Eigen::VectorXd, Eigen::VectorXd>> acc;
      for (std::size_t t = 0; t < e.size(); ++t) {
        auto& slot = acc[sup.trace_spots[t]];
        auto& v = t < n_fwd ? slot.first : slot.second;
        if (v.size() == 0) v = Eigen::VectorXd::Zero(e[t].size());
        v += e[t];
      }
      std::vector<double> sims;
      for (const auto& [spot, pr] : acc)
        if (pr.first.size() && pr.second.size()) sims.push_back(cosine(pr.first, pr.second));
      return mean(sims);
    };
    sim_before.push_back(cross_similarity(base));
    sim_after.push_back(cross_similarity(sup.extractor));

    // Queries walked against the forward map's direction.
    const std::uint64_t qseed = derive_seed(seed, "query");
    const auto q_base = query_walk(scene, true, qseed, base);
    const auto q_sup = query_walk(scene, true, qseed, sup.extractor);
    one_before.push_back(one_shot_median(q_base, localize::LocalizationMap::from(maps[0])));
    const auto floor_view = localize::LocalizationMap::from(sup.floor);
    one_after.push_back(one_shot_median(q_sup, floor_view));
    // ablation: both maps, un-superimposed extractor
    one_mixed.push_back(one_shot_median(
        q_base, localize::LocalizationMap::from(mapping::build_floor_map(maps, base, sc.grid_m))));

    std::vector<Vec2> est, truth;
    const auto& w = q_sup.survey.walk;
    for (std::size_t k = 0; k + 8 <= w.odometry.size(); ++k) {
      localize::Query q;
      q.odometry.assign(w.odometry.begin() + std::ptrdiff_t(k), w.odometry.begin() + std::ptrdiff_t(k + 8));
      for (std::size_t i = 0; i < 8; ++i) {
        q.odometry[i].from_idx = i;
        q.odometry[i].to_idx = i + 1;
        q.step_elfs.push_back(q_sup.elfs[k + i]);
      }
      est.push_back(localize::trajectory_localize(q, floor_view).position);
      truth.push_back(w.ground_truth[k + 8].translation());
    }
    traj.push_back(localize::error_stats(est, truth).median);
    progress(fmt("A8 seed %llu: similarity %.3f -> %.3f; one-shot %.3f -> %.3f m (both maps, base "
                 "extractor %.3f m); trajectory %.3f m",
                 static_cast<unsigned long long>(seed), sim_before.back(), sim_after.back(),
                 one_before.back(), one_after.back(), one_mixed.back(), traj.back()));
  }
  const double gain = median(sim_after) - median(sim_before);
  const double improvement = median(one_before) / median(one_after);
  Outcome o;
  o.pass = gain >= 0.2 && improvement >= 2.0 && median(traj) <= 0.5;
  o.detail = fmt(
      "cross-orientation same-spot similarity %.3f -> %.3f (gain %.3f, need >= 0.2); "
      "cross-orientation one-shot median %.3f -> %.3f m (%.1fx, need >= 2); 8-step trajectory "
      "median %.3f m (need <= 0.5); medians over %zu seeds",
      median(sim_before), median(sim_after), gain, median(one_before), median(one_after),
      improvement, median(traj), kA8Seeds);
  return o;
}

// Brute-force image enumeration: every wall sequence without immediate
// repeats, mirrored step by step, kept when the unfolded path is valid.
std::vector<Vec2> brute_force_images(const room::Room& r, const Vec2& src, const Vec2& rcv,
                                     int order) {
  std::vector<Vec2> out;
  std::vector<int> seq;
  auto rec = [&](auto&& self, const Vec2& img, int depth) -> void {
    if (depth > 0 && room::trace_specular_path(r, src, seq, rcv)) out.push_back(img);
    if (depth == order) return;
    for (int w = 0; w < int(r.wall_count()); ++w) {
      if (!seq.empty() && seq.back() == w) continue;
      seq.push_back(w);
      self(self, room::reflect_across(r.wall(std::size_t(w)), img), depth + 1);
      seq.pop_back();
    }
  };
  rec(rec, src, 0);
  return out;
}

Outcome a9() {
  std::mt19937_64 g(9);
  const room::Room box = room::Room::rectangle(8.0, 6.0);
  std::uniform_real_distribution<double> ux(0.2, 7.8), uy(0.2, 5.8);
  double worst_delay = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Vec2 s(ux(g), uy(g)), m(ux(g), uy(g));
    const auto ir = room::render_impulse_response(box, s, m, 0.0, 0.0, 44100);
    const double want = (s - m).norm() / box.speed_of_sound() * 44100.0;
    double best = 1e9;
    for (const auto& tap : ir.taps) best = std::min(best, std::abs(tap.delay_samples - want));
    worst_delay = std::max(worst_delay, best);
  }
  const std::size_t order1 = room::compute_image_sources(box, Vec2(2.0, 3.0), 1).size();

  const std::vector<room::Room> rooms{
      box, room::Room({{0, 0}, {6, 0}, {6, 3}, {3, 3}, {3, 5}, {0, 5}}, std::vector<double>(6, 0.8))};
  std::size_t trials = 0, matches = 0;
  for (const auto& r : rooms) {
    const Vec2 lo = r.bbox_min(), hi = r.bbox_max();
    std::uniform_real_distribution<double> px(lo.x(), hi.x()), py(lo.y(), hi.y());
    int done = 0;
    while (done < 20) {
      const Vec2 s(px(g), py(g)), m(px(g), py(g));
      if (!r.contains(s) || !r.contains(m)) continue;
      auto got = room::compute_image_sources(r, s, 2, m);
      std::vector<Vec2> have;
      for (const auto& im : got)
        if (im.order > 0) have.push_back(im.position);
      auto want = brute_force_images(r, s, m, 2);
      auto less = [](const Vec2& a, const Vec2& b) {
        return a.x() < b.x() - 1e-9 || (std::abs(a.x() - b.x()) <= 1e-9 && a.y() < b.y());
      };
      std::sort(have.begin(), have.end(), less);
      std::sort(want.begin(), want.end(), less);
      bool same = have.size() == want.size();
      for (std::size_t k = 0; same && k < have.size(); ++k) same = (have[k] - want[k]).norm() < 1e-9;
      matches += same;
      ++trials;
      ++done;
    }
  }
  Outcome o;
  o.pass = worst_delay <= 1.0 && order1 == 4 && matches == trials;
  o.detail = fmt(
      "direct-path delay error max %.2e samples over 100 geometries (need <= 1); rectangle "
      "order-1 images %zu (need 4); order <= 2 image sets equal brute force in %zu/%zu layouts",
      worst_delay, order1, matches, trials);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> want;
  for (int i = 1; i < argc; ++i) want.insert(argv[i]);
  auto on = [&](const char* id) { return want.empty() || want.count(id) > 0; };

  const auto t0 = Clock::now();
  Scene scene;
  if (on("A1")) report("A1", a1(scene));
  if (on("A2")) report("A2", a2(scene));
  if (on("A3")) report("A3", a3(scene));
  if (on("A4")) report("A4", a4());
  if (on("A5")) report("A5", a5());
  if (on("A6")) report("A6", a6(scene));
  if (on("A7")) report("A7", a7(scene));
  if (on("A8")) report("A8", a8(scene));
  if (on("A9")) report("A9", a9());
  std::printf("acceptance: %d failing, %.0f s\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
