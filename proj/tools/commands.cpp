#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "cli.hpp"
#include "io.hpp"
#include "run_config.hpp"
#include "svg.hpp"

#include "elfslam/localize.hpp"
#include "elfslam/mapping.hpp"
#include "elfslam/scenario.hpp"

namespace elfslam::cli {

namespace fs = std::filesystem;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Geometry:
    case ErrorKind::Argument:
    case ErrorKind::Sampling:
      return kExitConfig;
    case ErrorKind::Data:
    case ErrorKind::Io:
    case ErrorKind::Length:
    case ErrorKind::Shape:
    case ErrorKind::Sequence:
      return kExitData;
    case ErrorKind::Numeric:
    case ErrorKind::Training:
    case ErrorKind::Solver:
      return kExitNumeric;
  }
  return kExitData;
}

namespace {

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  long long seed = -1;
  std::string out_dir;
  int threads = 1;
};

struct Context {
  RunConfig cfg;
  fs::path out;
  std::ostream* log = nullptr;

  fs::path file(const std::string& name) const { return out / name; }
};

Context make_context(const Globals& g, std::ostream& log) {
  Context ctx;
  if (!g.config_path.empty()) ctx.cfg = RunConfig::load(g.config_path);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, ErrorKind::Config, "--set expects key=value, got '" + kv + "'");
    ctx.cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed >= 0) ctx.cfg.set("seeds.root", std::to_string(g.seed));
  ctx.cfg.validate();
  require(g.threads >= 1, ErrorKind::Config, "--threads must be >= 1");
  Eigen::setNbThreads(g.threads);
  ctx.out = g.out_dir.empty() ? fs::path(ctx.cfg.get("paths.out")) : fs::path(g.out_dir);
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  require(!ec, ErrorKind::Io, "cannot create output directory " + ctx.out.string());
  ctx.log = &log;
  return ctx;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(bool(out), ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

void write_losses(const fs::path& path, const std::vector<double>& losses) {
  std::ostringstream o;
  o << "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) o << i << "," << fmt(losses[i]) << "\n";
  write_file(path, o.str());
}

model::ModelParams load_model(const std::string& path) { return model::load_params(path); }

std::vector<dsp::Spectrogram> spectrograms_of(const std::vector<EchoRecord>& records) {
  std::vector<dsp::Spectrogram> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(dsp::compute_spectrogram(r.trace));
  return out;
}

// ---------------------------------------------------------------------------

Dataset synth_grid(const Context& ctx) {
  const auto rooms = ctx.cfg.pretrain_rooms();
  const auto spec = ctx.cfg.pretrain_spec();
  const auto dev = ctx.cfg.device();
  room::GridConfig grid;
  grid.spacing_m = spec.spacing_m;
  grid.traces_per_pose = spec.traces_per_pose;
  grid.orientations.clear();
  for (int o = 0; o < spec.orientations; ++o)
    grid.orientations.push_back(2.0 * std::numbers::pi * o / spec.orientations);
  Dataset ds;
  ds.kind = Dataset::Kind::Grid;
  ds.config = ctx.cfg.dump();
  for (std::size_t r = 0; r < rooms.size(); ++r) {
    const auto g = room::synth_grid_dataset(
        rooms[r], dev, grid, derive_seed(ctx.cfg.seed(), "synth-grid", r), ctx.cfg.echo_sim());
    for (const auto& rec : g.records) {
      EchoRecord e;
      e.step_idx = ds.records.size();
      e.pose = Pose2(rec.position.x(), rec.position.y(), rec.heading_rad);
      e.heading = grid.orientations[rec.orientation_idx];
      e.trace = rec.trace;
      e.spot_id = rec.spot_id;
      e.room = r;
      e.group = int(rec.orientation_idx);
      ds.records.push_back(std::move(e));
    }
  }
  return ds;
}

Dataset synth_walk(const Context& ctx) {
  const auto s = scenario::survey(ctx.cfg.survey_room(), ctx.cfg.walk(), ctx.cfg.rounds(),
                                  ctx.cfg.device(), derive_seed(ctx.cfg.seed(), "synth-walk"),
                                  ctx.cfg.echo_sim());
  Dataset ds;
  ds.kind = Dataset::Kind::Walk;
  ds.config = ctx.cfg.dump();
  ds.nodes = s.walk.ground_truth;
  ds.odometry = s.walk.odometry;
  for (const auto& ep : s.walk.echo_poses) {
    EchoRecord e;
    e.step_idx = ep.step_idx;
    e.echo_idx = ep.echo_idx;
    e.pose = ep.pose;
    e.heading = ep.pose.theta;
    e.trace = s.traces.at(ep.step_idx).at(ep.echo_idx);
    ds.records.push_back(std::move(e));
  }
  return ds;
}

int cmd_config(const Context& ctx, bool check, std::ostream& out) {
  if (check) {
    out << "config ok\n";
  } else {
    out << ctx.cfg.dump();
  }
  return kExitOk;
}

int cmd_synth(const Context& ctx, const std::string& what, const std::string& name) {
  require(what == "all" || what == "pretrain" || what == "walk", ErrorKind::Config,
          "synth --what must be all, pretrain or walk");
  if (what != "walk") {
    const auto ds = synth_grid(ctx);
    const auto path = ctx.file(what == "pretrain" && !name.empty() ? name : "pretrain.jsonl");
    write_dataset(path.string(), ds);
    *ctx.log << "synth: " << ds.records.size() << " grid traces -> " << path.string() << "\n";
  }
  if (what != "pretrain") {
    const auto ds = synth_walk(ctx);
    const auto path = ctx.file(what == "walk" && !name.empty() ? name : "walk.jsonl");
    write_dataset(path.string(), ds);
    *ctx.log << "synth: " << ds.nodes.size() << " footsteps, " << ds.records.size()
             << " echoes -> " << path.string() << "\n";
  }
  return kExitOk;
}

int cmd_pretrain(const Context& ctx, const std::string& data) {
  const auto ds = read_dataset(data);
  require(ds.kind == Dataset::Kind::Grid, ErrorKind::Data, data + ": pretrain needs a grid dataset");
  require(!ds.records.empty(), ErrorKind::Data, data + ": dataset has no traces");
  scenario::PretrainSet set;
  set.pool = spectrograms_of(ds.records);
  // rooms are kept 1 km apart so no positive pair crosses rooms
  for (const auto& r : ds.records) {
    set.positions.push_back(r.pose.translation() + Vec2(1000.0 * double(r.room), 0.0));
    set.groups.push_back(r.group);
  }
  const int steps = int(ctx.cfg.integer("model.pretrain_steps"));
  const auto res = scenario::pretrain(set, ctx.cfg.encoder(steps),
                                      derive_seed(ctx.cfg.seed(), "pretrain"), ctx.cfg.pretrain_spec());
  model::save_params(ctx.file("pretrained.bin").string(), res.params);
  write_losses(ctx.file("pretrain_loss.csv"), res.losses);
  *ctx.log << "pretrain: " << steps << " steps";
  if (!res.losses.empty()) *ctx.log << ", loss " << fmt(res.losses.front()) << " -> " << fmt(res.losses.back());
  *ctx.log << " -> " << ctx.file("pretrained.bin").string() << "\n";
  return kExitOk;
}

int cmd_finetune(const Context& ctx, const std::string& data, const std::string& model_path,
                 int steps) {
  const auto ds = read_dataset(data);
  const auto traces = ds.step_traces();
  const auto pool = mapping::spectrograms(traces, {});
  require(pool.size() >= 2, ErrorKind::Data, data + ": need at least two echoes");
  const auto init = load_model(model_path);
  if (steps < 0) steps = int(ctx.cfg.integer("model.finetune_steps"));
  auto cfg = init.config;
  const auto desired = ctx.cfg.encoder(steps);
  cfg.temperature_tau = desired.temperature_tau;
  cfg.batch_pairs_M = desired.batch_pairs_M;
  cfg.learning_rate = desired.learning_rate;
  cfg.steps = steps;
  const auto sampler = model::pair_consecutive(pool.size());
  const auto res = model::train(init, *sampler, pool, cfg, derive_seed(ctx.cfg.seed(), "finetune"));
  model::save_params(ctx.file("finetuned.bin").string(), res.params);
  write_losses(ctx.file("finetune_loss.csv"), res.losses);
  *ctx.log << "finetune: " << steps << " steps -> " << ctx.file("finetuned.bin").string() << "\n";
  return kExitOk;
}

int cmd_map(const Context& ctx, const std::string& data, const std::string& model_path) {
  const auto ds = read_dataset(data);
  const auto traces = ds.step_traces();
  const auto base = load_model(model_path);
  mapping::MapBuildConfig mc;
  mc.finetune = ctx.cfg.encoder(int(ctx.cfg.integer("model.finetune_steps")));
  mc.curation = ctx.cfg.curation();
  mc.solver = ctx.cfg.solver();
  mc.loop_sigma_m = ctx.cfg.real("solver.loop_sigma_m");
  if (!ds.nodes.empty()) mc.initial_pose = ds.nodes.front();
  mc.seed = derive_seed(ctx.cfg.seed(), "map");
  const auto res = mapping::build_trajectory_map(traces, ds.odometry, base, mc);

  write_trajectory_map(ctx.file("map.json").string(), res.map);
  model::save_params(ctx.file("extractor.bin").string(), res.extractor);
  write_losses(ctx.file("finetune_loss.csv"), res.finetune_losses);

  std::ostringstream traj;
  traj << "step,gt_x,gt_y,dr_x,dr_y,opt_x,opt_y\n";
  for (std::size_t k = 0; k < res.map.nodes.size(); ++k) {
    const Pose2 gt = k < ds.nodes.size() ? ds.nodes[k] : Pose2();
    traj << k << "," << fmt(gt.x) << "," << fmt(gt.y) << "," << fmt(res.dead_reckoned[k].x) << ","
         << fmt(res.dead_reckoned[k].y) << "," << fmt(res.map.nodes[k].x) << ","
         << fmt(res.map.nodes[k].y) << "\n";
  }
  write_file(ctx.file("trajectory.csv"), traj.str());

  std::ostringstream ess;
  for (Eigen::Index j = 0; j < res.ess.cols(); ++j) ess << (j ? "," : "") << "s" << j;
  ess << "\n";
  for (Eigen::Index i = 0; i < res.ess.rows(); ++i) {
    for (Eigen::Index j = 0; j < res.ess.cols(); ++j) ess << (j ? "," : "") << fmt(res.ess(i, j));
    ess << "\n";
  }
  write_file(ctx.file("ess.csv"), ess.str());

  std::ostringstream cl;
  cl << "i,j\n";
  for (const auto& [i, j] : res.closures) cl << i << "," << j << "\n";
  write_file(ctx.file("closures.csv"), cl.str());

  if (res.status == mapping::MapStatus::NoLoopClosures)
    *ctx.log << "map: warning: no loop closures found, map is dead-reckoned\n";
  *ctx.log << "map: " << res.map.nodes.size() << " nodes, " << res.closures.size()
           << " closures -> " << ctx.file("map.json").string() << "\n";
  return kExitOk;
}

int cmd_superimpose(const Context& ctx, const std::vector<std::string>& map_paths,
                    const std::string& model_path) {
  require(!map_paths.empty(), ErrorKind::Config, "superimpose needs at least one --maps file");
  std::vector<mapping::TrajectoryMap> maps;
  for (const auto& p : map_paths) maps.push_back(read_trajectory_map(p));
  const auto base = load_model(model_path);
  mapping::SuperimposeConfig sc;
  sc.grid_m = ctx.cfg.real("localization.grid_m");
  sc.retrain = ctx.cfg.encoder(int(ctx.cfg.integer("model.retrain_steps")));
  sc.seed = derive_seed(ctx.cfg.seed(), "superimpose");
  const auto res = mapping::superimpose(maps, base, sc);
  write_floor_map(ctx.file("floor.json").string(), res.floor);
  model::save_params(ctx.file("floor_model.bin").string(), res.extractor);
  write_losses(ctx.file("retrain_loss.csv"), res.losses);
  *ctx.log << "superimpose: " << maps.size() << " maps, " << res.floor.spots.size()
           << " spots -> " << ctx.file("floor.json").string() << "\n";
  return kExitOk;
}

void write_stats(const fs::path& path, const localize::ErrorStats& st) {
  std::ostringstream o;
  o << "count,median_m,mean_m,q3_m\n"
    << st.errors.size() << "," << fmt(st.median) << "," << fmt(st.mean) << "," << fmt(st.q3) << "\n";
  write_file(path, o.str());
}

int cmd_localize(const Context& ctx, const std::string& map_path, const std::string& model_path,
                 const std::string& data) {
  const auto params = load_model(model_path);
  const auto kind = map_kind(map_path);
  localize::LocalizationMap map;
  std::string version;
  if (kind == "trajectory") {
    const auto m = read_trajectory_map(map_path);
    version = m.extractor_version;
    map = localize::LocalizationMap::from(m);
  } else {
    const auto m = read_floor_map(map_path);
    version = m.extractor_version;
    map = localize::LocalizationMap::from(m);
  }
  require(version == params.version(), ErrorKind::Data,
          "map was built with extractor " + version + " but the model is " + params.version());

  const auto ds = read_dataset(data);
  const auto traces = ds.step_traces();
  const auto elfs_flat = model::encode_batch(params, mapping::spectrograms(traces, {}));
  std::vector<loop::ElfList> step_elfs;
  std::vector<Vec2> step_truth;
  std::size_t k = 0;
  for (std::size_t s = 0; s < traces.size(); ++s) {
    step_elfs.emplace_back();
    Vec2 acc = Vec2::Zero();
    for (std::size_t e = 0; e < traces[s].size(); ++e, ++k) {
      step_elfs.back().push_back(elfs_flat[k]);
      acc += ds.records[k].pose.translation();
    }
    step_truth.push_back(acc / double(traces[s].size()));
  }

  const auto lc = ctx.cfg.localization();
  const bool trajectory = ctx.cfg.get("localization.mode") == "trajectory";
  const auto window = std::size_t(ctx.cfg.integer("localization.window_steps"));
  std::vector<localize::Estimate> est;
  std::vector<Vec2> truth;
  if (!trajectory) {
    for (std::size_t s = 0; s < step_elfs.size(); ++s) {
      est.push_back(localize::one_shot_localize(step_elfs[s], map, lc));
      truth.push_back(step_truth[s]);
    }
  } else {
    require(ds.odometry.size() >= window, ErrorKind::Data,
            data + ": fewer odometry edges than localization.window_steps");
    require(ds.nodes.size() == ds.odometry.size() + 1, ErrorKind::Data,
            data + ": trajectory queries need ground-truth nodes");
    for (std::size_t s = 0; s + window <= ds.odometry.size() && s + window <= step_elfs.size(); ++s) {
      localize::Query q;
      for (std::size_t i = 0; i < window; ++i) {
        auto e = ds.odometry[s + i];
        e.from_idx = i;
        e.to_idx = i + 1;
        q.odometry.push_back(e);
        q.step_elfs.push_back(step_elfs[s + i]);
      }
      est.push_back(localize::trajectory_localize(q, map, lc));
      truth.push_back(ds.nodes[s + window].translation());
    }
  }
  std::vector<Vec2> pos;
  for (const auto& e : est) pos.push_back(e.position);
  const auto st = localize::error_stats(pos, truth);

  std::ostringstream o;
  o << "query,est_x,est_y,true_x,true_y,error_m,score,low_confidence,fallback\n";
  for (std::size_t i = 0; i < est.size(); ++i)
    o << i << "," << fmt(est[i].position.x()) << "," << fmt(est[i].position.y()) << ","
      << fmt(truth[i].x()) << "," << fmt(truth[i].y()) << "," << fmt(st.errors[i]) << ","
      << fmt(est[i].score) << "," << int(est[i].low_confidence) << "," << int(est[i].used_fallback)
      << "\n";
  write_file(ctx.file("results.csv"), o.str());
  write_stats(ctx.file("stats.csv"), st);
  *ctx.log << "localize: " << est.size() << " queries, median " << fmt(st.median) << " m, mean "
           << fmt(st.mean) << " m, q3 " << fmt(st.q3) << " m\n";
  return kExitOk;
}

int cmd_eval(const Context& ctx, const std::string& results, const std::string& trajectory) {
  require(!results.empty() || !trajectory.empty(), ErrorKind::Config,
          "eval needs --results and/or --trajectory");
  if (!results.empty()) {
    const auto t = read_csv(results);
    require(!t.rows.empty(), ErrorKind::Data, results + ": no rows");
    const auto ex = t.column("est_x"), ey = t.column("est_y");
    const auto tx = t.column("true_x"), ty = t.column("true_y");
    std::vector<Vec2> est, truth;
    for (const auto& r : t.rows) {
      est.emplace_back(r[ex], r[ey]);
      truth.emplace_back(r[tx], r[ty]);
    }
    const auto st = localize::error_stats(est, truth);
    write_stats(ctx.file("eval_stats.csv"), st);
    *ctx.log << "eval: localization median " << fmt(st.median) << " m, mean " << fmt(st.mean)
             << " m, q3 " << fmt(st.q3) << " m over " << st.errors.size() << " queries\n";
  }
  if (!trajectory.empty()) {
    const auto t = read_csv(trajectory);
    require(!t.rows.empty(), ErrorKind::Data, trajectory + ": no rows");
    std::vector<Vec2> gt, dr, opt;
    for (const auto& r : t.rows) {
      gt.emplace_back(r[t.column("gt_x")], r[t.column("gt_y")]);
      dr.emplace_back(r[t.column("dr_x")], r[t.column("dr_y")]);
      opt.emplace_back(r[t.column("opt_x")], r[t.column("opt_y")]);
    }
    const auto sd = localize::error_stats(dr, gt), so = localize::error_stats(opt, gt);
    std::ostringstream o;
    o << "estimate,count,median_m,mean_m,q3_m\n"
      << "dead_reckoned," << sd.errors.size() << "," << fmt(sd.median) << "," << fmt(sd.mean) << ","
      << fmt(sd.q3) << "\n"
      << "optimized," << so.errors.size() << "," << fmt(so.median) << "," << fmt(so.mean) << ","
      << fmt(so.q3) << "\n";
    write_file(ctx.file("trajectory_stats.csv"), o.str());
    *ctx.log << "eval: mapping median node error dead-reckoned " << fmt(sd.median)
             << " m, optimized " << fmt(so.median) << " m\n";
  }
  return kExitOk;
}

int cmd_plot(const Context& ctx, const std::string& kind, const std::vector<std::string>& inputs,
             std::string output) {
  require(!inputs.empty(), ErrorKind::Config, "plot needs at least one --input");
  std::string svg;
  if (kind == "ess") {
    svg = svg_heatmap(read_csv(inputs.front()));
  } else if (kind == "trajectory") {
    svg = svg_trajectory(read_csv(inputs.front()));
  } else if (kind == "cdf") {
    std::vector<Table> tables;
    for (const auto& p : inputs) tables.push_back(read_csv(p));
    svg = svg_error_cdf(tables, inputs);
  } else {
    fail(ErrorKind::Config, "plot --kind must be ess, trajectory or cdf");
  }
  if (output.empty()) output = ctx.file(kind + ".svg").string();
  write_file(output, svg);
  *ctx.log << "plot: " << kind << " -> " << output << "\n";
  return kExitOk;
}

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Echo-based indoor SLAM: synthesis, training, mapping and localization", "elfslam"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "run configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "override a config key, key=value (repeatable)");
  app.add_option("--seed", g.seed, "root seed (overrides seeds.root)");
  app.add_option("--out", g.out_dir, "output directory (overrides paths.out)");
  app.add_option("--threads", g.threads, "worker threads for linear algebra");

  bool check = false;
  auto* config = app.add_subcommand("config", "print the effective configuration");
  config->add_flag("--dump", "print every key with its value (default)");
  config->add_flag("--check", check, "only validate");

  std::string what = "all", name;
  auto* synth = app.add_subcommand("synth", "simulate pre-training grids and a survey walk");
  synth->add_option("--what", what, "all | pretrain | walk");
  synth->add_option("--name", name, "output file name when a single dataset is written");

  std::string data, model_path;
  int steps = -1;
  auto* pretrain = app.add_subcommand("pretrain", "contrastive pre-training on a grid dataset");
  pretrain->add_option("--data", data, "grid dataset")->required();

  auto* finetune = app.add_subcommand("finetune", "fine-tune on consecutive echoes of a walk");
  finetune->add_option("--data", data, "walk dataset")->required();
  finetune->add_option("--model", model_path, "initial model")->required();
  finetune->add_option("--steps", steps, "training steps (default model.finetune_steps)");

  auto* map = app.add_subcommand("map", "build a trajectory map from a walk");
  map->add_option("--data", data, "walk dataset")->required();
  map->add_option("--model", model_path, "pre-trained model")->required();

  std::vector<std::string> maps;
  auto* sup = app.add_subcommand("superimpose", "merge trajectory maps into a floor map");
  sup->add_option("--maps", maps, "trajectory map files")->required();
  sup->add_option("--model", model_path, "base extractor")->required();

  std::string map_path;
  auto* loc = app.add_subcommand("localize", "localize the steps of a query walk");
  loc->add_option("--map", map_path, "trajectory or floor map")->required();
  loc->add_option("--model", model_path, "extractor the map was built with")->required();
  loc->add_option("--data", data, "query walk dataset")->required();

  std::string results, trajectory;
  auto* eval = app.add_subcommand("eval", "error statistics from localize or map outputs");
  eval->add_option("--results", results, "results.csv from localize");
  eval->add_option("--trajectory", trajectory, "trajectory.csv from map");

  std::string kind, output;
  std::vector<std::string> inputs;
  auto* plot = app.add_subcommand("plot", "render CSV outputs as SVG");
  plot->add_option("--kind", kind, "ess | trajectory | cdf")->required();
  plot->add_option("--input", inputs, "CSV input(s)")->required();
  plot->add_option("--output", output, "SVG path (default <out>/<kind>.svg)");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err << "elfslam: error kind=usage exit=" << kExitConfig << ": " << one_line(e.what()) << "\n";
      return kExitConfig;
    }
    const auto ctx = make_context(g, out);
    if (*config) return cmd_config(ctx, check, out);
    if (*synth) return cmd_synth(ctx, what, name);
    if (*pretrain) return cmd_pretrain(ctx, data);
    if (*finetune) return cmd_finetune(ctx, data, model_path, steps);
    if (*map) return cmd_map(ctx, data, model_path);
    if (*sup) return cmd_superimpose(ctx, maps, model_path);
    if (*loc) return cmd_localize(ctx, map_path, model_path, data);
    if (*eval) return cmd_eval(ctx, results, trajectory);
    if (*plot) return cmd_plot(ctx, kind, inputs, output);
    return kExitConfig;
  } catch (const Error& e) {
    const int code = exit_code(e.kind());
    err << "elfslam: error kind=" << to_string(e.kind()) << " exit=" << code << ": "
        << one_line(e.what()) << "\n";
    return code;
  } catch (const std::exception& e) {
    err << "elfslam: error kind=internal exit=1: " << one_line(e.what()) << "\n";
    return 1;
  }
}

}  // namespace elfslam::cli
