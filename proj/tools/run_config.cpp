#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "elfslam/errors.hpp"

namespace elfslam::cli {

namespace {

struct Entry {
  const char* key;
  const char* value;
  const char* doc;
};

// Order here is the order of `config --dump`.
constexpr Entry kEntries[] = {
    {"seeds.root", "0", "root seed; every random stream is derived from it by name"},

    {"chirp.sample_rate_hz", "44100", "audio sample rate"},
    {"chirp.f0_hz", "15000", "chirp start frequency"},
    {"chirp.f1_hz", "20000", "chirp end frequency"},
    {"chirp.duration_s", "0.010", "chirp length"},
    {"chirp.sweep", "log", "log | linear"},
    {"chirp.recording_samples", "4410", "simulated recording length per chirp"},

    {"room.vertices", "0,0;8,0;8,6;0,6", "survey room polygon, x,y pairs separated by ';'"},
    {"room.reflection", "0.9,0.55,0.8,0.7", "one reflection coefficient per wall"},
    {"room.max_order", "3", "image-source reflection order"},
    {"room.speed_of_sound_mps", "343", ""},
    {"room.pretrain_rooms",
     "0,0;7,0;7,5;0,5:0.85,0.6,0.75,0.9|0,0;6,0;6,3;3,3;3,5;0,5:0.9,0.8,0.7,0.85,0.6,0.75",
     "pre-training rooms, polygon:reflections, separated by '|'"},

    {"device.speaker_offset_m", "0.075", "speaker ahead of the device centre"},
    {"device.mic_offset_m", "0.075", "microphone behind the device centre"},
    {"device.directivity_alpha", "0.5", "cardioid mix, 0 = omnidirectional"},
    {"device.snr_db", "30", "additive white noise; inf disables it"},

    {"walk.waypoints", "1,0.7;6.1,0.7;6.1,4.7;1,4.7;1,0.7", "closed polyline for multi-round walks"},
    {"walk.steps_per_round", "58", "if > 0 the stride is the loop length over this count"},
    {"walk.stride_m", "0.7", "used when walk.steps_per_round = 0"},
    {"walk.rounds", "3", ""},
    {"walk.reverse", "false", "walk the polyline backwards"},
    {"walk.stride_sigma_m", "0.02", "per-step stride noise"},
    {"walk.heading_sigma_rad", "0.04", "per-step heading random walk"},
    {"walk.heading_bias_rad", "", "constant per-step heading bias; empty = drawn"},
    {"walk.heading_bias_range_rad", "0.005", "bias is drawn from U(-range, range)"},
    {"walk.placement_sigma_m", "0.05", "scatter of true footsteps around the markers"},
    {"walk.echoes_per_step", "6", ""},

    {"pretrain.spacing_m", "0.15", "grid spacing of pre-training traces"},
    {"pretrain.orientations", "8", "evenly spaced device headings per grid point"},
    {"pretrain.traces_per_pose", "1", ""},
    {"pretrain.positive_threshold_m", "0.20", "positives are closer than this"},

    {"model.conv_channels", "8,16,32,64", "channels of the four conv blocks"},
    {"model.embed_dim", "128", "ELF dimension"},
    {"model.head_layers", "3", ""},
    {"model.temperature_tau", "0.1", "NT-Xent temperature"},
    {"model.batch_pairs_M", "32", "positive pairs per batch"},
    {"model.learning_rate", "0.001", "Adam step size"},
    {"model.normalize_input", "true", "scale each spectrogram to unit max"},
    {"model.pretrain_steps", "2000", ""},
    {"model.finetune_steps", "1200", "trajectory-level fine-tuning inside map"},
    {"model.retrain_steps", "1000", "floor-level retraining inside superimpose"},

    {"curation.ess_threshold", "0.6", "ESS binarisation threshold"},
    {"curation.min_separation", "20", "band mask around the diagonal, in steps"},
    {"curation.slice_width", "16", ""},
    {"curation.dbscan_eps", "3", ""},
    {"curation.dbscan_min_pts", "4", ""},
    {"curation.ransac_iters", "200", ""},
    {"curation.ransac_inlier_tol", "1.5", ""},
    {"curation.ransac_min_inliers", "6", ""},

    {"solver.max_iterations", "100", "Levenberg-Marquardt iterations"},
    {"solver.rel_cost_tol", "1e-9", ""},
    {"solver.grad_tol", "1e-8", ""},
    {"solver.initial_lambda", "1e-4", ""},
    {"solver.lambda_up", "10", ""},
    {"solver.lambda_down", "3", ""},
    {"solver.loop_sigma_m", "0.25", "loop-closure position standard deviation"},

    {"localization.mode", "one_shot", "one_shot | trajectory"},
    {"localization.window_steps", "8", "steps per trajectory query"},
    {"localization.low_confidence_ess", "0.4", ""},
    {"localization.curve_tol_m", "0.5", "Procrustes RMSD gate"},
    {"localization.allow_reversed_windows", "true", ""},
    {"localization.grid_m", "0.25", "floor-map spot size"},

    {"paths.out", "out", "default output directory"},
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

double to_real(const std::string& key, const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && p == s.data() + s.size(), ErrorKind::Config,
          key + ": '" + s + "' is not a number");
  return v;
}

room::Room make_room(const std::string& what, const std::vector<Vec2>& poly,
                     const std::vector<double>& refl, int order, double c) {
  require(poly.size() == refl.size(), ErrorKind::Config,
          what + ": need one reflection coefficient per wall");
  return room::Room(poly, refl, order, c);
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& e : kEntries) values_[e.key] = e.value;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::Config,
            "config line " + std::to_string(lineno) + ": expected key = value");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), ErrorKind::Io, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::dump() const {
  std::ostringstream out;
  std::string section;
  for (const auto& e : kEntries) {
    const std::string key = e.key;
    const std::string sec = key.substr(0, key.find('.'));
    if (sec != section) {
      if (!section.empty()) out << "\n";
      section = sec;
    }
    if (*e.doc) out << "# " << e.doc << "\n";
    out << key << " = " << values_.at(key) << "\n";
  }
  return out.str();
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorKind::Config, "unknown config key '" + key + "'");
  it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorKind::Config, "unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::real(const std::string& key) const { return to_real(key, get(key)); }

long long RunConfig::integer(const std::string& key) const {
  const auto& s = get(key);
  long long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && p == s.data() + s.size(), ErrorKind::Config,
          key + ": '" + s + "' is not an integer");
  return v;
}

bool RunConfig::boolean(const std::string& key) const {
  const auto& s = get(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  fail(ErrorKind::Config, key + ": expected true or false, got '" + s + "'");
}

std::vector<Vec2> parse_points(const std::string& s) {
  std::vector<Vec2> out;
  for (const auto& item : split(s, ';')) {
    if (item.empty()) continue;
    const auto xy = split(item, ',');
    require(xy.size() == 2, ErrorKind::Config, "point '" + item + "' is not x,y");
    out.emplace_back(to_real("point", xy[0]), to_real("point", xy[1]));
  }
  return out;
}

std::vector<double> parse_reals(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split(s, ','))
    if (!item.empty()) out.push_back(to_real("list", item));
  return out;
}

dsp::ChirpConfig RunConfig::chirp() const {
  dsp::ChirpConfig c;
  c.sample_rate_hz = int(integer("chirp.sample_rate_hz"));
  c.f0_hz = real("chirp.f0_hz");
  c.f1_hz = real("chirp.f1_hz");
  c.duration_s = real("chirp.duration_s");
  const auto& sweep = get("chirp.sweep");
  require(sweep == "log" || sweep == "linear", ErrorKind::Config,
          "chirp.sweep must be log or linear");
  c.sweep = sweep == "log" ? dsp::Sweep::Logarithmic : dsp::Sweep::Linear;
  c.validate();
  return c;
}

room::EchoSimConfig RunConfig::echo_sim() const {
  room::EchoSimConfig s;
  s.chirp = chirp();
  const auto n = integer("chirp.recording_samples");
  require(n > 0, ErrorKind::Config, "chirp.recording_samples must be positive");
  s.recording_samples = std::size_t(n);
  return s;
}

room::Room RunConfig::survey_room() const {
  return make_room("room", parse_points(get("room.vertices")), parse_reals(get("room.reflection")),
                   int(integer("room.max_order")), real("room.speed_of_sound_mps"));
}

std::vector<room::Room> RunConfig::pretrain_rooms() const {
  std::vector<room::Room> out;
  for (const auto& spec : split(get("room.pretrain_rooms"), '|')) {
    if (spec.empty()) continue;
    const auto colon = spec.find(':');
    require(colon != std::string::npos, ErrorKind::Config,
            "room.pretrain_rooms: each room is polygon:reflections");
    out.push_back(make_room("room.pretrain_rooms", parse_points(spec.substr(0, colon)),
                            parse_reals(spec.substr(colon + 1)), int(integer("room.max_order")),
                            real("room.speed_of_sound_mps")));
  }
  require(!out.empty(), ErrorKind::Config, "room.pretrain_rooms is empty");
  return out;
}

room::Device RunConfig::device() const {
  room::Device d;
  d.speaker_offset_m = real("device.speaker_offset_m");
  d.mic_offset_m = real("device.mic_offset_m");
  d.directivity_alpha = real("device.directivity_alpha");
  d.snr_db = real("device.snr_db");
  require(d.speaker_offset_m >= 0.0 && d.mic_offset_m >= 0.0, ErrorKind::Config,
          "device offsets must be non-negative");
  require(d.directivity_alpha >= 0.0 && d.directivity_alpha <= 1.0, ErrorKind::Config,
          "device.directivity_alpha must lie in [0, 1]");
  return d;
}

motion::WalkConfig RunConfig::walk() const {
  motion::WalkConfig w;
  w.waypoints = parse_points(get("walk.waypoints"));
  require(w.waypoints.size() >= 2, ErrorKind::Config, "walk.waypoints needs at least 2 points");
  if (boolean("walk.reverse")) std::reverse(w.waypoints.begin(), w.waypoints.end());
  const auto per_round = integer("walk.steps_per_round");
  require(per_round >= 0, ErrorKind::Config, "walk.steps_per_round must be non-negative");
  if (per_round > 0) {
    double length = 0.0;
    for (std::size_t k = 1; k < w.waypoints.size(); ++k)
      length += (w.waypoints[k] - w.waypoints[k - 1]).norm();
    w.stride_m = length / double(per_round);
  } else {
    w.stride_m = real("walk.stride_m");
  }
  w.stride_sigma_m = real("walk.stride_sigma_m");
  w.heading_sigma_rad = real("walk.heading_sigma_rad");
  if (!get("walk.heading_bias_rad").empty()) w.heading_bias_rad = real("walk.heading_bias_rad");
  w.heading_bias_range_rad = real("walk.heading_bias_range_rad");
  w.placement_sigma_m = real("walk.placement_sigma_m");
  const auto echoes = integer("walk.echoes_per_step");
  require(echoes >= 1, ErrorKind::Config, "walk.echoes_per_step must be >= 1");
  w.echoes_per_step = std::size_t(echoes);
  w.validate();
  return w;
}

std::size_t RunConfig::rounds() const {
  const auto r = integer("walk.rounds");
  require(r >= 1, ErrorKind::Config, "walk.rounds must be >= 1");
  return std::size_t(r);
}

scenario::PretrainSpec RunConfig::pretrain_spec() const {
  scenario::PretrainSpec p;
  p.spacing_m = real("pretrain.spacing_m");
  p.orientations = int(integer("pretrain.orientations"));
  const auto t = integer("pretrain.traces_per_pose");
  require(t >= 1, ErrorKind::Config, "pretrain.traces_per_pose must be >= 1");
  p.traces_per_pose = std::size_t(t);
  p.positive_threshold_m = real("pretrain.positive_threshold_m");
  require(p.spacing_m > 0.0 && p.orientations >= 1 && p.positive_threshold_m > 0.0,
          ErrorKind::Config, "pretrain spacing, orientations and threshold must be positive");
  return p;
}

model::EncoderConfig RunConfig::encoder(int steps) const {
  model::EncoderConfig c;
  c.conv_channels.clear();
  for (double v : parse_reals(get("model.conv_channels"))) {
    require(v == std::floor(v), ErrorKind::Config, "model.conv_channels must be integers");
    c.conv_channels.push_back(int(v));
  }
  c.embed_dim = int(integer("model.embed_dim"));
  c.head_layers = int(integer("model.head_layers"));
  c.temperature_tau = real("model.temperature_tau");
  c.batch_pairs_M = int(integer("model.batch_pairs_M"));
  c.learning_rate = real("model.learning_rate");
  c.normalize_input = boolean("model.normalize_input");
  c.steps = steps;
  c.validate();
  return c;
}

loop::CurationConfig RunConfig::curation() const {
  loop::CurationConfig c;
  c.ess_threshold = real("curation.ess_threshold");
  c.min_separation = int(integer("curation.min_separation"));
  c.slice_width = int(integer("curation.slice_width"));
  c.dbscan_eps = real("curation.dbscan_eps");
  c.dbscan_min_pts = int(integer("curation.dbscan_min_pts"));
  c.ransac_iters = int(integer("curation.ransac_iters"));
  c.ransac_inlier_tol = real("curation.ransac_inlier_tol");
  c.ransac_min_inliers = int(integer("curation.ransac_min_inliers"));
  c.seed = derive_seed(seed(), "curation");
  c.validate();
  return c;
}

graph::SolverConfig RunConfig::solver() const {
  graph::SolverConfig s;
  s.max_iterations = int(integer("solver.max_iterations"));
  s.rel_cost_tol = real("solver.rel_cost_tol");
  s.grad_tol = real("solver.grad_tol");
  s.initial_lambda = real("solver.initial_lambda");
  s.lambda_up = real("solver.lambda_up");
  s.lambda_down = real("solver.lambda_down");
  require(s.max_iterations > 0 && s.initial_lambda > 0.0 && s.lambda_up > 1.0 &&
              s.lambda_down > 1.0,
          ErrorKind::Config, "solver iterations and damping factors out of range");
  require(real("solver.loop_sigma_m") > 0.0, ErrorKind::Config,
          "solver.loop_sigma_m must be positive");
  return s;
}

localize::LocalizeConfig RunConfig::localization() const {
  localize::LocalizeConfig l;
  l.low_confidence_ess = real("localization.low_confidence_ess");
  l.curve_tol_m = real("localization.curve_tol_m");
  l.allow_reversed_windows = boolean("localization.allow_reversed_windows");
  const auto& mode = get("localization.mode");
  require(mode == "one_shot" || mode == "trajectory", ErrorKind::Config,
          "localization.mode must be one_shot or trajectory");
  require(integer("localization.window_steps") >= 2, ErrorKind::Config,
          "localization.window_steps must be >= 2");
  require(real("localization.grid_m") > 0.0, ErrorKind::Config,
          "localization.grid_m must be positive");
  return l;
}

void RunConfig::validate() const {
  (void)echo_sim();
  (void)survey_room();
  (void)pretrain_rooms();
  (void)device();
  (void)walk();
  (void)rounds();
  (void)pretrain_spec();
  (void)encoder(0);
  (void)curation();
  (void)solver();
  (void)localization();
  require(integer("model.pretrain_steps") >= 0 && integer("model.finetune_steps") >= 0 &&
              integer("model.retrain_steps") >= 0,
          ErrorKind::Config, "step counts must be non-negative");
  require(integer("seeds.root") >= 0, ErrorKind::Config, "seeds.root must be non-negative");
}

}  // namespace elfslam::cli
