#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "elfslam/chirp_dsp.hpp"
#include "elfslam/elf_model.hpp"
#include "elfslam/errors.hpp"
#include "elfslam/localize.hpp"
#include "elfslam/loop_closure.hpp"
#include "elfslam/mapping.hpp"
#include "elfslam/motion.hpp"
#include "elfslam/pose_graph.hpp"
#include "elfslam/rng.hpp"
#include "elfslam/room_sim.hpp"
#include "elfslam/scenario.hpp"

namespace py = pybind11;
using namespace elfslam;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

FloatArray to_numpy(const std::vector<float>& v) {
  FloatArray a(py::ssize_t(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

dsp::EchoTrace trace_from(const FloatArray& a) {
  require(a.ndim() == 1, ErrorKind::Shape, "echo trace must be one-dimensional");
  dsp::EchoTrace t;
  t.samples.assign(a.data(), a.data() + a.size());
  return t;
}

mapping::StepTraces steps_from(const std::vector<std::vector<FloatArray>>& steps) {
  mapping::StepTraces out;
  for (const auto& s : steps) {
    out.emplace_back();
    for (const auto& t : s) out.back().push_back(trace_from(t));
  }
  return out;
}

std::vector<std::vector<FloatArray>> steps_to(const mapping::StepTraces& steps) {
  std::vector<std::vector<FloatArray>> out;
  for (const auto& s : steps) {
    out.emplace_back();
    for (const auto& t : s) out.back().push_back(to_numpy(t.samples));
  }
  return out;
}

py::array_t<float> spectrogram_array(const dsp::Spectrogram& s) {
  py::array_t<float> a({py::ssize_t(s.bins), py::ssize_t(s.frames)});
  std::copy(s.magnitudes.begin(), s.magnitudes.end(), a.mutable_data());
  return a;
}

std::vector<dsp::Spectrogram> spectrograms_of(const std::vector<FloatArray>& traces,
                                              const dsp::StftConfig& stft) {
  std::vector<dsp::Spectrogram> out;
  for (const auto& t : traces) out.push_back(dsp::compute_spectrogram(trace_from(t), stft));
  return out;
}

Eigen::MatrixX3d poses_array(const std::vector<Pose2>& poses) {
  Eigen::MatrixX3d m(poses.size(), 3);
  for (std::size_t i = 0; i < poses.size(); ++i) m.row(Eigen::Index(i)) << poses[i].x, poses[i].y, poses[i].theta;
  return m;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Echo-based indoor SLAM core";

  static py::exception<Error> error(m, "ElfslamError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = py::reinterpret_borrow<py::object>(error)(e.what());
      inst.attr("kind") = to_string(e.kind());
      PyErr_SetObject(error.ptr(), inst.ptr());
    }
  });

  m.def("derive_seed", [](std::uint64_t root, const std::string& purpose, std::optional<std::uint64_t> index) {
    return index ? derive_seed(root, purpose, *index) : derive_seed(root, purpose);
  }, py::arg("root"), py::arg("purpose"), py::arg("index") = py::none());

  py::class_<Pose2>(m, "Pose2")
      .def(py::init<>())
      .def(py::init<double, double, double>(), py::arg("x"), py::arg("y"), py::arg("theta"))
      .def_readwrite("x", &Pose2::x)
      .def_readwrite("y", &Pose2::y)
      .def_readwrite("theta", &Pose2::theta)
      .def("compose", &Pose2::compose)
      .def("inverse", &Pose2::inverse)
      .def("between", &Pose2::between)
      .def("__repr__", [](const Pose2& p) {
        return "Pose2(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ", " +
               std::to_string(p.theta) + ")";
      });

  // -- signal chain ---------------------------------------------------------
  py::enum_<dsp::Sweep>(m, "Sweep")
      .value("Logarithmic", dsp::Sweep::Logarithmic)
      .value("Linear", dsp::Sweep::Linear);

  py::class_<dsp::ChirpConfig>(m, "ChirpConfig")
      .def(py::init<>())
      .def_readwrite("sample_rate_hz", &dsp::ChirpConfig::sample_rate_hz)
      .def_readwrite("f0_hz", &dsp::ChirpConfig::f0_hz)
      .def_readwrite("f1_hz", &dsp::ChirpConfig::f1_hz)
      .def_readwrite("duration_s", &dsp::ChirpConfig::duration_s)
      .def_readwrite("sweep", &dsp::ChirpConfig::sweep);

  py::class_<dsp::StftConfig>(m, "StftConfig").def(py::init<>());

  m.def("generate_chirp", [](const dsp::ChirpConfig& c) { return to_numpy(dsp::generate_chirp(c).samples); },
        py::arg("config") = dsp::ChirpConfig{});
  m.def("instantaneous_frequency", &dsp::instantaneous_frequency);
  m.def("compute_spectrogram", [](const FloatArray& t) {
    return spectrogram_array(dsp::compute_spectrogram(trace_from(t)));
  }, "Band-limited magnitude spectrogram (bins x frames) of an echo trace.");
  m.def("compute_psd", [](const FloatArray& t) { return dsp::compute_psd(trace_from(t)); });
  m.attr("TRACE_LENGTH") = dsp::kTraceLength;

  // -- rooms ----------------------------------------------------------------
  py::class_<room::Room>(m, "Room")
      .def(py::init<std::vector<Vec2>, std::vector<double>, int, double>(), py::arg("vertices"),
           py::arg("reflection"), py::arg("max_order") = 3, py::arg("speed_of_sound_mps") = 343.0)
      .def_static("rectangle", &room::Room::rectangle, py::arg("width"), py::arg("height"),
                  py::arg("reflection") = 0.8, py::arg("max_order") = 3)
      .def_property_readonly("vertices", &room::Room::vertices)
      .def_property_readonly("reflection", &room::Room::reflection_coeff)
      .def("contains", &room::Room::contains)
      .def("distance_to_boundary", &room::Room::distance_to_boundary);

  py::class_<room::Device>(m, "Device")
      .def(py::init<>())
      .def_readwrite("position", &room::Device::position)
      .def_readwrite("heading_rad", &room::Device::heading_rad)
      .def_readwrite("speaker_offset_m", &room::Device::speaker_offset_m)
      .def_readwrite("mic_offset_m", &room::Device::mic_offset_m)
      .def_readwrite("directivity_alpha", &room::Device::directivity_alpha)
      .def_readwrite("snr_db", &room::Device::snr_db);

  m.def("image_source_count", [](const room::Room& r, const Vec2& src, int order) {
    return room::compute_image_sources(r, src, order).size();
  });
  m.def("simulate_echo", [](const room::Room& r, const room::Device& d, std::uint64_t seed) {
    const room::EchoSimConfig sim;
    return to_numpy(room::simulate_echo(r, d, dsp::generate_chirp(sim.chirp), seed, sim).samples);
  }, py::arg("room"), py::arg("device"), py::arg("seed"),
     "Echo trace of one chirp with default simulation settings.");

  // -- motion ---------------------------------------------------------------
  py::class_<motion::OdometryEdge>(m, "OdometryEdge")
      .def(py::init<>())
      .def_readwrite("from_idx", &motion::OdometryEdge::from_idx)
      .def_readwrite("to_idx", &motion::OdometryEdge::to_idx)
      .def_readwrite("delta", &motion::OdometryEdge::delta)
      .def_readwrite("information", &motion::OdometryEdge::information);

  py::class_<motion::WalkConfig>(m, "WalkConfig")
      .def(py::init<>())
      .def_readwrite("waypoints", &motion::WalkConfig::waypoints)
      .def_readwrite("stride_m", &motion::WalkConfig::stride_m)
      .def_readwrite("stride_sigma_m", &motion::WalkConfig::stride_sigma_m)
      .def_readwrite("heading_sigma_rad", &motion::WalkConfig::heading_sigma_rad)
      .def_readwrite("heading_bias_rad", &motion::WalkConfig::heading_bias_rad)
      .def_readwrite("placement_sigma_m", &motion::WalkConfig::placement_sigma_m)
      .def_readwrite("echoes_per_step", &motion::WalkConfig::echoes_per_step);

  py::class_<motion::Walk>(m, "Walk")
      .def_property_readonly("ground_truth", [](const motion::Walk& w) { return poses_array(w.ground_truth); })
      .def_readonly("odometry", &motion::Walk::odometry)
      .def_readonly("heading_bias_rad", &motion::Walk::heading_bias_rad);

  m.def("rectangle_loop", &motion::rectangle_loop, py::arg("x0"), py::arg("y0"), py::arg("x1"),
        py::arg("y1"), py::arg("reverse") = false);
  m.def("simulate_walk", &motion::simulate_walk, py::arg("config"), py::arg("rounds"), py::arg("seed"));
  m.def("dead_reckon", [](const std::vector<motion::OdometryEdge>& e, const Pose2& start) {
    return poses_array(motion::dead_reckon(e, start));
  }, py::arg("odometry"), py::arg("start") = Pose2{});

  // -- pose graph -----------------------------------------------------------
  m.def("optimize_pose_graph",
        [](const std::vector<Pose2>& init, const std::vector<motion::OdometryEdge>& odo,
           const std::vector<std::pair<std::size_t, std::size_t>>& loops, double loop_sigma_m) {
          graph::PoseGraph g;
          g.nodes = init;
          g.odo_edges = odo;
          for (const auto& [i, j] : loops) {
            graph::LoopEdge e;
            e.i = i;
            e.j = j;
            e.information = Eigen::Matrix2d::Identity() / (loop_sigma_m * loop_sigma_m);
            g.loop_edges.push_back(e);
          }
          const auto r = graph::optimize(g);
          py::dict out;
          out["nodes"] = poses_array(r.nodes);
          out["iterations"] = r.report.iterations;
          out["initial_cost"] = r.report.initial_cost;
          out["final_cost"] = r.report.final_cost;
          out["converged"] = r.report.converged;
          return out;
        },
        py::arg("initial"), py::arg("odometry"), py::arg("loops"), py::arg("loop_sigma_m") = 0.25);

  // -- features -------------------------------------------------------------
  py::class_<model::EncoderConfig>(m, "EncoderConfig")
      .def(py::init<>())
      .def_readwrite("conv_channels", &model::EncoderConfig::conv_channels)
      .def_readwrite("embed_dim", &model::EncoderConfig::embed_dim)
      .def_readwrite("head_layers", &model::EncoderConfig::head_layers)
      .def_readwrite("temperature_tau", &model::EncoderConfig::temperature_tau)
      .def_readwrite("batch_pairs_M", &model::EncoderConfig::batch_pairs_M)
      .def_readwrite("learning_rate", &model::EncoderConfig::learning_rate)
      .def_readwrite("steps", &model::EncoderConfig::steps);

  py::class_<model::ModelParams>(m, "ModelParams")
      .def_static("initialize", &model::ModelParams::initialize, py::arg("config"), py::arg("seed"))
      .def_static("load", [](const std::string& p) { return model::load_params(p); })
      .def("save", [](const model::ModelParams& mp, const std::string& p) { model::save_params(p, mp); })
      .def("version", &model::ModelParams::version)
      .def_readonly("config", &model::ModelParams::config)
      .def_property_readonly("parameter_count", [](const model::ModelParams& mp) { return mp.values.size(); });

  m.def("encode", [](const model::ModelParams& p, const std::vector<FloatArray>& traces) {
    const auto specs = spectrograms_of(traces, {});
    return model::encode_batch(p, specs);
  }, py::arg("params"), py::arg("traces"), "Unit-norm ELF for every echo trace.");

  m.def("train_consecutive",
        [](const model::ModelParams& init, const std::vector<FloatArray>& traces,
           const model::EncoderConfig& cfg, std::uint64_t seed) {
          const auto pool = spectrograms_of(traces, {});
          const auto sampler = model::pair_consecutive(pool.size());
          auto r = model::train(init, *sampler, pool, cfg, seed);
          return py::make_tuple(std::move(r.params), std::move(r.losses));
        },
        py::arg("init"), py::arg("traces"), py::arg("config"), py::arg("seed"),
        "Contrastive training with adjacent traces as positives; returns (params, losses).");

  m.def("ess", [](const std::vector<model::Elf>& a, const std::vector<model::Elf>& b) {
    return loop::ess(a, b);
  });
  m.def("build_ess_matrix", [](const std::vector<loop::ElfList>& per_step) {
    return loop::build_ess_matrix(per_step);
  });

  // -- scenario presets -----------------------------------------------------
  auto sc = m.def_submodule("scenario", "Desk-scale scene presets");
  sc.attr("STEPS_PER_ROUND") = scenario::kStepsPerRound;
  sc.def("survey_room", &scenario::survey_room);
  sc.def("survey_walk", &scenario::survey_walk, py::arg("reverse") = false);
  sc.def("pretraining_rooms", &scenario::pretraining_rooms);
  sc.def("desk_encoder", &scenario::desk_encoder, py::arg("steps") = 0);
  sc.def("survey",
         [](const room::Room& r, const motion::WalkConfig& w, std::size_t rounds, std::uint64_t seed) {
           const auto s = scenario::survey(r, w, rounds, room::Device{}, seed);
           return py::make_tuple(s.walk, steps_to(s.traces));
         },
         py::arg("room"), py::arg("walk"), py::arg("rounds"), py::arg("seed"),
         "Simulated walk and its echoes, as (walk, traces[step][echo]).");

  // -- mapping and localisation --------------------------------------------
  py::class_<mapping::TrajectoryMap>(m, "TrajectoryMap")
      .def_property_readonly("nodes", [](const mapping::TrajectoryMap& t) { return poses_array(t.nodes); })
      .def_readonly("per_step_elfs", &mapping::TrajectoryMap::per_step_elfs)
      .def_readonly("extractor_version", &mapping::TrajectoryMap::extractor_version);

  m.def("build_trajectory_map",
        [](const std::vector<std::vector<FloatArray>>& traces,
           const std::vector<motion::OdometryEdge>& odometry, const model::ModelParams& extractor,
           int finetune_steps, const Pose2& initial_pose, std::uint64_t seed) {
          mapping::MapBuildConfig cfg;
          cfg.finetune = scenario::desk_encoder(finetune_steps);
          cfg.curation = scenario::desk_curation();
          cfg.initial_pose = initial_pose;
          cfg.seed = seed;
          auto r = mapping::build_trajectory_map(steps_from(traces), odometry, extractor, cfg);
          py::dict out;
          out["map"] = r.map;
          out["extractor"] = r.extractor;
          out["dead_reckoned"] = poses_array(r.dead_reckoned);
          out["ess"] = r.ess;
          out["closures"] = r.closures;
          out["loop_closed"] = r.status == mapping::MapStatus::Ok;
          out["finetune_losses"] = r.finetune_losses;
          return out;
        },
        py::arg("traces"), py::arg("odometry"), py::arg("extractor"), py::arg("finetune_steps"),
        py::arg("initial_pose") = Pose2{}, py::arg("seed") = 0,
        "Fine-tune, build the ESS matrix, curate loop closures and optimise the pose graph.");

  py::class_<localize::Estimate>(m, "Estimate")
      .def_readonly("position", &localize::Estimate::position)
      .def_readonly("score", &localize::Estimate::score)
      .def_readonly("low_confidence", &localize::Estimate::low_confidence);

  m.def("one_shot_localize",
        [](const std::vector<model::Elf>& query, const mapping::TrajectoryMap& map) {
          return localize::one_shot_localize(query, localize::LocalizationMap::from(map), {});
        },
        py::arg("query"), py::arg("map"));
}
