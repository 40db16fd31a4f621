#include "io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "elfslam/errors.hpp"

namespace elfslam::cli {

using nlohmann::json;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

json pose_json(const Pose2& p) { return json::array({p.x, p.y, p.theta}); }

Pose2 pose_from(const json& j) {
  if (!j.is_array() || j.size() != 3) fail(ErrorKind::Data, "pose must be [x, y, theta]");
  return Pose2(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json vec_json(const Vec2& p) { return json::array({p.x(), p.y()}); }

Vec2 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 2) fail(ErrorKind::Data, "point must be [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::string encode_elf(const model::Elf& e) {
  std::vector<float> f(e.data(), e.data() + e.size());
  return encode_floats(f);
}

model::Elf decode_elf(const std::string& s) {
  const auto f = decode_floats(s);
  model::Elf e(Eigen::Index(f.size()));
  for (std::size_t i = 0; i < f.size(); ++i) e[Eigen::Index(i)] = f[i];
  return e;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(bool(out), ErrorKind::Io, "cannot write " + path);
  out << text;
  require(bool(out), ErrorKind::Io, "write failed for " + path);
}

json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), ErrorKind::Io, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Data, path + ": " + e.what());
  }
}

// Wraps nlohmann type errors into Data errors with the file name.
template <typename F>
auto guarded(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    fail(ErrorKind::Data, path + ": " + e.what());
  }
}

}  // namespace

std::string base64_encode(const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::string out;
  out.reserve((bytes + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes; i += 3) {
    const std::uint32_t b0 = p[i];
    const std::uint32_t b1 = i + 1 < bytes ? p[i + 1] : 0;
    const std::uint32_t b2 = i + 2 < bytes ? p[i + 2] : 0;
    const std::uint32_t v = b0 << 16 | b1 << 8 | b2;
    out += kAlphabet[v >> 18 & 63];
    out += kAlphabet[v >> 12 & 63];
    out += i + 1 < bytes ? kAlphabet[v >> 6 & 63] : '=';
    out += i + 2 < bytes ? kAlphabet[v & 63] : '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  require(text.size() % 4 == 0, ErrorKind::Data, "base64 length is not a multiple of 4");
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + std::size_t(k)];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
        continue;
      }
      require(pad == 0, ErrorKind::Data, "base64 padding in the middle");
      v[k] = value(c);
      require(v[k] >= 0, ErrorKind::Data, "invalid base64 character");
    }
    const std::uint32_t n = std::uint32_t(v[0]) << 18 | std::uint32_t(v[1]) << 12 |
                            std::uint32_t(v[2]) << 6 | std::uint32_t(v[3]);
    out.push_back(static_cast<unsigned char>(n >> 16));
    if (pad < 2) out.push_back(static_cast<unsigned char>(n >> 8 & 255));
    if (pad < 1) out.push_back(static_cast<unsigned char>(n & 255));
  }
  return out;
}

std::string encode_floats(std::span<const float> v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host assumed");
  return base64_encode(v.data(), v.size() * sizeof(float));
}

std::vector<float> decode_floats(const std::string& text) {
  const auto bytes = base64_decode(text);
  require(bytes.size() % 4 == 0, ErrorKind::Data, "float array byte count not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

mapping::StepTraces Dataset::step_traces() const {
  require(kind == Kind::Walk, ErrorKind::Data, "expected a walk dataset");
  mapping::StepTraces out;
  for (const auto& r : records) {
    if (r.step_idx >= out.size()) out.resize(r.step_idx + 1);
    require(r.echo_idx == out[r.step_idx].size(), ErrorKind::Data,
            "walk echoes are not consecutive at step " + std::to_string(r.step_idx));
    out[r.step_idx].push_back(r.trace);
  }
  return out;
}

void write_dataset(const std::string& path, const Dataset& ds) {
  std::ostringstream out;
  json header = {{"type", "header"},
                 {"format", "elfslam-dataset"},
                 {"version", kDatasetVersion},
                 {"kind", ds.kind == Dataset::Kind::Walk ? "walk" : "grid"},
                 {"config", ds.config}};
  out << header.dump() << "\n";
  for (std::size_t k = 0; k < ds.nodes.size(); ++k)
    out << json{{"type", "node"}, {"idx", k}, {"pose", pose_json(ds.nodes[k])}}.dump() << "\n";
  for (const auto& e : ds.odometry) {
    std::vector<double> info(e.information.data(), e.information.data() + 9);
    out << json{{"type", "odometry"},
                {"from", e.from_idx},
                {"to", e.to_idx},
                {"delta", pose_json(e.delta)},
                {"information", info}}
               .dump()
        << "\n";
  }
  for (const auto& r : ds.records) {
    json j = {{"type", "echo"},         {"step_idx", r.step_idx}, {"echo_idx", r.echo_idx},
              {"pose", pose_json(r.pose)}, {"heading", r.heading},
              {"trace", encode_floats(r.trace.samples)}};
    if (r.spot_id) {
      j["spot_id"] = *r.spot_id;
      j["room"] = r.room;
      j["group"] = r.group;
    }
    out << j.dump() << "\n";
  }
  write_text(path, out.str());
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), ErrorKind::Io, "cannot open dataset " + path);
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      fail(ErrorKind::Data, where + ": not valid JSON");
    }
    guarded(where, [&] {
      const auto type = j.at("type").get<std::string>();
      if (!have_header) {
        require(type == "header" && j.at("format") == "elfslam-dataset", ErrorKind::Data,
                where + ": missing dataset header");
        require(j.at("version").get<int>() == kDatasetVersion, ErrorKind::Data,
                where + ": unsupported dataset version");
        const auto kind = j.at("kind").get<std::string>();
        require(kind == "walk" || kind == "grid", ErrorKind::Data, where + ": unknown kind");
        ds.kind = kind == "walk" ? Dataset::Kind::Walk : Dataset::Kind::Grid;
        ds.config = j.at("config").get<std::string>();
        have_header = true;
      } else if (type == "node") {
        require(j.at("idx").get<std::size_t>() == ds.nodes.size(), ErrorKind::Data,
                where + ": node indices must be consecutive");
        ds.nodes.push_back(pose_from(j.at("pose")));
      } else if (type == "odometry") {
        motion::OdometryEdge e;
        e.from_idx = j.at("from").get<std::size_t>();
        e.to_idx = j.at("to").get<std::size_t>();
        e.delta = pose_from(j.at("delta"));
        const auto info = j.at("information").get<std::vector<double>>();
        require(info.size() == 9, ErrorKind::Data, where + ": information must hold 9 values");
        e.information = Eigen::Map<const Eigen::Matrix3d>(info.data());
        ds.odometry.push_back(e);
      } else if (type == "echo") {
        EchoRecord r;
        r.step_idx = j.at("step_idx").get<std::size_t>();
        r.echo_idx = j.at("echo_idx").get<std::size_t>();
        r.pose = pose_from(j.at("pose"));
        r.heading = j.at("heading").get<double>();
        r.trace.samples = decode_floats(j.at("trace").get<std::string>());
        if (j.contains("spot_id")) {
          r.spot_id = j.at("spot_id").get<std::size_t>();
          r.room = j.value("room", std::size_t(0));
          r.group = j.value("group", 0);
        }
        if (!ds.records.empty()) {
          const auto& p = ds.records.back();
          require(std::pair(p.step_idx, p.echo_idx) < std::pair(r.step_idx, r.echo_idx),
                  ErrorKind::Data, where + ": records must be sorted by (step_idx, echo_idx)");
        }
        ds.records.push_back(std::move(r));
      } else {
        fail(ErrorKind::Data, where + ": unknown record type '" + type + "'");
      }
      return 0;
    });
  }
  require(have_header, ErrorKind::Data, path + ": empty dataset");
  return ds;
}

void write_trajectory_map(const std::string& path, const mapping::TrajectoryMap& m) {
  json j = {{"format", "elfslam-trajectory-map"},
            {"version", 1},
            {"extractor_version", m.extractor_version},
            {"initial_pose", pose_json(m.initial_pose)}};
  json nodes = json::array();
  for (const auto& p : m.nodes) nodes.push_back(pose_json(p));
  j["nodes"] = nodes;
  json steps = json::array();
  for (std::size_t k = 0; k < m.per_step_traces.size(); ++k) {
    json traces = json::array(), elfs = json::array();
    for (const auto& t : m.per_step_traces[k]) traces.push_back(encode_floats(t.samples));
    if (k < m.per_step_elfs.size())
      for (const auto& e : m.per_step_elfs[k]) elfs.push_back(encode_elf(e));
    steps.push_back({{"traces", traces}, {"elfs", elfs}});
  }
  j["steps"] = steps;
  write_text(path, j.dump() + "\n");
}

mapping::TrajectoryMap read_trajectory_map(const std::string& path) {
  const json j = read_json(path);
  return guarded(path, [&] {
    require(j.at("format") == "elfslam-trajectory-map", ErrorKind::Data,
            path + ": not a trajectory map");
    mapping::TrajectoryMap m;
    m.extractor_version = j.at("extractor_version").get<std::string>();
    m.initial_pose = pose_from(j.at("initial_pose"));
    for (const auto& p : j.at("nodes")) m.nodes.push_back(pose_from(p));
    for (const auto& s : j.at("steps")) {
      m.per_step_traces.emplace_back();
      m.per_step_elfs.emplace_back();
      for (const auto& t : s.at("traces"))
        m.per_step_traces.back().push_back({decode_floats(t.get<std::string>())});
      for (const auto& e : s.at("elfs")) m.per_step_elfs.back().push_back(decode_elf(e.get<std::string>()));
    }
    require(m.nodes.size() == m.per_step_traces.size() + 1, ErrorKind::Data,
            path + ": a map with N nodes needs N-1 steps");
    return m;
  });
}

void write_floor_map(const std::string& path, const mapping::FloorMap& m) {
  json j = {{"format", "elfslam-floor-map"},
            {"version", 1},
            {"extractor_version", m.extractor_version},
            {"grid_m", m.grid_m}};
  json spots = json::array();
  for (const auto& s : m.spots)
    spots.push_back({{"position", vec_json(s.position)},
                     {"support", s.support},
                     {"elf", encode_elf(s.floor_elf)}});
  j["spots"] = spots;
  json tracks = json::array();
  for (const auto& t : m.tracks) {
    json nodes = json::array();
    for (const auto& p : t.nodes) nodes.push_back(vec_json(p));
    tracks.push_back({{"nodes", nodes}, {"step_spots", t.step_spots}});
  }
  j["tracks"] = tracks;
  write_text(path, j.dump() + "\n");
}

mapping::FloorMap read_floor_map(const std::string& path) {
  const json j = read_json(path);
  return guarded(path, [&] {
    require(j.at("format") == "elfslam-floor-map", ErrorKind::Data, path + ": not a floor map");
    mapping::FloorMap m;
    m.extractor_version = j.at("extractor_version").get<std::string>();
    m.grid_m = j.at("grid_m").get<double>();
    for (const auto& s : j.at("spots"))
      m.spots.push_back({vec_from(s.at("position")), decode_elf(s.at("elf").get<std::string>()),
                         s.at("support").get<std::size_t>()});
    for (const auto& t : j.at("tracks")) {
      mapping::FloorTrack track;
      for (const auto& p : t.at("nodes")) track.nodes.push_back(vec_from(p));
      track.step_spots = t.at("step_spots").get<std::vector<std::vector<std::size_t>>>();
      for (const auto& step : track.step_spots)
        for (auto s : step)
          require(s < m.spots.size(), ErrorKind::Data, path + ": track refers to a missing spot");
      m.tracks.push_back(std::move(track));
    }
    return m;
  });
}

std::string map_kind(const std::string& path) {
  const json j = read_json(path);
  const auto format = j.value("format", std::string());
  if (format == "elfslam-trajectory-map") return "trajectory";
  if (format == "elfslam-floor-map") return "floor";
  fail(ErrorKind::Data, path + ": not a map file");
}

std::size_t Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return i;
  fail(ErrorKind::Data, "CSV has no column '" + name + "'");
}

Table read_csv(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), ErrorKind::Io, "cannot open " + path);
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (t.columns.empty()) {
      t.columns = cells;
      continue;
    }
    require(cells.size() == t.columns.size(), ErrorKind::Data,
            path + ":" + std::to_string(lineno) + ": wrong number of cells");
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        require(used == c.size(), ErrorKind::Data, "trailing characters");
      } catch (const std::logic_error&) {
        fail(ErrorKind::Data, path + ":" + std::to_string(lineno) + ": '" + c + "' is not a number");
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace elfslam::cli
