#include "elfslam/elf_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "elfslam/errors.hpp"
#include "network.hpp"

namespace elfslam::model {

namespace {

using detail::Mat;

template <typename S>
std::vector<S> cast_values(const std::vector<double>& v) {
  std::vector<S> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = S(v[i]);
  return out;
}

template <typename S>
GradientResult gradient_impl(const ModelParams& params, std::span<const dsp::Spectrogram> pool,
                             std::span<const PairBatch> batches, double tau, bool with_grad) {
  require(!batches.empty(), ErrorKind::Argument, "loss_gradient: no batches");
  const auto values = cast_values<S>(params.values);
  std::vector<S> grad(with_grad ? values.size() : 0, S(0));
  GradientResult res;
  const S weight = S(1.0 / double(batches.size()));
  for (const auto& batch : batches) {
    require(!batch.slots.empty() && batch.slots.size() % 2 == 0, ErrorKind::Argument,
            "pair batch must hold an even, non-zero number of slots");
    for (auto s : batch.slots) {
      require(s < pool.size(), ErrorKind::Argument, "pair batch slot outside the pool");
    }
    detail::Network<S> net(params.config, params.manifest, values);
    const auto input = detail::make_input<S>(pool, batch.slots, params.config);
    const Mat<S> z = net.forward(input, batch.slots.size());
    Mat<S> dz;
    const S loss = detail::nt_xent<S>(z, tau, with_grad ? &dz : nullptr, nullptr);
    if (!std::isfinite(double(loss))) fail(ErrorKind::Numeric, "non-finite NT-Xent loss");
    res.loss += double(loss) * double(weight);
    if (with_grad) {
      dz *= weight;
      net.backward(dz, grad);
    }
  }
  if (with_grad) res.gradient.assign(grad.begin(), grad.end());
  return res;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string manifest_text(const ModelParams& p) {
  std::ostringstream o;
  o << std::setprecision(17);
  const auto& c = p.config;
  o << "conv_channels=" << join_ints(c.conv_channels) << '\n'
    << "embed_dim=" << c.embed_dim << '\n'
    << "head_layers=" << c.head_layers << '\n'
    << "temperature_tau=" << c.temperature_tau << '\n'
    << "batch_pairs_M=" << c.batch_pairs_M << '\n'
    << "learning_rate=" << c.learning_rate << '\n'
    << "steps=" << c.steps << '\n'
    << "normalize_input=" << (c.normalize_input ? 1 : 0) << '\n'
    << "input_bins=" << c.input_bins << '\n'
    << "input_frames=" << c.input_frames << '\n';
  for (const auto& t : p.manifest) {
    o << "tensor " << t.name;
    for (std::size_t i = 0; i < t.shape.size(); ++i) o << (i ? ',' : ' ') << t.shape[i];
    o << '\n';
  }
  return o.str();
}

std::vector<std::uint32_t> float_bits(const std::vector<double>& v) {
  std::vector<std::uint32_t> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::bit_cast<std::uint32_t>(float(v[i]));
  return out;
}

}  // namespace

void EncoderConfig::validate() const {
  require(!conv_channels.empty(), ErrorKind::Config, "model.conv_channels must not be empty");
  for (int c : conv_channels) require(c > 0, ErrorKind::Config, "conv channels must be positive");
  require(embed_dim >= 2, ErrorKind::Config, "model.embed_dim must be >= 2");
  require(head_layers >= 1, ErrorKind::Config, "model.head_layers must be >= 1");
  require(temperature_tau > 0.0, ErrorKind::Config, "model.temperature_tau must be positive");
  require(batch_pairs_M >= 2, ErrorKind::Config, "model.batch_pairs_M must be >= 2");
  require(learning_rate > 0.0, ErrorKind::Config, "model.learning_rate must be positive");
  require(steps >= 0, ErrorKind::Config, "model.steps must be non-negative");
  require(input_bins > 0 && input_frames > 0, ErrorKind::Config, "invalid input shape");
}

std::vector<TensorInfo> ModelParams::build_manifest(const EncoderConfig& cfg) {
  std::vector<TensorInfo> m;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<std::size_t> shape) {
    TensorInfo t;
    t.name = std::move(name);
    t.size = std::accumulate(shape.begin(), shape.end(), std::size_t(1), std::multiplies<>());
    t.shape = std::move(shape);
    t.offset = offset;
    offset += t.size;
    m.push_back(std::move(t));
  };
  std::size_t c_in = 1;
  for (std::size_t l = 0; l < cfg.conv_channels.size(); ++l) {
    const auto c_out = std::size_t(cfg.conv_channels[l]);
    add("conv" + std::to_string(l) + ".weight", {c_out, c_in, 3, 3});
    add("conv" + std::to_string(l) + ".bias", {c_out});
    c_in = c_out;
  }
  std::size_t in = c_in;
  for (int i = 0; i < cfg.head_layers; ++i) {
    const auto out = std::size_t(cfg.embed_dim);
    add("head" + std::to_string(i) + ".weight", {out, in});
    add("head" + std::to_string(i) + ".bias", {out});
    in = out;
  }
  return m;
}

ModelParams ModelParams::initialize(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  p.manifest = build_manifest(cfg);
  p.values.assign(p.manifest.back().offset + p.manifest.back().size, 0.0);
  Rng rng(derive_seed(seed, "model-init"));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t t = 0; t < p.manifest.size(); ++t) {
    const auto& info = p.manifest[t];
    if (info.shape.size() == 1) continue;  // biases start at zero
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < info.shape.size(); ++d) fan_in *= info.shape[d];
    const bool final_layer = (t + 2 == p.manifest.size());
    const double stddev = std::sqrt((final_layer ? 1.0 : 2.0) / double(fan_in));
    for (std::size_t k = 0; k < info.size; ++k) p.values[info.offset + k] = stddev * gauss(rng);
  }
  return p;
}

std::string ModelParams::version() const {
  std::uint64_t h = fnv1a64(manifest_text(*this));
  for (auto bits : float_bits(values)) h = splitmix64(h ^ bits);
  std::ostringstream o;
  o << "elf1-" << std::hex << std::setw(16) << std::setfill('0') << h;
  return o.str();
}

std::span<double> ModelParams::tensor(std::size_t i) {
  return std::span<double>(values).subspan(manifest.at(i).offset, manifest.at(i).size);
}

std::span<const double> ModelParams::tensor(std::size_t i) const {
  return std::span<const double>(values).subspan(manifest.at(i).offset, manifest.at(i).size);
}

std::size_t ModelParams::tensor_index(const std::string& name) const {
  for (std::size_t i = 0; i < manifest.size(); ++i)
    if (manifest[i].name == name) return i;
  fail(ErrorKind::Argument, "no tensor named " + name);
}

std::vector<Elf> encode_batch(const ModelParams& params, std::span<const dsp::Spectrogram> specs,
                              std::size_t chunk) {
  std::vector<Elf> out;
  out.reserve(specs.size());
  const auto values = cast_values<float>(params.values);
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t start = 0; start < specs.size(); start += chunk) {
    const std::size_t n = std::min(chunk, specs.size() - start);
    std::vector<std::size_t> slots(n);
    std::iota(slots.begin(), slots.end(), start);
    detail::Network<float> net(params.config, params.manifest, values);
    const auto input = detail::make_input<float>(specs, slots, params.config);
    const Mat<float> z = net.forward(input, n);
    for (std::size_t b = 0; b < n; ++b) {
      Elf e = z.col(Eigen::Index(b)).cast<double>();
      e /= e.norm();
      out.push_back(std::move(e));
    }
  }
  return out;
}

Elf encode(const ModelParams& params, const dsp::Spectrogram& spec) {
  return encode_batch(params, std::span<const dsp::Spectrogram>(&spec, 1)).front();
}

LossResult nt_xent_loss(std::span<const Elf> elfs, double tau) {
  require(elfs.size() % 2 == 0, ErrorKind::Argument,
          "NT-Xent needs an even number of embeddings (positive pairs)");
  require(!elfs.empty(), ErrorKind::Argument, "NT-Xent needs at least one pair");
  require(tau > 0.0, ErrorKind::Argument, "temperature must be positive");
  const auto dim = elfs.front().size();
  Mat<double> z(dim, Eigen::Index(elfs.size()));
  for (std::size_t i = 0; i < elfs.size(); ++i) {
    require(elfs[i].size() == dim, ErrorKind::Shape, "ELF dimensions differ");
    const double n = elfs[i].norm();
    require(n > 0.0, ErrorKind::Numeric, "zero ELF");
    z.col(Eigen::Index(i)) = elfs[i] / n;
  }
  LossResult res;
  res.loss = detail::nt_xent<double>(z, tau, nullptr, &res.per_pair);
  return res;
}

GradientResult loss_gradient(const ModelParams& params, std::span<const dsp::Spectrogram> pool,
                             std::span<const PairBatch> batches, double tau, Precision precision) {
  return precision == Precision::Float32
             ? gradient_impl<float>(params, pool, batches, tau, true)
             : gradient_impl<double>(params, pool, batches, tau, true);
}

double batch_loss(const ModelParams& params, std::span<const dsp::Spectrogram> pool,
                  std::span<const PairBatch> batches, double tau, Precision precision) {
  return precision == Precision::Float32
             ? gradient_impl<float>(params, pool, batches, tau, false).loss
             : gradient_impl<double>(params, pool, batches, tau, false).loss;
}

// ---------------------------------------------------------------------------
// Pairing

bool distance_positive(const Vec2& a, const Vec2& b, double threshold_m) {
  return (a - b).norm() < threshold_m;
}

namespace {

struct CellKey {
  long x, y;
  bool operator==(const CellKey&) const = default;
};
struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    return std::size_t(splitmix64(std::uint64_t(k.x) * 0x9E3779B1ULL ^ std::uint64_t(k.y)));
  }
};

class SpatialIndex {
 public:
  SpatialIndex(const std::vector<Vec2>& pts, double cell) : pts_(pts), cell_(cell) {
    for (std::size_t i = 0; i < pts.size(); ++i) cells_[key(pts[i])].push_back(i);
  }

  template <typename F>
  void for_near(const Vec2& p, F&& f) const {
    const CellKey k = key(p);
    for (long dy = -1; dy <= 1; ++dy)
      for (long dx = -1; dx <= 1; ++dx) {
        auto it = cells_.find({k.x + dx, k.y + dy});
        if (it == cells_.end()) continue;
        for (auto j : it->second) f(j);
      }
  }

 private:
  CellKey key(const Vec2& p) const {
    return {long(std::floor(p.x() / cell_)), long(std::floor(p.y() / cell_))};
  }
  const std::vector<Vec2>& pts_;
  double cell_;
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> cells_;
};

class DistancePairing final : public PairSampler {
 public:
  DistancePairing(std::vector<Vec2> positions, double threshold, std::vector<int> groups)
      : positions_(std::move(positions)), threshold_(threshold), groups_(std::move(groups)) {
    require(threshold_ > 0.0, ErrorKind::Config, "pairing threshold must be positive");
    require(groups_.empty() || groups_.size() == positions_.size(), ErrorKind::Argument,
            "pair_by_distance: one group label per position required");
    if (groups_.empty()) groups_.assign(positions_.size(), 0);
    const SpatialIndex index(positions_, threshold_);
    neighbours_.resize(positions_.size());
    for (std::size_t i = 0; i < positions_.size(); ++i) {
      index.for_near(positions_[i], [&](std::size_t j) {
        if (j != i && groups_[j] == groups_[i] &&
            distance_positive(positions_[i], positions_[j], threshold_))
          neighbours_[i].push_back(j);
      });
      std::sort(neighbours_[i].begin(), neighbours_[i].end());
      if (!neighbours_[i].empty()) anchors_.push_back(i);
    }
    require(!anchors_.empty(), ErrorKind::Sampling,
            "pair_by_distance: no trace pair lies within the threshold");
  }

  PairBatch sample(Rng& rng, std::size_t pairs) const override {
    PairBatch batch;
    std::vector<std::size_t> chosen;
    std::uniform_int_distribution<std::size_t> pick(0, anchors_.size() - 1);
    const std::size_t max_attempts = 50 * pairs + 100;
    for (std::size_t attempt = 0; attempt < max_attempts && batch.pairs() < pairs; ++attempt) {
      const std::size_t a = anchors_[pick(rng)];
      const auto& nb = neighbours_[a];
      const std::size_t b = nb[std::uniform_int_distribution<std::size_t>(0, nb.size() - 1)(rng)];
      bool clash = false;
      for (const std::size_t c : chosen) {
        if (groups_[c] != groups_[a]) continue;
        if (distance_positive(positions_[c], positions_[a], threshold_) ||
            distance_positive(positions_[c], positions_[b], threshold_)) {
          clash = true;
          break;
        }
      }
      if (clash) continue;
      batch.slots.push_back(a);
      batch.slots.push_back(b);
      chosen.push_back(a);
      chosen.push_back(b);
    }
    return batch;
  }

  std::size_t pool_size() const override { return positions_.size(); }

 private:
  std::vector<Vec2> positions_;
  double threshold_;
  std::vector<int> groups_;
  std::vector<std::vector<std::size_t>> neighbours_;
  std::vector<std::size_t> anchors_;
};

class ConsecutivePairing final : public PairSampler {
 public:
  explicit ConsecutivePairing(std::size_t n) : n_(n) {
    require(n_ >= 2, ErrorKind::Sampling, "pair_consecutive: sequence needs at least 2 echoes");
  }

  PairBatch sample(Rng& rng, std::size_t pairs) const override {
    // Partial Fisher-Yates over pair starts; a start is rejected when it
    // shares an echo with an already chosen pair.
    std::vector<std::size_t> starts(n_ - 1);
    std::iota(starts.begin(), starts.end(), 0);
    std::vector<char> used(n_, 0);
    PairBatch batch;
    for (std::size_t i = 0; i < starts.size() && batch.pairs() < pairs; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, starts.size() - 1);
      std::swap(starts[i], starts[pick(rng)]);
      const std::size_t t = starts[i];
      if (used[t] || used[t + 1]) continue;
      used[t] = used[t + 1] = 1;
      batch.slots.push_back(t);
      batch.slots.push_back(t + 1);
    }
    return batch;
  }

  std::size_t pool_size() const override { return n_; }

 private:
  std::size_t n_;
};

class LocationPairing final : public PairSampler {
 public:
  explicit LocationPairing(std::vector<std::size_t> spot_ids) : n_(spot_ids.size()) {
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < spot_ids.size(); ++i) groups[spot_ids[i]].push_back(i);
    for (auto& [spot, members] : groups) {
      if (members.size() >= 2) groups_.push_back(std::move(members));
    }
    require(!groups_.empty(), ErrorKind::Sampling,
            "pair_by_location: no spot holds two or more traces");
  }

  PairBatch sample(Rng& rng, std::size_t pairs) const override {
    std::vector<std::size_t> order(groups_.size());
    std::iota(order.begin(), order.end(), 0);
    PairBatch batch;
    for (std::size_t i = 0; i < order.size() && batch.pairs() < pairs; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
      std::swap(order[i], order[pick(rng)]);
      const auto& g = groups_[order[i]];
      std::uniform_int_distribution<std::size_t> first(0, g.size() - 1);
      std::uniform_int_distribution<std::size_t> second(0, g.size() - 2);
      const std::size_t a = first(rng);
      std::size_t b = second(rng);
      if (b >= a) ++b;
      batch.slots.push_back(g[a]);
      batch.slots.push_back(g[b]);
    }
    return batch;
  }

  std::size_t pool_size() const override { return n_; }

 private:
  std::size_t n_;
  std::vector<std::vector<std::size_t>> groups_;
};

}  // namespace

std::unique_ptr<PairSampler> pair_by_distance(std::vector<Vec2> positions, double threshold_m,
                                              std::vector<int> groups) {
  return std::make_unique<DistancePairing>(std::move(positions), threshold_m, std::move(groups));
}

std::unique_ptr<PairSampler> pair_consecutive(std::size_t sequence_length) {
  return std::make_unique<ConsecutivePairing>(sequence_length);
}

std::unique_ptr<PairSampler> pair_by_location(std::vector<std::size_t> spot_ids) {
  return std::make_unique<LocationPairing>(std::move(spot_ids));
}

// ---------------------------------------------------------------------------
// Training

TrainResult train(const ModelParams& init, const PairSampler& sampler,
                  std::span<const dsp::Spectrogram> pool, const EncoderConfig& cfg,
                  std::uint64_t seed, const TrainCallback& on_step) {
  cfg.validate();
  require(sampler.pool_size() == pool.size(), ErrorKind::Argument,
          "pair sampler and spectrogram pool sizes differ");
  TrainResult res;
  res.params = init;
  if (cfg.steps == 0) return res;

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  std::vector<double> m(init.values.size(), 0.0), v(init.values.size(), 0.0);
  double b1 = 1.0, b2 = 1.0;
  for (int step = 0; step < cfg.steps; ++step) {
    Rng rng(derive_seed(seed, "train-batch", step));
    const PairBatch batch = sampler.sample(rng, std::size_t(cfg.batch_pairs_M));
    require(batch.pairs() >= 1, ErrorKind::Sampling, "pair sampler produced an empty batch");
    GradientResult g;
    try {
      g = loss_gradient(res.params, pool, std::span<const PairBatch>(&batch, 1),
                        cfg.temperature_tau, Precision::Float32);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Numeric) throw;
      fail(ErrorKind::Training, "training diverged at step " + std::to_string(step) + ": " +
                                    e.what());
    }
    if (!std::isfinite(g.loss)) {
      fail(ErrorKind::Training, "training diverged at step " + std::to_string(step));
    }
    res.losses.push_back(g.loss);
    if (on_step) on_step(step, g.loss);

    b1 *= kBeta1;
    b2 *= kBeta2;
    const double lr = cfg.learning_rate * std::sqrt(1.0 - b2) / (1.0 - b1);
    for (std::size_t i = 0; i < res.params.values.size(); ++i) {
      const double gi = g.gradient[i];
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * gi;
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * gi * gi;
      res.params.values[i] -= lr * m[i] / (std::sqrt(v[i]) + kAdamEps);
    }
  }
  res.params.config.steps = init.config.steps + cfg.steps;
  return res;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) fail(ErrorKind::Data, "model file truncated");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

}  // namespace

void save_params(std::ostream& out, const ModelParams& params) {
  out.write("ELF1", 4);
  const std::string text = manifest_text(params);
  write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (auto bits : float_bits(params.values)) write_u32(out, bits);
  if (!out) fail(ErrorKind::Io, "failed writing model file");
}

ModelParams load_params(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "ELF1", 4) != 0) {
    fail(ErrorKind::Data, "not an ELF1 model file");
  }
  const std::uint32_t len = read_u32(in);
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) fail(ErrorKind::Data, "model manifest truncated");

  ModelParams p;
  std::vector<std::pair<std::string, std::string>> tensors;
  std::istringstream lines(text);
  std::string line;
  try {
    while (std::getline(lines, line)) {
      if (line.rfind("tensor ", 0) == 0) {
        std::istringstream ts(line.substr(7));
        std::string name, shape;
        ts >> name >> shape;
        tensors.emplace_back(name, shape);
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail(ErrorKind::Data, "bad manifest line: " + line);
      const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
      auto& c = p.config;
      if (key == "conv_channels") c.conv_channels = parse_ints(val);
      else if (key == "embed_dim") c.embed_dim = std::stoi(val);
      else if (key == "head_layers") c.head_layers = std::stoi(val);
      else if (key == "temperature_tau") c.temperature_tau = std::stod(val);
      else if (key == "batch_pairs_M") c.batch_pairs_M = std::stoi(val);
      else if (key == "learning_rate") c.learning_rate = std::stod(val);
      else if (key == "steps") c.steps = std::stoi(val);
      else if (key == "normalize_input") c.normalize_input = val == "1";
      else if (key == "input_bins") c.input_bins = std::stoi(val);
      else if (key == "input_frames") c.input_frames = std::stoi(val);
      else fail(ErrorKind::Data, "unknown manifest key: " + key);
    }
  } catch (const std::logic_error&) {
    fail(ErrorKind::Data, "unparseable model manifest");
  }
  p.config.validate();
  p.manifest = ModelParams::build_manifest(p.config);
  require(tensors.size() == p.manifest.size(), ErrorKind::Data, "model tensor list mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    std::string shape;
    for (std::size_t d = 0; d < p.manifest[i].shape.size(); ++d)
      shape += (d ? "," : "") + std::to_string(p.manifest[i].shape[d]);
    require(tensors[i].first == p.manifest[i].name && tensors[i].second == shape,
            ErrorKind::Data, "model tensor " + tensors[i].first + " does not match config");
  }
  const std::size_t count = p.manifest.back().offset + p.manifest.back().size;
  p.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const float f = std::bit_cast<float>(read_u32(in));
    require(std::isfinite(f), ErrorKind::Data, "model file holds non-finite values");
    p.values[i] = f;
  }
  return p;
}

void save_params(const std::string& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  save_params(out, params);
}

ModelParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  return load_params(in);
}

}  // namespace elfslam::model
