#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "elfslam/chirp_dsp.hpp"
#include "elfslam/geometry.hpp"
#include "elfslam/rng.hpp"

namespace elfslam::model {

struct EncoderConfig {
  std::vector<int> conv_channels{16, 32, 64, 128};
  int embed_dim = 128;
  int head_layers = 3;
  double temperature_tau = 0.5;
  int batch_pairs_M = 256;
  double learning_rate = 1e-3;
  int steps = 0;
  /// Scale each spectrogram to unit maximum before the first layer.
  bool normalize_input = true;
  int input_bins = 12;
  int input_frames = 48;

  void validate() const;
};

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Flat parameter vector plus the manifest describing how it splits into
/// tensors. Values live in double; float32 is the storage format.
struct ModelParams {
  EncoderConfig config;
  std::vector<TensorInfo> manifest;
  std::vector<double> values;

  static ModelParams initialize(const EncoderConfig& cfg, std::uint64_t seed);
  static std::vector<TensorInfo> build_manifest(const EncoderConfig& cfg);

  /// Content hash of the float32-rounded values, e.g. "elf1-0123456789abcdef".
  std::string version() const;
  std::span<double> tensor(std::size_t i);
  std::span<const double> tensor(std::size_t i) const;
  std::size_t tensor_index(const std::string& name) const;
};

/// Unit-norm embedding of one echo trace.
using Elf = Eigen::VectorXd;

enum class Precision { Float32, Float64 };

Elf encode(const ModelParams& params, const dsp::Spectrogram& spec);
std::vector<Elf> encode_batch(const ModelParams& params, std::span<const dsp::Spectrogram> specs,
                              std::size_t chunk = 256);

struct LossResult {
  double loss = 0.0;
  /// Loss of every ordered positive direction i -> partner(i); 2M values.
  std::vector<double> per_pair;
};

/// NT-Xent over 2M embeddings where (2t, 2t+1) are positives. Embeddings are
/// compared by cosine similarity.
LossResult nt_xent_loss(std::span<const Elf> elfs, double tau);

/// Indices into a spectrogram pool; (2t, 2t+1) are positive pairs.
struct PairBatch {
  std::vector<std::size_t> slots;
  std::size_t pairs() const { return slots.size() / 2; }
};

struct GradientResult {
  double loss = 0.0;
  std::vector<double> gradient;  // same layout as ModelParams::values
};

/// Exact gradient of the mean NT-Xent loss over `batches` (each batch's loss
/// weighted equally) with respect to every parameter.
GradientResult loss_gradient(const ModelParams& params, std::span<const dsp::Spectrogram> pool,
                             std::span<const PairBatch> batches, double tau,
                             Precision precision = Precision::Float64);

/// Mean loss only (forward pass); used by finite-difference checks.
double batch_loss(const ModelParams& params, std::span<const dsp::Spectrogram> pool,
                  std::span<const PairBatch> batches, double tau,
                  Precision precision = Precision::Float64);

class PairSampler {
 public:
  virtual ~PairSampler() = default;
  /// Draws up to `pairs` positive pairs with 2*pairs distinct slots.
  virtual PairBatch sample(Rng& rng, std::size_t pairs) const = 0;
  virtual std::size_t pool_size() const = 0;
};

/// Positives are traces closer than `threshold_m`; negatives are the in-batch
/// cross pairs. Pairs whose members lie within the threshold of an already
/// chosen slot are skipped so in-batch negatives are genuinely apart.
/// With `groups`, positives must also share a group label (e.g. a nominal
/// device orientation); the near-duplicate check then applies within groups.
std::unique_ptr<PairSampler> pair_by_distance(std::vector<Vec2> positions,
                                              double threshold_m = 0.20,
                                              std::vector<int> groups = {});

/// Positives are adjacent elements (t, t+1) of an ordered echo sequence.
std::unique_ptr<PairSampler> pair_consecutive(std::size_t sequence_length);

/// Positives share a spot id regardless of orientation; spots with a single
/// trace are skipped.
std::unique_ptr<PairSampler> pair_by_location(std::vector<std::size_t> spot_ids);

/// Whether two positions qualify as a distance-based positive pair.
bool distance_positive(const Vec2& a, const Vec2& b, double threshold_m = 0.20);

struct TrainResult {
  ModelParams params;
  std::vector<double> losses;  // one per step
};

using TrainCallback = std::function<void(int step, double loss)>;

/// Adam on the NT-Xent loss for cfg.steps steps, batch size cfg.batch_pairs_M.
/// Deterministic given `seed`. Gradients are computed in float32.
TrainResult train(const ModelParams& init, const PairSampler& sampler,
                  std::span<const dsp::Spectrogram> pool, const EncoderConfig& cfg,
                  std::uint64_t seed, const TrainCallback& on_step = {});

/// Binary model file: "ELF1", u32 manifest length, UTF-8 manifest, float32 tensors (LE).
void save_params(std::ostream& out, const ModelParams& params);
ModelParams load_params(std::istream& in);
void save_params(const std::string& path, const ModelParams& params);
ModelParams load_params(const std::string& path);

}  // namespace elfslam::model
