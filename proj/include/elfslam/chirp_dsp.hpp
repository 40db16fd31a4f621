#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace elfslam::dsp {

enum class Sweep { Logarithmic, Linear };

struct ChirpConfig {
  int sample_rate_hz = 44100;
  double f0_hz = 15000.0;
  double f1_hz = 20000.0;
  double duration_s = 0.010;
  Sweep sweep = Sweep::Logarithmic;

  /// Throws ErrorKind::Config unless f0 < f1 < fs/2 and the chirp spans >= 2 samples.
  void validate() const;
  std::size_t num_samples() const;
  /// Samples dropped after emission start: chirp duration plus the 1 ms body-reflection guard.
  std::size_t echo_offset_samples() const;
};

/// Samples are stored as float32, the on-disk representation, so that a
/// recording survives serialization bit-exactly.
struct Recording {
  std::vector<float> samples;
  int sample_rate_hz = 44100;
};

inline constexpr std::size_t kTraceLength = 2352;

struct EchoTrace {
  std::vector<float> samples;
};

/// STFT layout producing the 12 x 48 network input.
struct StftConfig {
  int sample_rate_hz = 44100;
  std::size_t window = 96;
  std::size_t hop = 48;
  std::size_t trace_length = kTraceLength;
  double band_low_hz = 15000.0;   // inclusive, on bin centre
  double band_high_hz = 20500.0;  // exclusive, on bin centre

  std::size_t num_frames() const { return (trace_length - window) / hop + 1; }
  std::size_t num_bins() const { return window / 2 + 1; }
  double bin_width_hz() const { return double(sample_rate_hz) / double(window); }
  /// Indices of the STFT bins whose centre lies in [band_low_hz, band_high_hz).
  std::vector<std::size_t> kept_bins() const;
};

struct Spectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<float> magnitudes;  // row-major, bins x frames
  std::vector<double> bin_freqs_hz;

  float at(std::size_t bin, std::size_t frame) const { return magnitudes[bin * frames + frame]; }
};

double instantaneous_frequency(const ChirpConfig& cfg, double t);
/// Closed-form phase (radians) of the chirp at time t, zero at t = 0.
double chirp_phase(const ChirpConfig& cfg, double t);

Recording generate_chirp(const ChirpConfig& cfg);

/// Sliding-window Pearson correlation of `rec` against `tmpl`. Windows with
/// zero variance yield 0.
std::vector<double> matched_filter(const Recording& rec, const Recording& tmpl);

/// Slices the echo trace out of a recording whose chirp emission starts at
/// sample `emit_offset`.
EchoTrace extract_echo_trace(const Recording& rec, const ChirpConfig& cfg,
                             std::size_t emit_offset = 0,
                             std::size_t trace_length = kTraceLength);

/// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

Spectrogram compute_spectrogram(const EchoTrace& trace, const StftConfig& cfg = {});

/// One-sided Welch PSD (units^2/Hz) averaged over the STFT frames; cfg.num_bins() values.
std::vector<double> compute_psd(const EchoTrace& trace, const StftConfig& cfg = {});

}  // namespace elfslam::dsp
