#include "elfslam/chirp_dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "elfslam/errors.hpp"

namespace elfslam::dsp {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// cos/sin tables for the bins we evaluate; the DFT is evaluated directly
// since only a handful of bins of a 96-point transform are needed.
struct DftTable {
  std::size_t window;
  std::vector<std::size_t> bins;
  std::vector<double> re;  // bins.size() x window
  std::vector<double> im;

  DftTable(std::size_t n, std::vector<std::size_t> which) : window(n), bins(std::move(which)) {
    re.resize(bins.size() * n);
    im.resize(bins.size() * n);
    for (std::size_t b = 0; b < bins.size(); ++b) {
      for (std::size_t t = 0; t < n; ++t) {
        // Reduce k*t mod n before scaling to keep the argument small.
        const double arg = kTwoPi * double((bins[b] * t) % n) / double(n);
        re[b * n + t] = std::cos(arg);
        im[b * n + t] = -std::sin(arg);
      }
    }
  }
};

void check_trace(const EchoTrace& trace, const StftConfig& cfg) {
  if (trace.samples.size() != cfg.trace_length) {
    fail(ErrorKind::Shape, "echo trace has " + std::to_string(trace.samples.size()) +
                               " samples, expected " + std::to_string(cfg.trace_length));
  }
  if (cfg.window == 0 || cfg.hop == 0 || cfg.window > cfg.trace_length) {
    fail(ErrorKind::Config, "invalid STFT window/hop");
  }
}

// Windowed power |X_k|^2 per frame for the requested bins: frames x bins.
std::vector<double> frame_power(const EchoTrace& trace, const StftConfig& cfg,
                                const DftTable& table, const std::vector<double>& win) {
  const std::size_t frames = cfg.num_frames();
  const std::size_t nb = table.bins.size();
  std::vector<double> out(frames * nb);
  std::vector<double> seg(cfg.window);
  for (std::size_t f = 0; f < frames; ++f) {
    const float* src = trace.samples.data() + f * cfg.hop;
    for (std::size_t t = 0; t < cfg.window; ++t) seg[t] = double(src[t]) * win[t];
    for (std::size_t b = 0; b < nb; ++b) {
      const double* cr = table.re.data() + b * cfg.window;
      const double* ci = table.im.data() + b * cfg.window;
      double sr = 0.0, si = 0.0;
      for (std::size_t t = 0; t < cfg.window; ++t) {
        sr += seg[t] * cr[t];
        si += seg[t] * ci[t];
      }
      out[f * nb + b] = sr * sr + si * si;
    }
  }
  return out;
}

}  // namespace

void ChirpConfig::validate() const {
  if (sample_rate_hz <= 0) fail(ErrorKind::Config, "chirp.sample_rate_hz must be positive");
  if (!(f0_hz > 0.0)) fail(ErrorKind::Config, "chirp.f0_hz must be positive");
  if (!(f0_hz < f1_hz)) fail(ErrorKind::Config, "chirp.f0_hz must be below chirp.f1_hz");
  if (!(f1_hz < sample_rate_hz / 2.0)) fail(ErrorKind::Config, "chirp.f1_hz must be below Nyquist");
  if (!(duration_s * sample_rate_hz >= 2.0)) {
    fail(ErrorKind::Config, "chirp.duration_s must cover at least two samples");
  }
}

std::size_t ChirpConfig::num_samples() const {
  return static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
}

std::size_t ChirpConfig::echo_offset_samples() const {
  return static_cast<std::size_t>(std::llround((duration_s + 0.001) * sample_rate_hz));
}

double instantaneous_frequency(const ChirpConfig& cfg, double t) {
  const double u = t / cfg.duration_s;
  if (cfg.sweep == Sweep::Linear) return cfg.f0_hz + (cfg.f1_hz - cfg.f0_hz) * u;
  return cfg.f0_hz * std::pow(cfg.f1_hz / cfg.f0_hz, u);
}

double chirp_phase(const ChirpConfig& cfg, double t) {
  const double T = cfg.duration_s;
  if (cfg.sweep == Sweep::Linear) {
    return kTwoPi * (cfg.f0_hz * t + 0.5 * (cfg.f1_hz - cfg.f0_hz) * t * t / T);
  }
  const double ratio = cfg.f1_hz / cfg.f0_hz;
  const double log_ratio = std::log(ratio);
  // integral of f0 * ratio^(s/T) ds from 0 to t
  return kTwoPi * cfg.f0_hz * T / log_ratio * std::expm1(log_ratio * t / T);
}

Recording generate_chirp(const ChirpConfig& cfg) {
  cfg.validate();
  Recording rec;
  rec.sample_rate_hz = cfg.sample_rate_hz;
  const std::size_t n = cfg.num_samples();
  rec.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = double(i) / cfg.sample_rate_hz;
    rec.samples[i] = static_cast<float>(std::sin(chirp_phase(cfg, t)));
  }
  return rec;
}

std::vector<double> matched_filter(const Recording& rec, const Recording& tmpl) {
  if (rec.sample_rate_hz != tmpl.sample_rate_hz) {
    fail(ErrorKind::Argument, "matched_filter: sample rates differ");
  }
  const std::size_t n = rec.samples.size();
  const std::size_t m = tmpl.samples.size();
  if (m == 0 || m > n) {
    fail(ErrorKind::Length, "matched_filter: template (" + std::to_string(m) +
                                ") longer than recording (" + std::to_string(n) + ")");
  }

  double t_mean = 0.0;
  for (float v : tmpl.samples) t_mean += v;
  t_mean /= double(m);
  std::vector<double> t_centered(m);
  double t_ss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    t_centered[i] = double(tmpl.samples[i]) - t_mean;
    t_ss += t_centered[i] * t_centered[i];
  }

  std::vector<double> out(n - m + 1, 0.0);
  if (t_ss <= 0.0) return out;

  // Running window sums; the centred template makes the window mean drop out
  // of the cross term.
  double w_sum = 0.0, w_sq = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    w_sum += rec.samples[i];
    w_sq += double(rec.samples[i]) * rec.samples[i];
  }
  for (std::size_t k = 0; k + m <= n; ++k) {
    if (k > 0) {
      const double old = rec.samples[k - 1];
      const double add = rec.samples[k + m - 1];
      w_sum += add - old;
      w_sq += add * add - old * old;
    }
    const double w_var = w_sq - w_sum * w_sum / double(m);
    // Relative floor guards against cancellation in the running sums.
    if (w_var <= 1e-12 * std::max(w_sq, 1e-300)) {
      out[k] = 0.0;
      continue;
    }
    double cross = 0.0;
    const float* w = rec.samples.data() + k;
    for (std::size_t i = 0; i < m; ++i) cross += t_centered[i] * w[i];
    out[k] = std::clamp(cross / std::sqrt(w_var * t_ss), -1.0, 1.0);
  }
  return out;
}

EchoTrace extract_echo_trace(const Recording& rec, const ChirpConfig& cfg,
                             std::size_t emit_offset, std::size_t trace_length) {
  const std::size_t start = emit_offset + cfg.echo_offset_samples();
  if (rec.samples.size() < start + trace_length) {
    fail(ErrorKind::Length, "recording has " + std::to_string(rec.samples.size()) +
                                " samples, echo trace needs " +
                                std::to_string(start + trace_length));
  }
  EchoTrace trace;
  trace.samples.assign(rec.samples.begin() + static_cast<std::ptrdiff_t>(start),
                       rec.samples.begin() + static_cast<std::ptrdiff_t>(start + trace_length));
  return trace;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(kTwoPi * double(i) / double(n));
  return w;
}

std::vector<std::size_t> StftConfig::kept_bins() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < num_bins(); ++k) {
    const double f = double(k) * bin_width_hz();
    if (f >= band_low_hz && f < band_high_hz) out.push_back(k);
  }
  return out;
}

Spectrogram compute_spectrogram(const EchoTrace& trace, const StftConfig& cfg) {
  check_trace(trace, cfg);
  const auto bins = cfg.kept_bins();
  const DftTable table(cfg.window, bins);
  const auto win = hann_window(cfg.window);
  const auto power = frame_power(trace, cfg, table, win);

  Spectrogram spec;
  spec.bins = bins.size();
  spec.frames = cfg.num_frames();
  spec.magnitudes.resize(spec.bins * spec.frames);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    for (std::size_t b = 0; b < spec.bins; ++b) {
      spec.magnitudes[b * spec.frames + f] =
          static_cast<float>(std::sqrt(power[f * spec.bins + b]));
    }
  }
  spec.bin_freqs_hz.reserve(bins.size());
  for (auto k : bins) spec.bin_freqs_hz.push_back(double(k) * cfg.bin_width_hz());
  return spec;
}

std::vector<double> compute_psd(const EchoTrace& trace, const StftConfig& cfg) {
  check_trace(trace, cfg);
  const std::size_t nb = cfg.num_bins();
  std::vector<std::size_t> all(nb);
  for (std::size_t k = 0; k < nb; ++k) all[k] = k;
  const DftTable table(cfg.window, all);
  const auto win = hann_window(cfg.window);
  const auto power = frame_power(trace, cfg, table, win);

  double win_ss = 0.0;
  for (double w : win) win_ss += w * w;
  const double scale = 1.0 / (double(cfg.sample_rate_hz) * win_ss);
  const std::size_t frames = cfg.num_frames();

  std::vector<double> psd(nb, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t k = 0; k < nb; ++k) psd[k] += power[f * nb + k];
  }
  for (std::size_t k = 0; k < nb; ++k) {
    const bool edge = (k == 0) || (cfg.window % 2 == 0 && k == nb - 1);
    psd[k] *= scale / double(frames) * (edge ? 1.0 : 2.0);
  }
  return psd;
}

}  // namespace elfslam::dsp
