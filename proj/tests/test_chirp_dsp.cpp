#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "elfslam/chirp_dsp.hpp"
#include "elfslam/errors.hpp"

using namespace elfslam;
using namespace elfslam::dsp;

namespace {

// Phase by fine trapezoidal integration of 2*pi*f(t).
double integrated_phase(const ChirpConfig& cfg, double t) {
  const int n = 20000;
  const double h = t / n;
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    acc += 0.5 * h * (instantaneous_frequency(cfg, k * h) + instantaneous_frequency(cfg, (k + 1) * h));
  }
  return 2.0 * std::numbers::pi * acc;
}

double naive_pearson(const std::vector<float>& x, std::size_t off, const std::vector<float>& t) {
  const std::size_t m = t.size();
  double mx = 0, mt = 0;
  for (std::size_t k = 0; k < m; ++k) mx += x[off + k], mt += t[k];
  mx /= m;
  mt /= m;
  double sxy = 0, sxx = 0, stt = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const double a = x[off + k] - mx, b = t[k] - mt;
    sxy += a * b;
    sxx += a * a;
    stt += b * b;
  }
  if (sxx <= 0.0 || stt <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * stt);
}

EchoTrace random_trace(std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> n(0.0, sigma);
  EchoTrace t;
  t.samples.resize(kTraceLength);
  for (auto& s : t.samples) s = static_cast<float>(n(rng));
  return t;
}

EchoTrace tone_trace(double freq, double amp = 1.0) {
  EchoTrace t;
  t.samples.resize(kTraceLength);
  for (std::size_t k = 0; k < kTraceLength; ++k) {
    t.samples[k] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * k / 44100.0));
  }
  return t;
}

}  // namespace

TEST_CASE("chirp sizes and echo offset") {
  ChirpConfig cfg;
  CHECK(cfg.num_samples() == 441);
  CHECK(cfg.echo_offset_samples() == 485);
  CHECK(generate_chirp(cfg).samples.size() == 441);
}

TEST_CASE("log sweep instantaneous frequency") {
  ChirpConfig cfg;
  CHECK(instantaneous_frequency(cfg, 0.0) == doctest::Approx(15000.0));
  CHECK(instantaneous_frequency(cfg, cfg.duration_s) == doctest::Approx(20000.0));
  CHECK(instantaneous_frequency(cfg, cfg.duration_s / 2) ==
        doctest::Approx(std::sqrt(15000.0 * 20000.0)));
  cfg.sweep = Sweep::Linear;
  CHECK(instantaneous_frequency(cfg, cfg.duration_s / 4) == doctest::Approx(16250.0));
}

TEST_CASE("closed-form phase matches integrated frequency") {
  for (auto sweep : {Sweep::Logarithmic, Sweep::Linear}) {
    ChirpConfig cfg;
    cfg.sweep = sweep;
    for (double t : {0.001, 0.0037, 0.0099}) {
      CHECK(chirp_phase(cfg, t) == doctest::Approx(integrated_phase(cfg, t)).epsilon(1e-7));
    }
  }
}

TEST_CASE("chirp samples are the sine of the integrated phase") {
  ChirpConfig cfg;
  const auto rec = generate_chirp(cfg);
  CHECK(rec.sample_rate_hz == 44100);
  double peak = 0.0;
  for (std::size_t k = 0; k < rec.samples.size(); k += 37) {
    const double t = double(k) / cfg.sample_rate_hz;
    CHECK(rec.samples[k] == doctest::Approx(std::sin(integrated_phase(cfg, t))).epsilon(1e-4));
  }
  for (float s : rec.samples) peak = std::max(peak, double(std::abs(s)));
  CHECK(peak <= 1.0);
  CHECK(peak > 0.99);
}

TEST_CASE("chirp config validation") {
  ChirpConfig cfg;
  cfg.f0_hz = 21000;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.f1_hz = 23000;
  CHECK_THROWS_AS(generate_chirp(cfg), Error);
  cfg = {};
  cfg.duration_s = 1e-6;
  try {
    cfg.validate();
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}

TEST_CASE("matched filter agrees with naive Pearson correlation") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  Recording rec, tmpl;
  rec.samples.resize(600);
  tmpl.samples.resize(50);
  for (auto& s : rec.samples) s = float(n(rng));
  for (auto& s : tmpl.samples) s = float(n(rng));
  const auto out = matched_filter(rec, tmpl);
  REQUIRE(out.size() == rec.samples.size() - tmpl.samples.size() + 1);
  for (std::size_t k = 0; k < out.size(); k += 7) {
    CHECK(out[k] == doctest::Approx(naive_pearson(rec.samples, k, tmpl.samples)).epsilon(1e-6));
  }
}

TEST_CASE("matched filter finds an embedded chirp") {
  const auto chirp = generate_chirp({});
  Recording rec;
  rec.samples.assign(4410, 0.0f);
  for (std::size_t k = 0; k < chirp.samples.size(); ++k) rec.samples[1200 + k] += 0.3f * chirp.samples[k];
  const auto out = matched_filter(rec, chirp);
  const auto best = std::max_element(out.begin(), out.end()) - out.begin();
  CHECK(best == 1200);
  CHECK(out[best] == doctest::Approx(1.0).epsilon(1e-5));
  // windows entirely in the silent lead-in have zero variance
  CHECK(out[0] == 0.0);
}

TEST_CASE("matched filter rejects a template longer than the recording") {
  Recording rec, tmpl;
  rec.samples.assign(10, 1.0f);
  tmpl.samples.assign(11, 1.0f);
  CHECK_THROWS_AS(matched_filter(rec, tmpl), Error);
}

TEST_CASE("echo trace slicing") {
  Recording rec;
  rec.samples.resize(4410);
  for (std::size_t k = 0; k < rec.samples.size(); ++k) rec.samples[k] = float(k);
  const auto tr = extract_echo_trace(rec, {});
  REQUIRE(tr.samples.size() == 2352);
  CHECK(tr.samples.front() == 485.0f);
  CHECK(tr.samples.back() == 485.0f + 2351.0f);
  const auto shifted = extract_echo_trace(rec, {}, 100);
  CHECK(shifted.samples.front() == 585.0f);

  rec.samples.resize(485 + 2352);
  CHECK(extract_echo_trace(rec, {}).samples.size() == 2352);
  rec.samples.resize(485 + 2351);
  try {
    extract_echo_trace(rec, {});
    FAIL("expected length error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Length);
  }
}

TEST_CASE("periodic hann window") {
  const auto w = hann_window(96);
  REQUIRE(w.size() == 96);
  CHECK(w[0] == doctest::Approx(0.0));
  CHECK(w[48] == doctest::Approx(1.0));
  for (std::size_t k = 1; k < 96; ++k) CHECK(w[k] == doctest::Approx(w[96 - k]));
}

TEST_CASE("spectrogram shape and band") {
  StftConfig cfg;
  CHECK(cfg.num_frames() == 48);
  CHECK(cfg.num_bins() == 49);
  const auto kept = cfg.kept_bins();
  REQUIRE(kept.size() == 12);
  CHECK(kept.front() == 33);
  CHECK(kept.back() == 44);

  std::mt19937_64 rng(1);
  const auto s = compute_spectrogram(random_trace(rng));
  CHECK(s.bins == 12);
  CHECK(s.frames == 48);
  CHECK(s.magnitudes.size() == 12 * 48);
  REQUIRE(s.bin_freqs_hz.size() == 12);
  for (double f : s.bin_freqs_hz) {
    CHECK(f >= 15000.0);
    CHECK(f < 20500.0);
  }
}

TEST_CASE("spectrogram equals a direct DFT of windowed frames") {
  std::mt19937_64 rng(2);
  const auto tr = random_trace(rng);
  const auto s = compute_spectrogram(tr);
  const StftConfig cfg;
  const auto kept = cfg.kept_bins();
  for (std::size_t f : {0, 17, 47}) {
    for (std::size_t b = 0; b < kept.size(); b += 5) {
      std::complex<double> acc = 0.0;
      for (std::size_t n = 0; n < 96; ++n) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / 96.0);
        acc += w * double(tr.samples[f * 48 + n]) *
               std::polar(1.0, -2.0 * std::numbers::pi * double(kept[b] * n) / 96.0);
      }
      CHECK(s.at(b, f) == doctest::Approx(std::abs(acc)).epsilon(1e-4));
    }
  }
}

TEST_CASE("spectrogram zero and homogeneity") {
  EchoTrace zero;
  zero.samples.assign(kTraceLength, 0.0f);
  for (float m : compute_spectrogram(zero).magnitudes) CHECK(m == 0.0f);

  std::mt19937_64 rng(5);
  auto tr = random_trace(rng);
  const auto a = compute_spectrogram(tr);
  for (auto& v : tr.samples) v *= 4.0f;
  const auto b = compute_spectrogram(tr);
  for (std::size_t k = 0; k < a.magnitudes.size(); ++k) {
    CHECK(b.magnitudes[k] == doctest::Approx(4.0 * a.magnitudes[k]).epsilon(1e-5));
  }
}

TEST_CASE("spectrogram rejects wrong trace length") {
  EchoTrace t;
  t.samples.assign(2000, 0.0f);
  try {
    compute_spectrogram(t);
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Shape);
  }
}

TEST_CASE("spectrogram peaks at a tone's bin") {
  const StftConfig cfg;
  const double f = 36 * cfg.bin_width_hz();
  const auto s = compute_spectrogram(tone_trace(f));
  for (std::size_t fr = 0; fr < s.frames; ++fr) {
    std::size_t best = 0;
    for (std::size_t b = 1; b < s.bins; ++b)
      if (s.at(b, fr) > s.at(best, fr)) best = b;
    CHECK(best == 3);
  }
}

TEST_CASE("psd of silence, noise and a tone") {
  EchoTrace zero;
  zero.samples.assign(kTraceLength, 0.0f);
  const auto pz = compute_psd(zero);
  REQUIRE(pz.size() == 49);
  for (double v : pz) CHECK(v == 0.0);

  std::mt19937_64 rng(9);
  std::vector<double> avg(49, 0.0);
  const double sigma = 0.5;
  for (int t = 0; t < 100; ++t) {
    const auto p = compute_psd(random_trace(rng, sigma));
    for (std::size_t k = 0; k < 49; ++k) avg[k] += p[k] / 100.0;
  }
  const auto [mn, mx] = std::minmax_element(avg.begin(), avg.end());
  CHECK(*mx / *mn < 3.0);
  // one-sided density of white noise is 2 sigma^2 / fs away from DC and Nyquist
  double mid = 0.0;
  for (std::size_t k = 1; k < 48; ++k) mid += avg[k] / 47.0;
  CHECK(mid == doctest::Approx(2.0 * sigma * sigma / 44100.0).epsilon(0.05));

  const StftConfig cfg;
  const auto pt = compute_psd(tone_trace(20 * cfg.bin_width_hz()));
  CHECK(std::max_element(pt.begin(), pt.end()) - pt.begin() == 20);
}
