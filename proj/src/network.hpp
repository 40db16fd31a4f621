#pragma once

// Convolutional encoder with a hand-written reverse pass. Templated on the
// scalar so training runs in float while gradient checks run in double.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "elfslam/elf_model.hpp"
#include "elfslam/errors.hpp"

namespace elfslam::model::detail {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
inline S sigmoid(S z) {
  return S(1) / (S(1) + std::exp(-z));
}

template <typename S>
void check_finite(const Mat<S>& m, const std::string& layer) {
  if (!m.allFinite()) fail(ErrorKind::Numeric, "non-finite activation in " + layer);
}

/// Input matrix (1 x B*H*W), each sample scaled to unit max when requested.
template <typename S>
Mat<S> make_input(std::span<const dsp::Spectrogram> pool, std::span<const std::size_t> slots,
                  const EncoderConfig& cfg) {
  const std::size_t hw = std::size_t(cfg.input_bins) * std::size_t(cfg.input_frames);
  Mat<S> in(1, Eigen::Index(slots.size() * hw));
  for (std::size_t b = 0; b < slots.size(); ++b) {
    const auto& spec = pool[slots[b]];
    if (spec.bins != std::size_t(cfg.input_bins) || spec.frames != std::size_t(cfg.input_frames) ||
        spec.magnitudes.size() != hw) {
      fail(ErrorKind::Shape, "spectrogram shape " + std::to_string(spec.bins) + "x" +
                                 std::to_string(spec.frames) + " does not match encoder input " +
                                 std::to_string(cfg.input_bins) + "x" +
                                 std::to_string(cfg.input_frames));
    }
    double scale = 1.0;
    if (cfg.normalize_input) {
      float mx = 0.0f;
      for (float v : spec.magnitudes) mx = std::max(mx, v);
      scale = mx > 0.0f ? 1.0 / double(mx) : 1.0;
    }
    for (std::size_t k = 0; k < hw; ++k) {
      in(0, Eigen::Index(b * hw + k)) = S(double(spec.magnitudes[k]) * scale);
    }
  }
  return in;
}

template <typename S>
class Network {
 public:
  Network(const EncoderConfig& cfg, const std::vector<TensorInfo>& manifest,
          std::span<const S> params)
      : cfg_(cfg), manifest_(manifest), params_(params) {}

  /// Returns the L2-normalised embeddings as columns (embed_dim x B).
  Mat<S> forward(const Mat<S>& input, std::size_t batch) {
    batch_ = batch;
    convs_.clear();
    heads_.clear();
    Mat<S> act = input;
    int c_in = 1, h = cfg_.input_bins, w = cfg_.input_frames;
    std::size_t t = 0;
    for (std::size_t l = 0; l < cfg_.conv_channels.size(); ++l) {
      const int c_out = cfg_.conv_channels[l];
      ConvCache cc;
      cc.c_in = c_in;
      cc.c_out = c_out;
      cc.h = h;
      cc.w = w;
      im2col(act, c_in, h, w, cc.cols);
      const auto weight = matrix(t, c_out, c_in * 9);
      const auto bias = vector(t + 1, c_out);
      cc.pre.noalias() = weight * cc.cols;
      cc.pre.colwise() += bias;
      check_finite(cc.pre, "conv" + std::to_string(l));
      t += 2;
      Mat<S> activated = cc.pre.unaryExpr([](S z) { return z * sigmoid(z); });
      act = avg_pool(activated, c_out, h, w);
      h = (h + 1) / 2;
      w = (w + 1) / 2;
      c_in = c_out;
      convs_.push_back(std::move(cc));
    }
    last_c_ = c_in;
    last_hw_ = h * w;

    // Global average pool: (C x B).
    Mat<S> feat(c_in, Eigen::Index(batch));
    for (int c = 0; c < c_in; ++c)
      for (std::size_t b = 0; b < batch; ++b)
        feat(c, Eigen::Index(b)) =
            act.row(c).segment(Eigen::Index(b) * last_hw_, last_hw_).mean();

    for (int i = 0; i < cfg_.head_layers; ++i) {
      const bool last = (i + 1 == cfg_.head_layers);
      const int out_dim = cfg_.embed_dim;  // hidden head width equals the embedding width
      HeadCache hc;
      hc.in = feat;
      const auto weight = matrix(t, out_dim, int(feat.rows()));
      const auto bias = vector(t + 1, out_dim);
      hc.pre.noalias() = weight * feat;
      hc.pre.colwise() += bias;
      check_finite(hc.pre, "head" + std::to_string(i));
      t += 2;
      feat = last ? hc.pre : Mat<S>(hc.pre.unaryExpr([](S z) { return z * sigmoid(z); }));
      heads_.push_back(std::move(hc));
    }

    norms_.resize(Eigen::Index(batch));
    out_ = feat;
    for (std::size_t b = 0; b < batch; ++b) {
      const S n = std::max(feat.col(Eigen::Index(b)).norm(), S(1e-12));
      norms_(Eigen::Index(b)) = n;
      out_.col(Eigen::Index(b)) /= n;
    }
    check_finite(out_, "l2_normalize");
    return out_;
  }

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(embeddings).
  void backward(const Mat<S>& d_embed, std::span<S> grad) {
    Mat<S> d(d_embed.rows(), d_embed.cols());
    for (Eigen::Index b = 0; b < d.cols(); ++b) {
      const S proj = out_.col(b).dot(d_embed.col(b));
      d.col(b) = (d_embed.col(b) - out_.col(b) * proj) / norms_(b);
    }

    std::size_t t = 2 * cfg_.conv_channels.size() + 2 * std::size_t(cfg_.head_layers);
    for (int i = cfg_.head_layers - 1; i >= 0; --i) {
      t -= 2;
      const auto& hc = heads_[std::size_t(i)];
      const bool last = (i + 1 == cfg_.head_layers);
      if (!last) d = d.cwiseProduct(hc.pre.unaryExpr([](S z) { return silu_grad(z); }));
      grad_matrix(grad, t, int(d.rows()), int(hc.in.rows())).noalias() += d * hc.in.transpose();
      grad_vector(grad, t + 1, int(d.rows())) += d.rowwise().sum();
      const auto weight = matrix(t, int(d.rows()), int(hc.in.rows()));
      Mat<S> d_in = weight.transpose() * d;
      d = std::move(d_in);
    }
    check_finite(d, "head backward");

    // Undo global average pooling.
    Mat<S> d_act(last_c_, Eigen::Index(batch_) * last_hw_);
    for (int c = 0; c < last_c_; ++c)
      for (std::size_t b = 0; b < batch_; ++b)
        d_act.row(c).segment(Eigen::Index(b) * last_hw_, last_hw_).setConstant(
            d(c, Eigen::Index(b)) / S(last_hw_));

    for (std::size_t l = convs_.size(); l-- > 0;) {
      t -= 2;
      const auto& cc = convs_[l];
      Mat<S> d_pre = avg_pool_backward(d_act, cc.c_out, cc.h, cc.w);
      d_pre = d_pre.cwiseProduct(cc.pre.unaryExpr([](S z) { return silu_grad(z); }));
      grad_matrix(grad, t, cc.c_out, cc.c_in * 9).noalias() += d_pre * cc.cols.transpose();
      grad_vector(grad, t + 1, cc.c_out) += d_pre.rowwise().sum();
      if (l > 0) {
        const auto weight = matrix(t, cc.c_out, cc.c_in * 9);
        Mat<S> d_cols = weight.transpose() * d_pre;
        d_act = col2im(d_cols, cc.c_in, cc.h, cc.w);
        check_finite(d_act, "conv" + std::to_string(l) + " backward");
      }
    }
  }

 private:
  struct ConvCache {
    int c_in = 0, c_out = 0, h = 0, w = 0;
    Mat<S> cols;
    Mat<S> pre;
  };
  struct HeadCache {
    Mat<S> in;
    Mat<S> pre;
  };

  static S silu_grad(S z) {
    const S s = sigmoid(z);
    return s * (S(1) + z * (S(1) - s));
  }

  Eigen::Map<const Mat<S>> matrix(std::size_t t, int rows, int cols) const {
    const auto& info = manifest_[t];
    return Eigen::Map<const Mat<S>>(params_.data() + info.offset, rows, cols);
  }
  Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> vector(std::size_t t, int n) const {
    const auto& info = manifest_[t];
    return Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(params_.data() + info.offset, n);
  }
  Eigen::Map<Mat<S>> grad_matrix(std::span<S> g, std::size_t t, int rows, int cols) const {
    return Eigen::Map<Mat<S>>(g.data() + manifest_[t].offset, rows, cols);
  }
  Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> grad_vector(std::span<S> g, std::size_t t,
                                                              int n) const {
    return Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(g.data() + manifest_[t].offset, n);
  }

  // Rows: (channel, ky, kx); columns: (sample, y, x). Zero padding of 1.
  void im2col(const Mat<S>& in, int c_in, int h, int w, Mat<S>& cols) const {
    const Eigen::Index hw = h * w;
    cols.setZero(c_in * 9, Eigen::Index(batch_) * hw);
    for (int c = 0; c < c_in; ++c) {
      const S* src = in.row(c).data();
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          S* dst = cols.row(c * 9 + ky * 3 + kx).data();
          const int dy = ky - 1, dx = kx - 1;
          for (std::size_t b = 0; b < batch_; ++b) {
            const Eigen::Index base = Eigen::Index(b) * hw;
            for (int y = 0; y < h; ++y) {
              const int ys = y + dy;
              if (ys < 0 || ys >= h) continue;
              const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
              for (int x = x0; x < x1; ++x) dst[base + y * w + x] = src[base + ys * w + x + dx];
            }
          }
        }
      }
    }
  }

  Mat<S> col2im(const Mat<S>& cols, int c_in, int h, int w) const {
    const Eigen::Index hw = h * w;
    Mat<S> out = Mat<S>::Zero(c_in, Eigen::Index(batch_) * hw);
    for (int c = 0; c < c_in; ++c) {
      S* dst = out.row(c).data();
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const S* src = cols.row(c * 9 + ky * 3 + kx).data();
          const int dy = ky - 1, dx = kx - 1;
          for (std::size_t b = 0; b < batch_; ++b) {
            const Eigen::Index base = Eigen::Index(b) * hw;
            for (int y = 0; y < h; ++y) {
              const int ys = y + dy;
              if (ys < 0 || ys >= h) continue;
              const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
              for (int x = x0; x < x1; ++x) dst[base + ys * w + x + dx] += src[base + y * w + x];
            }
          }
        }
      }
    }
    return out;
  }

  // 2x2 average pooling, ceil mode: partial windows average their valid cells.
  Mat<S> avg_pool(const Mat<S>& in, int c, int h, int w) const {
    const int oh = (h + 1) / 2, ow = (w + 1) / 2;
    const Eigen::Index hw = h * w, ohw = oh * ow;
    Mat<S> out(c, Eigen::Index(batch_) * ohw);
    for (int ch = 0; ch < c; ++ch) {
      const S* src = in.row(ch).data();
      S* dst = out.row(ch).data();
      for (std::size_t b = 0; b < batch_; ++b) {
        for (int y = 0; y < oh; ++y) {
          for (int x = 0; x < ow; ++x) {
            S acc = 0;
            int n = 0;
            for (int yy = 2 * y; yy < std::min(h, 2 * y + 2); ++yy)
              for (int xx = 2 * x; xx < std::min(w, 2 * x + 2); ++xx, ++n)
                acc += src[Eigen::Index(b) * hw + yy * w + xx];
            dst[Eigen::Index(b) * ohw + y * ow + x] = acc / S(n);
          }
        }
      }
    }
    return out;
  }

  Mat<S> avg_pool_backward(const Mat<S>& d_out, int c, int h, int w) const {
    const int oh = (h + 1) / 2, ow = (w + 1) / 2;
    const Eigen::Index hw = h * w, ohw = oh * ow;
    Mat<S> d_in(c, Eigen::Index(batch_) * hw);
    for (int ch = 0; ch < c; ++ch) {
      const S* src = d_out.row(ch).data();
      S* dst = d_in.row(ch).data();
      for (std::size_t b = 0; b < batch_; ++b) {
        for (int y = 0; y < h; ++y) {
          const int oy = y / 2;
          const int ny = std::min(h, 2 * oy + 2) - 2 * oy;
          for (int x = 0; x < w; ++x) {
            const int ox = x / 2;
            const int nx = std::min(w, 2 * ox + 2) - 2 * ox;
            dst[Eigen::Index(b) * hw + y * w + x] =
                src[Eigen::Index(b) * ohw + oy * ow + ox] / S(ny * nx);
          }
        }
      }
    }
    return d_in;
  }

  const EncoderConfig& cfg_;
  const std::vector<TensorInfo>& manifest_;
  std::span<const S> params_;
  std::size_t batch_ = 0;
  std::vector<ConvCache> convs_;
  std::vector<HeadCache> heads_;
  int last_c_ = 0;
  Eigen::Index last_hw_ = 0;
  Mat<S> out_;
  Eigen::Matrix<S, Eigen::Dynamic, 1> norms_;
};

/// NT-Xent on the columns of z (already unit norm). Returns the mean loss and
/// writes d(loss)/dz into `d_z` when non-null.
template <typename S>
S nt_xent(const Mat<S>& z, double tau, Mat<S>* d_z, std::vector<double>* per_pair) {
  const Eigen::Index n = z.cols();
  if (n % 2 != 0) fail(ErrorKind::Argument, "NT-Xent needs an even number of embeddings");
  const Mat<S> sim = z.transpose() * z;
  const S inv_tau = S(1.0 / tau);
  Mat<S> g = Mat<S>::Zero(n, n);
  double total = 0.0;
  if (per_pair) per_pair->assign(std::size_t(n), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index p = i ^ 1;
    S mx = -std::numeric_limits<S>::infinity();
    for (Eigen::Index k = 0; k < n; ++k)
      if (k != i) mx = std::max(mx, sim(i, k) * inv_tau);
    S denom = 0;
    for (Eigen::Index k = 0; k < n; ++k)
      if (k != i) denom += std::exp(sim(i, k) * inv_tau - mx);
    const S li = -(sim(i, p) * inv_tau - mx) + std::log(denom);
    total += double(li);
    if (per_pair) (*per_pair)[std::size_t(i)] = double(li);
    if (d_z) {
      for (Eigen::Index k = 0; k < n; ++k) {
        if (k == i) continue;
        const S soft = std::exp(sim(i, k) * inv_tau - mx) / denom;
        g(i, k) = (soft - (k == p ? S(1) : S(0))) * inv_tau / S(n);
      }
    }
  }
  if (d_z) *d_z = z * (g + g.transpose()).transpose();
  return S(total / double(n));
}

}  // namespace elfslam::model::detail
