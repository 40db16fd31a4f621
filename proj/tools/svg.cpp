#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace elfslam::cli {

namespace {

constexpr double kWidth = 480, kHeight = 480, kMargin = 40;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Frame {
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

  void include(double x, double y) {
    x0 = std::min(x0, x), x1 = std::max(x1, x);
    y0 = std::min(y0, y), y1 = std::max(y1, y);
  }
  // Equal scaling on both axes so trajectories keep their shape.
  double scale() const {
    const double w = kWidth - 2 * kMargin, h = kHeight - 2 * kMargin;
    return std::min(w / std::max(x1 - x0, 1e-9), h / std::max(y1 - y0, 1e-9));
  }
  double px(double x) const { return kMargin + (x - x0) * scale(); }
  double py(double y) const { return kHeight - kMargin - (y - y0) * scale(); }
};

std::string open(const std::string& title) {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
    << "<title>" << title << "</title>\n"
    << "<rect class=\"axes\" x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\""
    << kWidth - 2 * kMargin << "\" height=\"" << kHeight - 2 * kMargin
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  return o.str();
}

std::string polyline(const std::vector<std::pair<double, double>>& pts, const char* cls,
                     const char* colour) {
  std::ostringstream o;
  o << "<polyline class=\"" << cls << "\" fill=\"none\" stroke=\"" << colour
    << "\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i)
    o << (i ? " " : "") << num(pts[i].first) << "," << num(pts[i].second);
  o << "\"/>\n";
  return o.str();
}

}  // namespace

std::string svg_heatmap(const Table& matrix) {
  std::string out = open("ESS matrix");
  const std::size_t n = matrix.rows.size();
  if (n > 0) {
    const std::size_t m = matrix.rows.front().size();
    const double cw = (kWidth - 2 * kMargin) / double(m), ch = (kHeight - 2 * kMargin) / double(n);
    std::ostringstream o;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double v = std::clamp(matrix.rows[i][j], 0.0, 1.0);
        const int g = int(std::lround(255.0 * (1.0 - v)));
        o << "<rect class=\"cell\" x=\"" << num(kMargin + double(j) * cw) << "\" y=\""
          << num(kMargin + double(i) * ch) << "\" width=\"" << num(cw) << "\" height=\""
          << num(ch) << "\" fill=\"rgb(" << g << "," << g << "," << g << ")\"/>\n";
      }
    out += o.str();
  }
  return out + "</svg>\n";
}

std::string svg_trajectory(const Table& t) {
  std::string out = open("trajectory");
  if (t.rows.empty()) return out + "</svg>\n";
  const char* names[3][3] = {{"gt_x", "gt_y", "ground-truth"},
                             {"dr_x", "dr_y", "dead-reckoned"},
                             {"opt_x", "opt_y", "optimized"}};
  const char* colours[3] = {"black", "#d62728", "#1f77b4"};
  Frame f{std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest(),
          std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest()};
  for (const auto& n : names) {
    const auto cx = t.column(n[0]), cy = t.column(n[1]);
    for (const auto& r : t.rows) f.include(r[cx], r[cy]);
  }
  for (int k = 0; k < 3; ++k) {
    const auto cx = t.column(names[k][0]), cy = t.column(names[k][1]);
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : t.rows) pts.emplace_back(f.px(r[cx]), f.py(r[cy]));
    out += polyline(pts, names[k][2], colours[k]);
  }
  return out + "</svg>\n";
}

std::string svg_error_cdf(const std::vector<Table>& results, const std::vector<std::string>& labels) {
  std::string out = open("error CDF");
  const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  double emax = 0.0;
  std::vector<std::vector<double>> errs;
  for (const auto& t : results) {
    errs.emplace_back();
    if (t.rows.empty()) continue;
    const auto c = t.column("error_m");
    for (const auto& r : t.rows) errs.back().push_back(r[c]);
    std::sort(errs.back().begin(), errs.back().end());
    emax = std::max(emax, errs.back().back());
  }
  if (emax <= 0.0) emax = 1.0;
  const double w = kWidth - 2 * kMargin, h = kHeight - 2 * kMargin;
  for (std::size_t k = 0; k < errs.size(); ++k) {
    if (errs[k].empty()) continue;
    std::vector<std::pair<double, double>> pts{{kMargin, kHeight - kMargin}};
    for (std::size_t i = 0; i < errs[k].size(); ++i) {
      const double x = kMargin + errs[k][i] / emax * w;
      const double y = kHeight - kMargin - double(i + 1) / double(errs[k].size()) * h;
      pts.emplace_back(x, pts.back().second);
      pts.emplace_back(x, y);
    }
    out += "<!-- " + (k < labels.size() ? labels[k] : std::string()) + " -->\n";
    out += polyline(pts, "cdf", colours[k % 5]);
  }
  out += "<text x=\"" + num(kWidth - kMargin) + "\" y=\"" + num(kHeight - 10) +
         "\" text-anchor=\"end\" font-size=\"12\">error (m), max " + num(emax) + "</text>\n";
  return out + "</svg>\n";
}

}  // namespace elfslam::cli
