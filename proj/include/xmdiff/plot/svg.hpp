#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "xmdiff/core/types.hpp"

namespace xmdiff::plot {

inline constexpr int kWidth = 640;
inline constexpr int kHeight = 400;
inline constexpr int kMargin = 48;

namespace svg_detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct Mapper {
  double x_min, x_max, y_min, y_max;
  double px(double x) const {
    return kMargin + (x - x_min) / (x_max - x_min) * (kWidth - 2 * kMargin);
  }
  double py(double y) const {
    return kHeight - kMargin - (y - y_min) / (y_max - y_min) * (kHeight - 2 * kMargin);
  }
};

inline std::string polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                            const Mapper& m, const std::string& color, double width) {
  std::string pts;
  for (std::size_t i = 0; i < xs.size(); ++i)
    pts += num(m.px(xs[i])) + "," + num(m.py(ys[i])) + " ";
  return "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" +
         num(width) + "\" points=\"" + pts + "\"/>\n";
}

inline std::string band(const std::vector<double>& xs, const std::vector<double>& lo,
                        const std::vector<double>& hi, const Mapper& m,
                        const std::string& color) {
  std::string pts;
  for (std::size_t i = 0; i < xs.size(); ++i)
    pts += num(m.px(xs[i])) + "," + num(m.py(hi[i])) + " ";
  for (std::size_t i = xs.size(); i-- > 0;)
    pts += num(m.px(xs[i])) + "," + num(m.py(lo[i])) + " ";
  return "<polygon fill=\"" + color + "\" fill-opacity=\"0.25\" stroke=\"none\" points=\"" +
         pts + "\"/>\n";
}

inline std::string frame(const std::string& title) {
  return "<rect x=\"" + num(kMargin) + "\" y=\"" + num(kMargin) + "\" width=\"" +
         num(kWidth - 2 * kMargin) + "\" height=\"" + num(kHeight - 2 * kMargin) +
         "\" fill=\"none\" stroke=\"#444\"/>\n<text x=\"" + num(kWidth / 2.0) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
         title + "</text>\n";
}

}  // namespace svg_detail

// Overlay of real vs generated sequences for one channel: per-time-step
// mean lines with +-1 standard deviation bands.
inline void write_overlay_plot(const std::string& path, const Batch& real, const Batch& gen,
                               int channel, const std::string& title) {
  if (real.empty() || gen.empty()) throw std::invalid_argument("overlay plot: empty batch");
  const Eigen::Index L = real.front().rows();
  auto stats = [&](const Batch& b) {
    std::vector<double> mean(static_cast<std::size_t>(L)), sd(static_cast<std::size_t>(L));
    for (Eigen::Index l = 0; l < L; ++l) {
      double mu = 0.0;
      for (const Seq& s : b) mu += s(l, channel);
      mu /= static_cast<double>(b.size());
      double var = 0.0;
      for (const Seq& s : b) var += (s(l, channel) - mu) * (s(l, channel) - mu);
      var /= static_cast<double>(b.size());
      mean[static_cast<std::size_t>(l)] = mu;
      sd[static_cast<std::size_t>(l)] = std::sqrt(var);
    }
    return std::make_pair(mean, sd);
  };
  auto [rm, rs] = stats(real);
  auto [gm, gs] = stats(gen);

  std::vector<double> xs(static_cast<std::size_t>(L));
  double y_min = 1e300, y_max = -1e300;
  for (Eigen::Index l = 0; l < L; ++l) {
    std::size_t i = static_cast<std::size_t>(l);
    xs[i] = static_cast<double>(l);
    y_min = std::min({y_min, rm[i] - rs[i], gm[i] - gs[i]});
    y_max = std::max({y_max, rm[i] + rs[i], gm[i] + gs[i]});
  }
  if (y_max <= y_min) y_max = y_min + 1.0;
  svg_detail::Mapper m{0.0, static_cast<double>(L - 1), y_min, y_max};

  auto plus = [](const std::vector<double>& a, const std::vector<double>& b, double sign) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + sign * b[i];
    return out;
  };

  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write plot: " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\">\n";
  os << svg_detail::frame(title);
  os << svg_detail::band(xs, plus(rm, rs, -1), plus(rm, rs, 1), m, "#1f77b4");
  os << svg_detail::band(xs, plus(gm, gs, -1), plus(gm, gs, 1), m, "#d62728");
  os << svg_detail::polyline(xs, rm, m, "#1f77b4", 1.5);
  os << svg_detail::polyline(xs, gm, m, "#d62728", 1.5);
  os << "<text x=\"" << kWidth - kMargin << "\" y=\"16\" text-anchor=\"end\" "
        "font-family=\"sans-serif\" font-size=\"12\" fill=\"#1f77b4\">real</text>\n";
  os << "<text x=\"" << kWidth - kMargin << "\" y=\"32\" text-anchor=\"end\" "
        "font-family=\"sans-serif\" font-size=\"12\" fill=\"#d62728\">generated</text>\n";
  os << "</svg>\n";
}

// Project rows onto their top two principal components.
inline Eigen::MatrixXd pca2(const Eigen::MatrixXd& data) {
  if (data.cols() < 2) throw std::invalid_argument("pca2: need at least 2 dims");
  Eigen::MatrixXd c = data.rowwise() - data.colwise().mean();
  Eigen::MatrixXd cov = c.transpose() * c / static_cast<double>(std::max<Eigen::Index>(1, data.rows() - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  // eigenvalues ascend; take the last two columns
  Eigen::MatrixXd basis = es.eigenvectors().rightCols(2).rowwise().reverse();
  return c * basis;
}

inline void write_scatter_plot(const std::string& path, const Eigen::MatrixXd& xy,
                               const std::vector<int>& labels, const std::string& title) {
  if (xy.rows() != static_cast<Eigen::Index>(labels.size()) || xy.cols() != 2)
    throw std::invalid_argument("scatter plot: need Nx2 points with N labels");
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};
  double x_min = xy.col(0).minCoeff(), x_max = xy.col(0).maxCoeff();
  double y_min = xy.col(1).minCoeff(), y_max = xy.col(1).maxCoeff();
  if (x_max <= x_min) x_max = x_min + 1.0;
  if (y_max <= y_min) y_max = y_min + 1.0;
  svg_detail::Mapper m{x_min, x_max, y_min, y_max};

  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write plot: " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\">\n";
  os << svg_detail::frame(title);
  for (Eigen::Index i = 0; i < xy.rows(); ++i) {
    const char* color = colors[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]) % 8];
    os << "<circle cx=\"" << svg_detail::num(m.px(xy(i, 0))) << "\" cy=\""
       << svg_detail::num(m.py(xy(i, 1))) << "\" r=\"3\" fill=\"" << color
       << "\" fill-opacity=\"0.8\"/>\n";
  }
  os << "</svg>\n";
}

}  // namespace xmdiff::plot
