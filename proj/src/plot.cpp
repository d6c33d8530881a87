#include "signattack/plot.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>

#include "signattack/errors.hpp"

namespace signattack {

namespace {

const cv::Scalar kPalette[] = {
    {180, 85, 30},   // blue-ish (BGR)
    {40, 70, 220},   // red
    {60, 160, 60},   // green
    {30, 160, 220},  // orange
    {160, 60, 160},  // purple
    {90, 90, 90},    // gray
};

struct Frame {
  cv::Mat canvas;
  int left, right, top, bottom;
  double x0, x1, y0, y1;

  cv::Point map(double x, double y) const {
    double fx = (x - x0) / (x1 - x0);
    double fy = (y - y0) / (y1 - y0);
    return {left + static_cast<int>(std::lround(fx * (right - left))),
            bottom - static_cast<int>(std::lround(fy * (bottom - top)))};
  }
};

std::string format_tick(double v) {
  char buf[32];
  if (std::abs(v) >= 1000 || (std::abs(v) < 0.01 && v != 0.0))
    std::snprintf(buf, sizeof(buf), "%.1e", v);
  else
    std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

Frame make_frame(const std::string& title, const std::string& x_label, const std::string& y_label,
                 double x0, double x1, double y0, double y1) {
  if (x1 <= x0) x1 = x0 + 1.0;
  if (y1 <= y0) y1 = y0 + 1.0;
  Frame fr;
  fr.canvas = cv::Mat(480, 680, CV_8UC3, cv::Scalar(255, 255, 255));
  fr.left = 70;
  fr.right = 650;
  fr.top = 50;
  fr.bottom = 420;
  fr.x0 = x0;
  fr.x1 = x1;
  fr.y0 = y0;
  fr.y1 = y1;

  cv::rectangle(fr.canvas, {fr.left, fr.top}, {fr.right, fr.bottom}, {0, 0, 0}, 1);
  cv::putText(fr.canvas, title, {fr.left, 30}, cv::FONT_HERSHEY_SIMPLEX, 0.6, {0, 0, 0}, 1,
              cv::LINE_AA);
  cv::putText(fr.canvas, x_label, {(fr.left + fr.right) / 2 - 40, 460}, cv::FONT_HERSHEY_SIMPLEX,
              0.45, {0, 0, 0}, 1, cv::LINE_AA);
  cv::putText(fr.canvas, y_label, {8, fr.top - 10}, cv::FONT_HERSHEY_SIMPLEX, 0.45, {0, 0, 0}, 1,
              cv::LINE_AA);

  for (int i = 0; i <= 5; ++i) {
    double xv = fr.x0 + (fr.x1 - fr.x0) * i / 5.0;
    double yv = fr.y0 + (fr.y1 - fr.y0) * i / 5.0;
    cv::Point px = fr.map(xv, fr.y0);
    cv::Point py = fr.map(fr.x0, yv);
    cv::line(fr.canvas, {px.x, fr.bottom}, {px.x, fr.bottom + 4}, {0, 0, 0}, 1);
    cv::line(fr.canvas, {fr.left - 4, py.y}, {fr.left, py.y}, {0, 0, 0}, 1);
    cv::line(fr.canvas, {px.x, fr.top}, {px.x, fr.bottom}, {230, 230, 230}, 1);
    cv::line(fr.canvas, {fr.left, py.y}, {fr.right, py.y}, {230, 230, 230}, 1);
    cv::putText(fr.canvas, format_tick(xv), {px.x - 14, fr.bottom + 20}, cv::FONT_HERSHEY_SIMPLEX,
                0.35, {0, 0, 0}, 1, cv::LINE_AA);
    cv::putText(fr.canvas, format_tick(yv), {6, py.y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.35,
                {0, 0, 0}, 1, cv::LINE_AA);
  }
  // redraw the border over the gridlines
  cv::rectangle(fr.canvas, {fr.left, fr.top}, {fr.right, fr.bottom}, {0, 0, 0}, 1);
  return fr;
}

void save(const cv::Mat& canvas, const std::string& path) {
  if (!cv::imwrite(path, canvas)) throw IoError("cannot write plot '" + path + "'");
}

}  // namespace

void line_chart(const std::string& path, const std::string& title, const std::string& x_label,
                const std::string& y_label, const std::vector<PlotSeries>& series) {
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!any) {
        x0 = x1 = s.x[i];
        y0 = y1 = s.y[i];
        any = true;
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  double pad = (y1 - y0) * 0.05;
  Frame fr = make_frame(title, x_label, y_label, x0, x1, y0 - pad, y1 + pad + 1e-12);

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const cv::Scalar& color = kPalette[si % std::size(kPalette)];
    for (std::size_t i = 0; i + 1 < s.x.size(); ++i)
      cv::line(fr.canvas, fr.map(s.x[i], s.y[i]), fr.map(s.x[i + 1], s.y[i + 1]), color, 2,
               cv::LINE_AA);
    int ly = fr.top + 18 * static_cast<int>(si) + 14;
    cv::line(fr.canvas, {fr.right - 150, ly - 4}, {fr.right - 120, ly - 4}, color, 2);
    cv::putText(fr.canvas, s.name, {fr.right - 112, ly}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0},
                1, cv::LINE_AA);
  }
  save(fr.canvas, path);
}

void bar_chart(const std::string& path, const std::string& title,
               const std::vector<std::string>& groups, const std::vector<std::string>& series,
               const std::vector<std::vector<double>>& values) {
  double vmax = 0.0;
  for (const auto& row : values)
    for (double v : row) vmax = std::max(vmax, v);
  Frame fr = make_frame(title, "", "", 0, static_cast<double>(groups.size()), 0, vmax * 1.1 + 1e-12);

  const int n_groups = static_cast<int>(groups.size());
  const int n_series = static_cast<int>(series.size());
  for (int g = 0; g < n_groups; ++g) {
    for (int s = 0; s < n_series; ++s) {
      double v = g < static_cast<int>(values.size()) && s < static_cast<int>(values[g].size())
                     ? values[g][s]
                     : 0.0;
      double xa = g + 0.15 + 0.7 * s / n_series;
      double xb = g + 0.15 + 0.7 * (s + 1) / n_series - 0.05;
      cv::rectangle(fr.canvas, fr.map(xa, v), fr.map(xb, 0), kPalette[s % std::size(kPalette)],
                    cv::FILLED);
    }
    cv::putText(fr.canvas, groups[g], fr.map(g + 0.1, 0) + cv::Point(0, 16),
                cv::FONT_HERSHEY_SIMPLEX, 0.35, {0, 0, 0}, 1, cv::LINE_AA);
  }
  for (int s = 0; s < n_series; ++s) {
    int ly = fr.top + 18 * s + 14;
    cv::rectangle(fr.canvas, {fr.right - 150, ly - 8}, {fr.right - 130, ly}, kPalette[s % std::size(kPalette)],
                  cv::FILLED);
    cv::putText(fr.canvas, series[s], {fr.right - 122, ly}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
                {0, 0, 0}, 1, cv::LINE_AA);
  }
  save(fr.canvas, path);
}

}  // namespace signattack
