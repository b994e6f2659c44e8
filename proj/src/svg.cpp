#include "freqact/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "freqact/errors.hpp"

namespace freqact::svg {

namespace {

constexpr int kMarginL = 64, kMarginR = 20, kMarginT = 40, kMarginB = 48;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&')
      out += "&amp;";
    else if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else
      out += c;
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  int px0, px1, py0, py1;  // pixel box; py0 is the top edge

  double sx(double x) const {
    const double t = x1 > x0 ? (x - x0) / (x1 - x0) : 0.5;
    return px0 + t * (px1 - px0);
  }
  double sy(double y) const {
    const double t = y1 > y0 ? (y - y0) / (y1 - y0) : 0.5;
    return py1 - t * (py1 - py0);
  }
};

void data_bounds(const std::vector<Series>& series, double* x0, double* x1,
                 double* y0, double* y1) {
  *x0 = *y0 = 1e300;
  *x1 = *y1 = -1e300;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      *x0 = std::min(*x0, s.x[i]);
      *x1 = std::max(*x1, s.x[i]);
      *y0 = std::min(*y0, s.y[i]);
      *y1 = std::max(*y1, s.y[i]);
    }
  if (*x0 > *x1) {
    *x0 = 0;
    *x1 = 1;
    *y0 = 0;
    *y1 = 1;
  }
  if (*x1 == *x0) {
    *x0 -= 0.5;
    *x1 += 0.5;
  }
  if (*y1 == *y0) {
    *y0 -= 0.5;
    *y1 += 0.5;
  }
  const double ypad = 0.06 * (*y1 - *y0);
  *y0 -= ypad;
  *y1 += ypad;
}

std::string open_svg(int width, int height) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" "
                "height=\"%d\" viewBox=\"0 0 %d %d\" "
                "font-family=\"sans-serif\" font-size=\"12\">\n"
                "<rect width=\"%d\" height=\"%d\" fill=\"white\"/>\n",
                width, height, width, height, width, height);
  return buf;
}

void axes_and_ticks(std::string& out, const Frame& f, const std::string& title,
                    const std::string& xlabel, const std::string& ylabel,
                    int width) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" "
                "fill=\"none\" stroke=\"#444\"/>\n",
                f.px0, f.py0, f.px1 - f.px0, f.py1 - f.py0);
  out += buf;
  for (int i = 0; i <= 5; ++i) {
    const double tx = f.x0 + (f.x1 - f.x0) * i / 5.0;
    const double ty = f.y0 + (f.y1 - f.y0) * i / 5.0;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%d\" x2=\"%.1f\" y2=\"%d\" "
                  "stroke=\"#444\"/>"
                  "<text x=\"%.1f\" y=\"%d\" text-anchor=\"middle\">%s</text>\n",
                  f.sx(tx), f.py1, f.sx(tx), f.py1 + 5, f.sx(tx), f.py1 + 18,
                  fmt(tx).c_str());
    out += buf;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%d\" y1=\"%.1f\" x2=\"%d\" y2=\"%.1f\" "
                  "stroke=\"#444\"/>"
                  "<text x=\"%d\" y=\"%.1f\" text-anchor=\"end\">%s</text>\n",
                  f.px0 - 5, f.sy(ty), f.px0, f.sy(ty), f.px0 - 8,
                  f.sy(ty) + 4, fmt(ty).c_str());
    out += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%d\" y=\"20\" text-anchor=\"middle\" "
                "font-size=\"14\">%s</text>\n",
                width / 2, esc(title).c_str());
  out += buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%s</text>\n",
                (f.px0 + f.px1) / 2, f.py1 + 36, esc(xlabel).c_str());
  out += buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"16\" y=\"%d\" text-anchor=\"middle\" "
                "transform=\"rotate(-90 16 %d)\">%s</text>\n",
                (f.py0 + f.py1) / 2, (f.py0 + f.py1) / 2, esc(ylabel).c_str());
  out += buf;
}

// Dark blue through magenta to yellow.
std::string ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double stops[5][3] = {{13, 8, 135},
                              {126, 3, 168},
                              {204, 71, 120},
                              {248, 149, 64},
                              {240, 249, 33}};
  const double u = t * 4.0;
  const int i = std::min((int)u, 3);
  const double w = u - i;
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                (int)std::lround(stops[i][0] + w * (stops[i + 1][0] - stops[i][0])),
                (int)std::lround(stops[i][1] + w * (stops[i + 1][1] - stops[i][1])),
                (int)std::lround(stops[i][2] + w * (stops[i + 1][2] - stops[i][2])));
  return buf;
}

}  // namespace

std::string line_chart(const std::string& title, const std::string& xlabel,
                       const std::string& ylabel,
                       const std::vector<Series>& series, int width,
                       int height) {
  Frame f;
  data_bounds(series, &f.x0, &f.x1, &f.y0, &f.y1);
  f.px0 = kMarginL;
  f.px1 = width - kMarginR;
  f.py0 = kMarginT;
  f.py1 = height - kMarginB;

  std::string out = open_svg(width, height);
  axes_and_ticks(out, f, title, xlabel, ylabel, width);
  char buf[256];
  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    if (s.x.size() != s.y.size())
      throw DataError("series '" + s.label + "' x/y lengths differ");
    const char* color = kPalette[si % 6];
    out += "<polyline fill=\"none\" stroke=\"";
    out += color;
    out += "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", f.sx(s.x[i]), f.sy(s.y[i]));
      out += buf;
    }
    out += "\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%d\" y=\"%d\" width=\"12\" height=\"12\" "
                  "fill=\"%s\"/><text x=\"%d\" y=\"%d\">%s</text>\n",
                  f.px0 + 8, f.py0 + 8 + 18 * (int)si, color, f.px0 + 24,
                  f.py0 + 18 + 18 * (int)si, esc(s.label).c_str());
    out += buf;
  }
  out += "</svg>\n";
  return out;
}

std::string scatter(const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, const std::vector<double>& x,
                    const std::vector<double>& y,
                    const std::vector<std::string>& labels, int width,
                    int height) {
  if (x.size() != y.size() || x.size() != labels.size())
    throw DataError("scatter inputs disagree in length");
  std::vector<Series> probe(1);
  probe[0].x = x;
  probe[0].y = y;
  Frame f;
  data_bounds(probe, &f.x0, &f.x1, &f.y0, &f.y1);
  f.px0 = kMarginL;
  f.px1 = width - kMarginR;
  f.py0 = kMarginT;
  f.py1 = height - kMarginB;

  std::string out = open_svg(width, height);
  axes_and_ticks(out, f, title, xlabel, ylabel, width);
  char buf[256];
  for (size_t i = 0; i < x.size(); ++i) {
    std::snprintf(buf, sizeof buf,
                  "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"4\" fill=\"%s\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\">%s</text>\n",
                  f.sx(x[i]), f.sy(y[i]), kPalette[0], f.sx(x[i]) + 7,
                  f.sy(y[i]) - 7, esc(labels[i]).c_str());
    out += buf;
  }
  out += "</svg>\n";
  return out;
}

std::string heatmap(const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, int rows, int cols,
                    const std::vector<double>& values, int width, int height) {
  if (rows < 1 || cols < 1 || values.size() != (size_t)rows * cols)
    throw DataError("heatmap size mismatch");
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi == lo) hi = lo + 1.0;

  Frame f;
  f.px0 = kMarginL;
  f.px1 = width - kMarginR - 24;
  f.py0 = kMarginT;
  f.py1 = height - kMarginB;
  f.x0 = 0;
  f.x1 = cols;
  f.y0 = 0;
  f.y1 = rows;

  std::string out = open_svg(width, height);
  char buf[512];
  const double cw = (double)(f.px1 - f.px0) / cols;
  const double ch = (double)(f.py1 - f.py0) / rows;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double t = (values[(size_t)r * cols + c] - lo) / (hi - lo);
      std::snprintf(buf, sizeof buf,
                    "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" "
                    "height=\"%.2f\" fill=\"%s\"/>\n",
                    f.px0 + c * cw, f.py0 + r * ch, cw + 0.5, ch + 0.5,
                    ramp(t).c_str());
      out += buf;
    }
  for (int i = 0; i < 24; ++i) {
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%d\" y=\"%.2f\" width=\"12\" height=\"%.2f\" "
                  "fill=\"%s\"/>\n",
                  f.px1 + 6, f.py1 - (i + 1) * (f.py1 - f.py0) / 24.0,
                  (f.py1 - f.py0) / 24.0 + 0.5, ramp((i + 0.5) / 24.0).c_str());
    out += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%d\" y=\"%d\">%s</text>"
                "<text x=\"%d\" y=\"%d\">%s</text>\n",
                f.px1 + 20, f.py1, fmt(lo).c_str(), f.px1 + 20, f.py0 + 10,
                fmt(hi).c_str());
  out += buf;
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" "
                "fill=\"none\" stroke=\"#444\"/>\n",
                f.px0, f.py0, f.px1 - f.px0, f.py1 - f.py0);
  out += buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"%d\" y=\"20\" text-anchor=\"middle\" "
                "font-size=\"14\">%s</text>\n",
                width / 2, esc(title).c_str());
  out += buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%s</text>\n",
                (f.px0 + f.px1) / 2, f.py1 + 36, esc(xlabel).c_str());
  out += buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"16\" y=\"%d\" text-anchor=\"middle\" "
                "transform=\"rotate(-90 16 %d)\">%s</text>\n",
                (f.py0 + f.py1) / 2, (f.py0 + f.py1) / 2, esc(ylabel).c_str());
  out += buf;
  out += "</svg>\n";
  return out;
}

}  // namespace freqact::svg
