#include "cgt/cli/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace cgt::cli {

namespace {

constexpr std::array<const char*, 16> kPalette{
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#637939", "#8c6d31", "#843c39", "#7b4173", "#3182bd"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", std::abs(v) < 0.005 ? 0.0 : v);
  return buf;
}

}  // namespace

const char* palette_color(std::size_t index) { return kPalette[index % kPalette.size()]; }

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string diverging_color(double v) {
  v = std::clamp(v, -1.0, 1.0);
  // white at 0, red towards +1, blue towards -1
  const auto ch = [](double t) { return static_cast<int>(std::lround(255.0 * (1.0 - t))); };
  int r = 255, g = 255, b = 255;
  if (v > 0) {
    g = ch(v * 0.85);
    b = ch(v * 0.85);
  } else if (v < 0) {
    r = ch(-v * 0.85);
    g = ch(-v * 0.85);
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

Svg::Svg(std::uint64_t config_hash) : hash_(config_hash) {}

void Svg::rect(double x, double y, double w, double h, const std::string& fill, const std::string& title) {
  body_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" + num(h) +
           "\" fill=\"" + fill + "\"";
  if (title.empty()) {
    body_ += "/>\n";
  } else {
    body_ += "><title>" + escape_xml(title) + "</title></rect>\n";
  }
}

void Svg::circle(double cx, double cy, double r, const std::string& fill, double opacity) {
  body_ += "<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" + num(r) + "\" fill=\"" + fill + "\"";
  if (opacity < 1.0) body_ += " fill-opacity=\"" + num(opacity) + "\"";
  body_ += "/>\n";
}

void Svg::line(double x1, double y1, double x2, double y2, const std::string& stroke, double width) {
  body_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
           "\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) + "\"/>\n";
}

void Svg::polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, double width) {
  body_ += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) + "\" points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i) body_ += ' ';
    body_ += num(pts[i].first) + ',' + num(pts[i].second);
  }
  body_ += "\"/>\n";
}

void Svg::text(double x, double y, const std::string& s, int size, const std::string& anchor) {
  body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"" +
           std::to_string(size) + "\" text-anchor=\"" + anchor + "\">" + escape_xml(s) + "</text>\n";
}

std::string Svg::str() const {
  char head[256];
  std::snprintf(head, sizeof head,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" viewBox=\"0 0 %d %d\">\n"
                "<!-- cgt config-hash %016llx -->\n",
                kCanvasWidth, kCanvasHeight, kCanvasWidth, kCanvasHeight, static_cast<unsigned long long>(hash_));
  return std::string(head) + "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" + body_ + "</svg>\n";
}

}  // namespace cgt::cli
