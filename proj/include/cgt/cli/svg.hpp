#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cgt::cli {

inline constexpr int kCanvasWidth = 800;
inline constexpr int kCanvasHeight = 600;

/// Fixed 16-entry palette; class c is drawn in palette_color(c).
const char* palette_color(std::size_t index);

/// Minimal SVG document on the fixed canvas. Coordinates are printed with two
/// decimals so identical inputs give identical bytes.
class Svg {
 public:
  explicit Svg(std::uint64_t config_hash);

  void rect(double x, double y, double w, double h, const std::string& fill, const std::string& title = {});
  void circle(double cx, double cy, double r, const std::string& fill, double opacity = 1.0);
  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0);
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, double width = 1.5);
  void text(double x, double y, const std::string& s, int size = 12, const std::string& anchor = "start");

  std::string str() const;

 private:
  std::string body_;
  std::uint64_t hash_;
};

/// Linear map from a data interval onto a pixel interval.
struct Axis {
  double lo, hi;  // data
  double p0, p1;  // pixels
  double operator()(double v) const { return hi == lo ? 0.5 * (p0 + p1) : p0 + (v - lo) / (hi - lo) * (p1 - p0); }
};

std::string escape_xml(const std::string& s);
/// Diverging blue-white-red colour for v in [-1, 1] (clamped).
std::string diverging_color(double v);

}  // namespace cgt::cli
