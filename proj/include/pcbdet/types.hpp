#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pcbdet {

enum class DefectClass : int {
  MissingHole = 0,
  MouseBite = 1,
  OpenCircuit = 2,
  Short = 3,
  Spur = 4,
  SpuriousCopper = 5,
};

inline constexpr int kNumClasses = 6;

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "missing_hole", "mouse_bite", "open_circuit", "short", "spur", "spurious_copper"};

inline constexpr int class_id(DefectClass c) { return static_cast<int>(c); }
DefectClass class_from_id(int id);
std::string_view class_name(DefectClass c);
/// Exact Table-1 spelling only; nullopt otherwise.
std::optional<DefectClass> class_from_name(std::string_view name);

/// Axis-aligned box in continuous pixel coordinates (corner convention).
struct Box {
  double xmin = 0, ymin = 0, xmax = 0, ymax = 0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (xmin + xmax); }
  double cy() const { return 0.5 * (ymin + ymax); }
  bool valid() const { return xmin < xmax && ymin < ymax; }
  bool within(double w, double h) const { return xmin >= 0 && ymin >= 0 && xmax <= w && ymax <= h; }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Intersection over union; 0 for disjoint boxes.
double iou(const Box& a, const Box& b);
double intersection_area(const Box& a, const Box& b);

struct LabeledBox {
  Box box;
  DefectClass cls = DefectClass::MissingHole;

  friend bool operator==(const LabeledBox&, const LabeledBox&) = default;
};

/// 8-bit RGB, row-major, interleaved (HWC).
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Raster() = default;
  Raster(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  void set(int x, int y, std::array<std::uint8_t, 3> rgb) {
    for (int c = 0; c < 3; ++c) at(x, y, c) = rgb[c];
  }

  friend bool operator==(const Raster&, const Raster&) = default;
};

enum class Source { Real, Synthetic, GanComposited };

std::string_view source_name(Source s);
Source source_from_name(std::string_view name);

struct AnnotatedImage {
  Raster image;
  std::vector<LabeledBox> boxes;
  Source source = Source::Real;
  std::string id;

  /// ValidationError if any box is inverted or leaves the raster.
  void validate() const;
};

}  // namespace pcbdet
