#include "pcbdet/types.hpp"

#include <algorithm>

#include "pcbdet/errors.hpp"

namespace pcbdet {

DefectClass class_from_id(int id) {
  if (id < 0 || id >= kNumClasses) throw ParameterError("class id out of range: " + std::to_string(id));
  return static_cast<DefectClass>(id);
}

std::string_view class_name(DefectClass c) { return kClassNames.at(static_cast<std::size_t>(class_id(c))); }

std::optional<DefectClass> class_from_name(std::string_view name) {
  for (int i = 0; i < kNumClasses; ++i) {
    if (kClassNames[static_cast<std::size_t>(i)] == name) return static_cast<DefectClass>(i);
  }
  return std::nullopt;
}

double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double h = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

std::string_view source_name(Source s) {
  switch (s) {
    case Source::Real:
      return "real";
    case Source::Synthetic:
      return "synthetic";
    case Source::GanComposited:
      return "gan_composited";
  }
  return "real";
}

Source source_from_name(std::string_view name) {
  if (name == "real") return Source::Real;
  if (name == "synthetic") return Source::Synthetic;
  if (name == "gan_composited") return Source::GanComposited;
  throw ValidationError("unknown image source '" + std::string(name) + "'");
}

void AnnotatedImage::validate() const {
  for (const auto& lb : boxes) {
    if (!lb.box.valid()) throw ValidationError("inverted box in image '" + id + "'");
    if (!lb.box.within(image.width, image.height)) throw ValidationError("box outside image bounds in '" + id + "'");
  }
}

}  // namespace pcbdet
