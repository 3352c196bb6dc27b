#include "pcbdet/augment.hpp"

#include <algorithm>
#include <cmath>

#include "pcbdet/errors.hpp"
#include "pcbdet/rng.hpp"

namespace pcbdet {
namespace {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

void validate(const AugmentOp& op) {
  std::visit(Overloaded{
                 [](const Rotate90& r) {
                   if (r.k < 1 || r.k > 3) throw ParameterError("rotate90 k must be 1, 2 or 3");
                 },
                 [](const Scale& s) {
                   if (!(s.s >= 0.5 && s.s <= 2.0)) throw ParameterError("scale s must lie in [0.5, 2]");
                 },
                 [](const Contrast& c) {
                   if (!(c.c >= 0.5 && c.c <= 1.5)) throw ParameterError("contrast c must lie in [0.5, 1.5]");
                 },
             },
             op);
}

int scaled_extent(int n, double s) { return std::max(1, static_cast<int>(std::ceil(n * s - 1e-9))); }

Box map_box(const AugmentOp& op, const Box& b, int w, int h) {
  const auto [x0, y0] = map_point(op, b.xmin, b.ymin, w, h);
  const auto [x1, y1] = map_point(op, b.xmax, b.ymax, w, h);
  return Box{std::min(x0, x1), std::min(y0, y1), std::max(x0, x1), std::max(y0, y1)};
}

AnnotatedImage rotate(const AnnotatedImage& in, int k) {
  const Raster& src = in.image;
  const int w = src.width;
  const int h = src.height;
  AnnotatedImage out = in;
  out.image = (k == 2) ? Raster(w, h) : Raster(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int nx = 0, ny = 0;
      switch (k) {
        case 1: nx = h - 1 - y; ny = x; break;
        case 2: nx = w - 1 - x; ny = h - 1 - y; break;
        default: nx = y; ny = w - 1 - x; break;
      }
      for (int c = 0; c < 3; ++c) out.image.at(nx, ny, c) = src.at(x, y, c);
    }
  }
  for (auto& lb : out.boxes) lb.box = map_box(Rotate90{k}, lb.box, w, h);
  return out;
}

AnnotatedImage scale(const AnnotatedImage& in, double s) {
  if (s == 1.0) return in;
  const Raster& src = in.image;
  AnnotatedImage out = in;
  out.image = Raster(scaled_extent(src.width, s), scaled_extent(src.height, s));
  for (int y = 0; y < out.image.height; ++y) {
    const int sy = std::min(src.height - 1, static_cast<int>(std::floor((y + 0.5) / s)));
    for (int x = 0; x < out.image.width; ++x) {
      const int sx = std::min(src.width - 1, static_cast<int>(std::floor((x + 0.5) / s)));
      for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = src.at(sx, sy, c);
    }
  }
  for (auto& lb : out.boxes) lb.box = map_box(Scale{s}, lb.box, src.width, src.height);
  return out;
}

AnnotatedImage contrast(const AnnotatedImage& in, double factor) {
  AnnotatedImage out = in;
  Raster& r = out.image;
  const double n = static_cast<double>(r.width) * r.height;
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (int y = 0; y < r.height; ++y)
      for (int x = 0; x < r.width; ++x) mean += r.at(x, y, c);
    mean /= n;
    for (int y = 0; y < r.height; ++y)
      for (int x = 0; x < r.width; ++x) {
        const double v = std::round(mean + factor * (r.at(x, y, c) - mean));
        r.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
  }
  return out;
}

}  // namespace

std::pair<double, double> map_point(const AugmentOp& op, double x, double y, int width, int height) {
  return std::visit(Overloaded{
                        [&](const Rotate90& r) -> std::pair<double, double> {
                          switch (r.k) {
                            case 1: return {height - y, x};
                            case 2: return {width - x, height - y};
                            default: return {y, width - x};
                          }
                        },
                        [&](const Scale& s) -> std::pair<double, double> { return {s.s * x, s.s * y}; },
                        [&](const Contrast&) -> std::pair<double, double> { return {x, y}; },
                    },
                    op);
}

AnnotatedImage apply_augmentations(const AnnotatedImage& img, std::span<const AugmentOp> ops) {
  for (const auto& op : ops) validate(op);
  AnnotatedImage cur = img;
  for (const auto& op : ops) {
    cur = std::visit(Overloaded{
                         [&](const Rotate90& r) { return rotate(cur, r.k); },
                         [&](const Scale& s) { return scale(cur, s.s); },
                         [&](const Contrast& c) { return contrast(cur, c.c); },
                     },
                     op);
  }
  return cur;
}

std::vector<AugmentOp> sample_augmentations(const AugmentPolicy& policy, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<AugmentOp> ops;
  if (rng.bernoulli(policy.rotate_prob)) ops.emplace_back(Rotate90{rng.uniform_int(1, 3)});
  if (rng.bernoulli(policy.scale_prob)) ops.emplace_back(Scale{rng.uniform(policy.scale_min, policy.scale_max)});
  if (rng.bernoulli(policy.contrast_prob)) {
    ops.emplace_back(Contrast{rng.uniform(policy.contrast_min, policy.contrast_max)});
  }
  return ops;
}

AnnotatedImage random_augment(const AnnotatedImage& img, const AugmentPolicy& policy, std::uint64_t seed) {
  const auto ops = sample_augmentations(policy, seed);
  AnnotatedImage out = apply_augmentations(img, ops);
  if (out.image.width != img.image.width || out.image.height != img.image.height) {
    out = fit_canvas(out, img.image.width, img.image.height);
  }
  return out;
}

AnnotatedImage fit_canvas(const AnnotatedImage& img, int width, int height, double min_side) {
  AnnotatedImage out = img;
  out.image = Raster(width, height);
  const int cw = std::min(width, img.image.width);
  const int ch = std::min(height, img.image.height);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x)
      for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = img.image.at(x, y, c);
  out.boxes.clear();
  for (const auto& lb : img.boxes) {
    Box b{std::max(0.0, lb.box.xmin), std::max(0.0, lb.box.ymin), std::min<double>(cw, lb.box.xmax),
          std::min<double>(ch, lb.box.ymax)};
    if (b.width() >= min_side && b.height() >= min_side) out.boxes.push_back({b, lb.cls});
  }
  return out;
}

}  // namespace pcbdet
