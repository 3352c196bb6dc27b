#include "pcbdet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcbdet/errors.hpp"
#include "pcbdet/rng.hpp"

namespace pcbdet {
namespace {

using Rgb = std::array<std::uint8_t, 3>;

struct Trace {
  int x0, x1, y0, y1;  // inclusive pixel rect
  bool horizontal;
};

struct Pad {
  int cx, cy, radius, hole;
};

struct Board {
  Raster img;
  std::vector<Trace> traces;
  std::vector<Pad> pads;
  Rgb substrate{};
  Rgb copper{};
  Rgb hole{};
  // Rows of horizontal-trace index for shorts.
};

std::uint8_t jitter(Rng& rng, std::uint8_t base, int amount) {
  return static_cast<std::uint8_t>(std::clamp(base + rng.uniform_int(-amount, amount), 0, 255));
}

void paint(Board& b, Rng& rng, int x, int y, const Rgb& color, int noise = 6) {
  if (x < 0 || y < 0 || x >= b.img.width || y >= b.img.height) return;
  for (int c = 0; c < 3; ++c) b.img.at(x, y, c) = jitter(rng, color[c], noise);
}

void fill_rect(Board& b, Rng& rng, int x0, int y0, int x1, int y1, const Rgb& color) {
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) paint(b, rng, x, y, color);
}

void fill_disk(Board& b, Rng& rng, double cx, double cy, double r, const Rgb& color) {
  const int x0 = static_cast<int>(std::floor(cx - r)), x1 = static_cast<int>(std::ceil(cx + r));
  const int y0 = static_cast<int>(std::floor(cy - r)), y1 = static_cast<int>(std::ceil(cy + r));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      if (dx * dx + dy * dy <= r * r) paint(b, rng, x, y, color);
    }
}

bool overlaps_any(const Box& box, const std::vector<LabeledBox>& existing) {
  return std::any_of(existing.begin(), existing.end(),
                     [&](const LabeledBox& lb) { return intersection_area(box, lb.box) > 0.0; });
}

/// Grows `box` to at least `min_side` per axis, clipped to the canvas.
Box ensure_min_size(Box box, double min_side, int w, int h) {
  auto grow = [&](double& lo, double& hi, double limit) {
    const double need = min_side - (hi - lo);
    if (need <= 0) return;
    lo -= std::floor(need / 2);
    hi += std::ceil(need / 2);
    if (lo < 0) {
      hi -= lo;
      lo = 0;
    }
    if (hi > limit) {
      lo -= hi - limit;
      hi = limit;
    }
    lo = std::max(lo, 0.0);
  };
  grow(box.xmin, box.xmax, w);
  grow(box.ymin, box.ymax, h);
  return box;
}

Box clip_box(int x0, int y0, int x1, int y1, int w, int h) {
  return Box{static_cast<double>(std::max(0, x0)), static_cast<double>(std::max(0, y0)),
             static_cast<double>(std::min(w, x1 + 1)), static_cast<double>(std::min(h, y1 + 1))};
}

Board make_layout(Rng& rng, int w, int h) {
  Board b;
  b.img = Raster(w, h);
  const int tint = rng.uniform_int(-10, 10);
  b.substrate = {static_cast<std::uint8_t>(30 + tint / 2), static_cast<std::uint8_t>(100 + tint),
                 static_cast<std::uint8_t>(55 + tint / 2)};
  b.copper = {static_cast<std::uint8_t>(195 + tint), static_cast<std::uint8_t>(155 + tint), 70};
  b.hole = {25, 25, 25};
  fill_rect(b, rng, 0, 0, w - 1, h - 1, b.substrate);

  const int spacing = rng.uniform_int(18, 24);
  const int thickness = rng.uniform_int(3, 4);
  for (int y = rng.uniform_int(6, 12); y + thickness < h - 4; y += spacing) {
    const int x0 = rng.bernoulli(0.7) ? 0 : rng.uniform_int(4, w / 4);
    const int x1 = rng.bernoulli(0.7) ? w - 1 : rng.uniform_int(3 * w / 4, w - 5);
    b.traces.push_back({x0, x1, y, y + thickness - 1, true});
    fill_rect(b, rng, x0, y, x1, y + thickness - 1, b.copper);
  }

  // Pads sit midway between horizontal traces.
  for (std::size_t i = 0; i + 1 < b.traces.size(); ++i) {
    const int cy = (b.traces[i].y1 + b.traces[i + 1].y0 + 1) / 2;
    for (int cx = rng.uniform_int(10, 24); cx < w - 8; cx += rng.uniform_int(22, 34)) {
      if (!rng.bernoulli(0.6)) continue;
      Pad p{cx, cy, 5, 2};
      b.pads.push_back(p);
      fill_disk(b, rng, cx + 0.5, cy + 0.5, p.radius, b.copper);
      fill_disk(b, rng, cx + 0.5, cy + 0.5, p.hole + 0.5, b.hole);
    }
  }
  return b;
}

const Trace* pick_horizontal(Board& b, Rng& rng, int min_len) {
  std::vector<const Trace*> cands;
  for (const auto& t : b.traces)
    if (t.horizontal && t.x1 - t.x0 >= min_len) cands.push_back(&t);
  if (cands.empty()) return nullptr;
  return cands[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(cands.size()) - 1))];
}

/// Adds a horizontal trace when the layout has none (tiny boards).
const Trace& ensure_trace(Board& b, Rng& rng) {
  if (const Trace* t = pick_horizontal(b, rng, 24)) return *t;
  const int y = b.img.height / 2 - 2;
  b.traces.push_back({0, b.img.width - 1, y, y + 3, true});
  fill_rect(b, rng, 0, y, b.img.width - 1, y + 3, b.copper);
  return b.traces.back();
}

Box draw_missing_hole(Board& b, Rng& rng, const std::vector<LabeledBox>& taken) {
  const int w = b.img.width, h = b.img.height;
  for (int attempt = 0; attempt < 30 && !b.pads.empty(); ++attempt) {
    const Pad& p = b.pads[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(b.pads.size()) - 1))];
    const Box box = clip_box(p.cx - p.radius, p.cy - p.radius, p.cx + p.radius, p.cy + p.radius, w, h);
    if (overlaps_any(box, taken) && attempt < 29) continue;
    fill_disk(b, rng, p.cx + 0.5, p.cy + 0.5, p.hole + 0.5, b.copper);
    return box;
  }
  // No usable pad: add a solid one on free substrate.
  const int cx = rng.uniform_int(8, w - 9), cy = rng.uniform_int(8, h - 9);
  fill_disk(b, rng, cx + 0.5, cy + 0.5, 5, b.copper);
  return clip_box(cx - 5, cy - 5, cx + 5, cy + 5, w, h);
}

Box draw_mouse_bite(Board& b, Rng& rng, const std::vector<LabeledBox>& taken) {
  const int w = b.img.width, h = b.img.height;
  const Trace& t = ensure_trace(b, rng);
  Box box{};
  int x = 0;
  bool top = true;
  for (int attempt = 0; attempt < 30; ++attempt) {
    x = rng.uniform_int(std::max(t.x0 + 4, 4), std::min(t.x1 - 14, w - 14));
    top = rng.bernoulli(0.5);
    box = ensure_min_size(clip_box(x - 1, t.y0 - 3, x + 11, t.y1 + 3, w, h), 8, w, h);
    if (!overlaps_any(box, taken)) break;
  }
  const int bites = rng.uniform_int(2, 3);
  for (int i = 0; i < bites; ++i) {
    const double bx = x + 1.5 + i * (9.0 / std::max(1, bites - 1));
    const double by = top ? t.y0 + 0.5 : t.y1 + 0.5;
    fill_disk(b, rng, bx, by, 2.2, b.substrate);
  }
  return box;
}

Box draw_open_circuit(Board& b, Rng& rng, const std::vector<LabeledBox>& taken) {
  const int w = b.img.width, h = b.img.height;
  const Trace& t = ensure_trace(b, rng);
  const int gap = rng.uniform_int(3, 5);
  Box box{};
  int x = 0;
  for (int attempt = 0; attempt < 30; ++attempt) {
    x = rng.uniform_int(std::max(t.x0 + 6, 6), std::min(t.x1 - gap - 6, w - gap - 6));
    box = ensure_min_size(clip_box(x - 3, t.y0 - 3, x + gap + 2, t.y1 + 3, w, h), 8, w, h);
    if (!overlaps_any(box, taken)) break;
  }
  fill_rect(b, rng, x, t.y0, x + gap - 1, t.y1, b.substrate);
  return box;
}

Box draw_short(Board& b, Rng& rng, const std::vector<LabeledBox>& taken) {
  const int w = b.img.width, h = b.img.height;
  std::vector<std::size_t> pairs;
  for (std::size_t i = 0; i + 1 < b.traces.size(); ++i) pairs.push_back(i);
  int x = 0, y0 = 0, y1 = 0;
  const int bar = rng.uniform_int(2, 3);
  Box box{};
  for (int attempt = 0; attempt < 30; ++attempt) {
    if (!pairs.empty()) {
      const std::size_t i = pairs[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pairs.size()) - 1))];
      const Trace& a = b.traces[i];
      const Trace& c = b.traces[i + 1];
      const int lo = std::max(a.x0, c.x0) + 2, hi = std::min(a.x1, c.x1) - bar - 2;
      if (hi <= lo) continue;
      x = rng.uniform_int(lo, hi);
      y0 = a.y1 + 1;
      y1 = c.y0 - 1;
    } else {
      x = rng.uniform_int(6, w - 10);
      y0 = rng.uniform_int(4, h / 2);
      y1 = y0 + 14;
    }
    box = ensure_min_size(clip_box(x - 2, y0 - 1, x + bar + 1, y1 + 1, w, h), 8, w, h);
    if (!overlaps_any(box, taken)) break;
  }
  if (y1 <= y0) {
    x = rng.uniform_int(6, w - 10);
    y0 = rng.uniform_int(4, h / 2);
    y1 = y0 + 14;
    box = ensure_min_size(clip_box(x - 2, y0 - 1, x + bar + 1, y1 + 1, w, h), 8, w, h);
  }
  fill_rect(b, rng, x, y0, x + bar - 1, y1, b.copper);
  return box;
}

Box draw_spur(Board& b, Rng& rng, const std::vector<LabeledBox>& taken) {
  const int w = b.img.width, h = b.img.height;
  const Trace& t = ensure_trace(b, rng);
  const int len = rng.uniform_int(5, 8);
  const int base = rng.uniform_int(5, 8);
  int x = 0;
  bool up = true;
  Box box{};
  for (int attempt = 0; attempt < 30; ++attempt) {
    x = rng.uniform_int(std::max(t.x0 + 2, 2), std::min(t.x1 - base - 2, w - base - 2));
    up = rng.bernoulli(0.5);
    if (t.y0 - len < 0) up = false;
    if (t.y1 + len >= h) up = true;
    box = up ? clip_box(x - 1, t.y0 - len - 1, x + base, t.y1 + 1, w, h)
             : clip_box(x - 1, t.y0 - 1, x + base, t.y1 + len + 1, w, h);
    box = ensure_min_size(box, 8, w, h);
    if (!overlaps_any(box, taken)) break;
  }
  // Triangle: base on the trace edge, apex `len` pixels out.
  for (int d = 1; d <= len; ++d) {
    const double half = 0.5 * base * (1.0 - static_cast<double>(d) / (len + 1));
    const double mid = x + 0.5 * base;
    const int y = up ? t.y0 - d : t.y1 + d;
    for (int px = static_cast<int>(std::floor(mid - half)); px < static_cast<int>(std::ceil(mid + half)); ++px) {
      paint(b, rng, px, y, b.copper);
    }
  }
  return box;
}

Box draw_spurious_copper(Board& b, Rng& rng, const std::vector<LabeledBox>& taken) {
  const int w = b.img.width, h = b.img.height;
  int cx = 0, cy = 0;
  Box box{};
  for (int attempt = 0; attempt < 30; ++attempt) {
    cx = rng.uniform_int(7, w - 8);
    cy = rng.uniform_int(7, h - 8);
    box = clip_box(cx - 6, cy - 6, cx + 5, cy + 5, w, h);
    bool on_copper = false;
    for (const auto& t : b.traces) {
      if (intersection_area(box, clip_box(t.x0, t.y0, t.x1, t.y1, w, h)) > 0) on_copper = true;
    }
    if (!on_copper && !overlaps_any(box, taken)) break;
  }
  const int blobs = rng.uniform_int(2, 3);
  int x0 = cx, x1 = cx, y0 = cy, y1 = cy;
  for (int i = 0; i < blobs; ++i) {
    const double bx = cx + rng.uniform(-2.5, 2.5), by = cy + rng.uniform(-2.5, 2.5);
    const double r = rng.uniform(2.0, 3.5);
    fill_disk(b, rng, bx, by, r, b.copper);
    x0 = std::min(x0, static_cast<int>(std::floor(bx - r)));
    x1 = std::max(x1, static_cast<int>(std::ceil(bx + r)) - 1);
    y0 = std::min(y0, static_cast<int>(std::floor(by - r)));
    y1 = std::max(y1, static_cast<int>(std::ceil(by + r)) - 1);
  }
  return ensure_min_size(clip_box(x0, y0, x1, y1, w, h), 8, w, h);
}

Box draw_defect(Board& b, Rng& rng, DefectClass cls, const std::vector<LabeledBox>& taken) {
  switch (cls) {
    case DefectClass::MissingHole: return draw_missing_hole(b, rng, taken);
    case DefectClass::MouseBite: return draw_mouse_bite(b, rng, taken);
    case DefectClass::OpenCircuit: return draw_open_circuit(b, rng, taken);
    case DefectClass::Short: return draw_short(b, rng, taken);
    case DefectClass::Spur: return draw_spur(b, rng, taken);
    case DefectClass::SpuriousCopper: return draw_spurious_copper(b, rng, taken);
  }
  return {};
}

DefectClass draw_class(Rng& rng, const std::array<double, kNumClasses>& weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double u = rng.uniform() * total;
  int last = 0;
  for (int i = 0; i < kNumClasses; ++i) {
    if (weights[static_cast<std::size_t>(i)] <= 0) continue;
    last = i;
    if (u < weights[static_cast<std::size_t>(i)]) return class_from_id(i);
    u -= weights[static_cast<std::size_t>(i)];
  }
  return class_from_id(last);
}

void check_spec(const SynthSpec& spec) {
  if (spec.width < 64 || spec.height < 64) throw ParameterError("synthetic boards must be at least 64x64");
  if (spec.defects_min < 0 || spec.defects_max < spec.defects_min) {
    throw ParameterError("synthetic defects range must satisfy 0 <= min <= max");
  }
  if (std::accumulate(spec.class_weights.begin(), spec.class_weights.end(), 0.0) <= 0.0 && spec.defects_max > 0) {
    throw ParameterError("synthetic class weights must not all be zero");
  }
  for (const double wgt : spec.class_weights) {
    if (wgt < 0.0) throw ParameterError("synthetic class weights must be >= 0");
  }
}

AnnotatedImage render(std::uint64_t seed, const SynthSpec& spec, std::vector<DefectClass> classes, Rng& rng) {
  Board b = make_layout(rng, spec.width, spec.height);
  AnnotatedImage out;
  for (const DefectClass cls : classes) {
    const Box box = draw_defect(b, rng, cls, out.boxes);
    out.boxes.push_back({box, cls});
  }
  out.image = std::move(b.img);
  out.source = Source::Synthetic;
  out.id = "synth_" + std::to_string(seed);
  return out;
}

}  // namespace

AnnotatedImage synth_board(std::uint64_t seed, const SynthSpec& spec) {
  check_spec(spec);
  Rng rng(seed);
  const int count = rng.uniform_int(spec.defects_min, spec.defects_max);
  std::vector<DefectClass> classes;
  for (int i = 0; i < count; ++i) classes.push_back(draw_class(rng, spec.class_weights));
  return render(seed, spec, std::move(classes), rng);
}

AnnotatedImage synth_board_with(std::uint64_t seed, const SynthSpec& spec, DefectClass cls) {
  check_spec(spec);
  Rng rng(seed);
  return render(seed, spec, {cls}, rng);
}

Raster crop_resize(const Raster& image, const Box& box, int size) {
  Raster out(size, size);
  const double sx = box.width() / size;
  const double sy = box.height() / size;
  for (int y = 0; y < size; ++y) {
    const int iy = std::clamp(static_cast<int>(std::floor(box.ymin + (y + 0.5) * sy)), 0, image.height - 1);
    for (int x = 0; x < size; ++x) {
      const int ix = std::clamp(static_cast<int>(std::floor(box.xmin + (x + 0.5) * sx)), 0, image.width - 1);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = image.at(ix, iy, c);
    }
  }
  return out;
}

Tensor raster_to_chw(const Raster& image) {
  Tensor t(Shape{3, image.height, image.width});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x)
        t[(static_cast<std::size_t>(c) * image.height + y) * image.width + x] = image.at(x, y, c) / 255.0;
  return t;
}

Raster synth_defect_patch(std::uint64_t seed, DefectClass cls, int size) {
  const AnnotatedImage board = synth_board_with(seed, SynthSpec{}, cls);
  return crop_resize(board.image, board.boxes.front().box, size);
}

}  // namespace pcbdet
