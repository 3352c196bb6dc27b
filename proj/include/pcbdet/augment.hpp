#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "pcbdet/types.hpp"

namespace pcbdet {

/// Clockwise quarter turns about the image center, k in {1,2,3}.
struct Rotate90 {
  int k = 1;
};
/// Scale about the origin, s in [0.5, 2]. The canvas grows or shrinks to
/// ceil(s*W) x ceil(s*H) so every box stays inside it.
struct Scale {
  double s = 1.0;
};
/// Per-channel contrast about the channel mean, c in [0.5, 1.5].
struct Contrast {
  double c = 1.0;
};

using AugmentOp = std::variant<Rotate90, Scale, Contrast>;

/// Point mapping of a geometric op on a W x H canvas (identity for contrast).
std::pair<double, double> map_point(const AugmentOp& op, double x, double y, int width, int height);

/// Applies `ops` in order. ParameterError for out-of-range parameters.
AnnotatedImage apply_augmentations(const AnnotatedImage& img, std::span<const AugmentOp> ops);

/// Training-time policy: which ops are drawn and from what ranges.
struct AugmentPolicy {
  double rotate_prob = 0.5;
  double scale_prob = 0.0;
  double scale_min = 0.8;
  double scale_max = 1.25;
  double contrast_prob = 0.5;
  double contrast_min = 0.8;
  double contrast_max = 1.2;
};

std::vector<AugmentOp> sample_augmentations(const AugmentPolicy& policy, std::uint64_t seed);

/// Samples ops from `policy` with `seed`, applies them, then crops/pads the
/// result back to width x height anchored at the origin.
AnnotatedImage random_augment(const AnnotatedImage& img, const AugmentPolicy& policy, std::uint64_t seed);

/// Crops or zero-pads to width x height at the origin. Boxes are clipped;
/// boxes left narrower than `min_side` pixels are dropped.
AnnotatedImage fit_canvas(const AnnotatedImage& img, int width, int height, double min_side = 2.0);

}  // namespace pcbdet
