#pragma once

#include <array>
#include <cstdint>

#include "pcbdet/tensor.hpp"
#include "pcbdet/types.hpp"

namespace pcbdet {

struct SynthSpec {
  int width = 96;
  int height = 96;
  int defects_min = 1;
  int defects_max = 3;
  /// Relative draw weight per class id; zero excludes a class.
  std::array<double, kNumClasses> class_weights = {1, 1, 1, 1, 1, 1};
};

/// Procedural PCB-like board (substrate, copper traces, drilled pads) with a
/// random number of injected defects. Each defect's class is drawn from
/// `class_weights` before it is placed, and placement always succeeds, so
/// class counts follow the multinomial given by the weights. Deterministic in
/// (seed, spec). Result has source=synthetic.
AnnotatedImage synth_board(std::uint64_t seed, const SynthSpec& spec);

/// Board with exactly one defect of class `cls`.
AnnotatedImage synth_board_with(std::uint64_t seed, const SynthSpec& spec, DefectClass cls);

/// Nearest-neighbour crop of `box` resampled to size x size.
Raster crop_resize(const Raster& image, const Box& box, int size);

/// Raster -> [3,S,S] tensor in [0,1].
Tensor raster_to_chw(const Raster& image);

/// Defect patch of class `cls`: crop of the ground-truth box of a fresh
/// single-defect board, resampled to size x size.
Raster synth_defect_patch(std::uint64_t seed, DefectClass cls, int size);

}  // namespace pcbdet
