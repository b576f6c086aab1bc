#pragma once

#include <cstdint>
#include <span>

#include "wellcast/video.hpp"

namespace wellcast {

/// Inclusive pixel bounds.
struct BoundingBox {
  int row_min = 0;
  int row_max = 0;
  int col_min = 0;
  int col_max = 0;

  double center_row() const noexcept { return 0.5 * (row_min + row_max); }
  double center_col() const noexcept { return 0.5 * (col_min + col_max); }
  bool operator==(const BoundingBox&) const = default;
};

struct PreprocessConfig {
  int keep_frames = 7;
  int target_frames = 20;
  int crop_size = 24;
  int target_size = 32;

  void validate() const;
};

inline constexpr int kHistogramBins = 256;

/// Triangle method: the bin with the greatest perpendicular distance below the
/// line joining the histogram peak to the farther non-empty tail bin.
///
/// The first maximal bin is the peak. When both tails are equally far the upper
/// one is used. Ties between bins resolve toward the peak.
int triangle_threshold(std::span<const std::uint64_t> histogram);

/// Tight box around pixels whose temporal-mean luminance bin lies above the
/// triangle threshold of the 256-bin luminance histogram.
BoundingBox locate_well(const Video& video);

/// crop_size x crop_size window centered on the box, shifted to stay inside the frame.
Video center_crop(const Video& video, const BoundingBox& box, int crop_size);

/// Uniform linear resampling over [first, last] frame; endpoints are copied exactly.
Video interpolate_time(const Video& video, int target_frames);

/// Half-pixel-centered bilinear resampling to target_size x target_size.
Frame resize_bilinear(const Frame& frame, int target_size);

/// Keeps the first cfg.keep_frames frames, then locate -> crop -> temporal ->
/// spatial interpolation -> HSV.
WellRecord preprocess_well(const WellRecord& record, const PreprocessConfig& cfg);

}  // namespace wellcast
