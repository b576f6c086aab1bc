#pragma once

#include <cstdint>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "wellcast/video.hpp"

namespace wellcast {

enum class FlipAxis { Horizontal, Vertical };

/// The augmentation recipe. Each enabled transform yields one derived copy of
/// a well, so multiplicity() is the number of transforms requested.
struct AugmentConfig {
  bool identity = true;
  std::set<FlipAxis> flips{FlipAxis::Horizontal, FlipAxis::Vertical};
  std::set<int> rotations{90, 180, 270};
  double blur_sigma = 0.5;   // 0 disables the blurred copy
  double noise_sigma = 0.02; // 0 disables the noisy copy
  std::uint64_t seed = 0;

  int multiplicity() const noexcept;
  void validate() const;

  /// Identity-only recipe: multiplicity 1.
  static AugmentConfig identity_only();
};

struct SplitSpec {
  double train_fraction = 0.8;
  std::vector<std::string> test_well_ids;
};

Video apply_flip(const Video& video, FlipAxis axis);

/// Clockwise rotation by 90, 180 or 270 degrees; square frames only.
Video apply_rotation(const Video& video, int degrees);

/// Separable Gaussian blur, radius ceil(3 sigma), half-sample symmetric borders.
Video apply_blur(const Video& video, double sigma);

/// Adds i.i.d. N(0, sigma^2) to every element and clamps to [0, 1].
Video apply_noise(const Video& video, double sigma, std::mt19937_64& rng);

/// Copies the test wells through untouched, emits multiplicity() derived
/// records for every other well, then shuffles the derived pool with
/// aug.seed and splits it train/valid (remainder to train).
///
/// Output order: train, valid, then test records.
std::vector<WellRecord> expand_dataset(std::span<const WellRecord> records, const AugmentConfig& aug,
                                       const SplitSpec& split, int workers = 1);

}  // namespace wellcast
