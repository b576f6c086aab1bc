#include "wellcast/augment.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "wellcast/error.hpp"
#include "wellcast/parallel.hpp"
#include "wellcast/random.hpp"

namespace wellcast {

namespace {

// Rebuilds each frame by sampling source pixel src(row, col) for every output pixel.
template <class SourceIndex>
Video remap(const Video& video, int out_h, int out_w, SourceIndex src) {
  std::vector<Frame> frames;
  frames.reserve(video.size());
  for (const Frame& f : video.frames()) {
    std::vector<double> data(static_cast<std::size_t>(out_h) * out_w * 3);
    std::size_t o = 0;
    for (int r = 0; r < out_h; ++r) {
      for (int c = 0; c < out_w; ++c) {
        const auto [sr, sc] = src(r, c);
        const std::size_t i = f.index(sr, sc, 0);
        data[o++] = f.data()[i];
        data[o++] = f.data()[i + 1];
        data[o++] = f.data()[i + 2];
      }
    }
    frames.emplace_back(out_h, out_w, f.space(), std::move(data));
  }
  return Video(std::move(frames), video.frame_interval_minutes());
}

// Half-sample symmetric extension: ... c b a | a b c ... c | c b a ...
inline int reflect(int i, int n) noexcept {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

std::string format_sigma(double sigma) {
  std::ostringstream os;
  os << sigma;
  return os.str();
}

struct Transform {
  std::string tag;
  std::string lineage;
  std::function<Video(const Video&, std::uint64_t)> apply;
};

std::vector<Transform> transforms_for(const AugmentConfig& cfg) {
  std::vector<Transform> out;
  if (cfg.identity) out.push_back({"id", "identity", [](const Video& v, std::uint64_t) { return v; }});
  for (FlipAxis axis : cfg.flips) {
    const bool h = axis == FlipAxis::Horizontal;
    out.push_back({h ? "fliph" : "flipv", h ? "flip:horizontal" : "flip:vertical",
                   [axis](const Video& v, std::uint64_t) { return apply_flip(v, axis); }});
  }
  for (int deg : cfg.rotations) {
    out.push_back({"rot" + std::to_string(deg), "rotate:" + std::to_string(deg),
                   [deg](const Video& v, std::uint64_t) { return apply_rotation(v, deg); }});
  }
  if (cfg.blur_sigma > 0.0) {
    const double s = cfg.blur_sigma;
    out.push_back({"blur", "blur:sigma=" + format_sigma(s),
                   [s](const Video& v, std::uint64_t) { return apply_blur(v, s); }});
  }
  if (cfg.noise_sigma > 0.0) {
    const double s = cfg.noise_sigma;
    out.push_back({"noise", "noise:sigma=" + format_sigma(s), [s](const Video& v, std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     return apply_noise(v, s, rng);
                   }});
  }
  return out;
}

}  // namespace

int AugmentConfig::multiplicity() const noexcept {
  return (identity ? 1 : 0) + static_cast<int>(flips.size()) + static_cast<int>(rotations.size()) +
         (blur_sigma > 0.0 ? 1 : 0) + (noise_sigma > 0.0 ? 1 : 0);
}

void AugmentConfig::validate() const {
  for (int deg : rotations) {
    if (deg != 90 && deg != 180 && deg != 270) {
      throw Error(ErrorKind::InvalidArgument, "rotation must be 90, 180 or 270, got " + std::to_string(deg));
    }
  }
  if (!(blur_sigma >= 0.0) || !(noise_sigma >= 0.0)) throw Error(ErrorKind::InvalidArgument, "sigmas must be >= 0");
  if (multiplicity() < 1) throw Error(ErrorKind::InvalidArgument, "augmentation recipe is empty");
}

AugmentConfig AugmentConfig::identity_only() {
  AugmentConfig cfg;
  cfg.flips.clear();
  cfg.rotations.clear();
  cfg.blur_sigma = 0.0;
  cfg.noise_sigma = 0.0;
  return cfg;
}

Video apply_flip(const Video& video, FlipAxis axis) {
  const int h = video.height(), w = video.width();
  if (axis == FlipAxis::Horizontal) {
    return remap(video, h, w, [w](int r, int c) { return std::pair{r, w - 1 - c}; });
  }
  return remap(video, h, w, [h](int r, int c) { return std::pair{h - 1 - r, c}; });
}

Video apply_rotation(const Video& video, int degrees) {
  const int n = video.height();
  if (video.width() != n) throw Error(ErrorKind::ShapeMismatch, "rotation requires square frames");
  switch (degrees) {
    case 90: return remap(video, n, n, [n](int r, int c) { return std::pair{n - 1 - c, r}; });
    case 180: return remap(video, n, n, [n](int r, int c) { return std::pair{n - 1 - r, n - 1 - c}; });
    case 270: return remap(video, n, n, [n](int r, int c) { return std::pair{c, n - 1 - r}; });
    default: throw Error(ErrorKind::InvalidArgument, "rotation must be 90, 180 or 270, got " + std::to_string(degrees));
  }
}

Video apply_blur(const Video& video, double sigma) {
  if (!(sigma >= 0.0)) throw Error(ErrorKind::InvalidArgument, "blur sigma must be >= 0");
  if (sigma == 0.0) return video;

  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    total += kernel[static_cast<std::size_t>(k + radius)] = std::exp(-(k * k) / (2.0 * sigma * sigma));
  }
  for (double& k : kernel) k /= total;

  const int h = video.height(), w = video.width();
  std::vector<Frame> frames;
  frames.reserve(video.size());
  std::vector<double> tmp(static_cast<std::size_t>(h) * w * 3);
  for (const Frame& f : video.frames()) {
    const auto src = f.data();
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        for (int ch = 0; ch < 3; ++ch) {
          double acc = 0.0;
          for (int k = -radius; k <= radius; ++k) {
            acc += kernel[static_cast<std::size_t>(k + radius)] * src[f.index(r, reflect(c + k, w), ch)];
          }
          tmp[f.index(r, c, ch)] = acc;
        }
      }
    }
    std::vector<double> out(tmp.size());
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        for (int ch = 0; ch < 3; ++ch) {
          double acc = 0.0;
          for (int k = -radius; k <= radius; ++k) {
            acc += kernel[static_cast<std::size_t>(k + radius)] * tmp[f.index(reflect(r + k, h), c, ch)];
          }
          // A normalized kernel is a convex combination; clamp only absorbs rounding.
          out[f.index(r, c, ch)] = std::clamp(acc, 0.0, 1.0);
        }
      }
    }
    frames.emplace_back(h, w, f.space(), std::move(out));
  }
  return Video(std::move(frames), video.frame_interval_minutes());
}

Video apply_noise(const Video& video, double sigma, std::mt19937_64& rng) {
  if (!(sigma >= 0.0)) throw Error(ErrorKind::InvalidArgument, "noise sigma must be >= 0");
  if (sigma == 0.0) return video;
  std::normal_distribution<double> normal(0.0, sigma);
  std::vector<Frame> frames;
  frames.reserve(video.size());
  for (const Frame& f : video.frames()) {
    std::vector<double> data(f.data().begin(), f.data().end());
    for (double& v : data) v = std::clamp(v + normal(rng), 0.0, 1.0);
    frames.emplace_back(f.height(), f.width(), f.space(), std::move(data));
  }
  return Video(std::move(frames), video.frame_interval_minutes());
}

std::vector<WellRecord> expand_dataset(std::span<const WellRecord> records, const AugmentConfig& aug,
                                       const SplitSpec& split, int workers) {
  aug.validate();
  if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "train_fraction must lie in (0, 1)");
  }
  std::map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!index_of.emplace(records[i].well_id, i).second) {
      throw Error(ErrorKind::DuplicateWell, "well id '" + records[i].well_id + "'");
    }
  }
  std::vector<bool> is_test(records.size(), false);
  for (const auto& id : split.test_well_ids) {
    const auto it = index_of.find(id);
    if (it == index_of.end()) throw Error(ErrorKind::UnknownWell, "test well '" + id + "' not among records");
    is_test[it->second] = true;
  }
  for (const auto& r : records) {
    if (r.video.height() != records.front().video.height() || r.video.width() != records.front().video.width() ||
        r.video.size() != records.front().video.size()) {
      throw Error(ErrorKind::ShapeMismatch, "well '" + r.well_id + "' differs in shape from the first record");
    }
  }

  const auto transforms = transforms_for(aug);
  const std::size_t m = transforms.size();
  std::vector<std::size_t> sources;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!is_test[i]) sources.push_back(i);
  }

  // Slot s * m + t holds transform t of source s; filled independently per slot.
  std::vector<std::optional<WellRecord>> pool(sources.size() * m);
  parallel_for(pool.size(), workers, [&](std::size_t slot) {
    const std::size_t src = sources[slot / m];
    const Transform& t = transforms[slot % m];
    const WellRecord& in = records[src];
    std::vector<std::string> lineage = in.lineage;
    lineage.push_back(t.lineage);
    const std::uint64_t seed = derive_seed(aug.seed, {src, slot % m});
    pool[slot] = WellRecord{in.well_id + "~" + t.tag, t.apply(in.video, seed), Split::Train, std::move(lineage)};
  });

  std::vector<WellRecord> derived;
  derived.reserve(pool.size());
  for (auto& r : pool) derived.push_back(std::move(*r));
  std::mt19937_64 shuffle_rng(derive_seed(aug.seed, {0x5bd1e995u}));
  std::shuffle(derived.begin(), derived.end(), shuffle_rng);

  const std::size_t n = derived.size();
  const auto n_train = std::min(n, static_cast<std::size_t>(std::ceil(split.train_fraction * n - 1e-9)));
  for (std::size_t i = n_train; i < n; ++i) derived[i].split = Split::Valid;

  std::vector<WellRecord> out = std::move(derived);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!is_test[i]) continue;
    if (!records[i].lineage.empty()) {
      throw Error(ErrorKind::InvalidArgument, "test well '" + records[i].well_id + "' is already augmented");
    }
    out.push_back(WellRecord{records[i].well_id, records[i].video, Split::Test, {}});
  }
  return out;
}

}  // namespace wellcast
