#include "wellcast/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "wellcast/error.hpp"

namespace wellcast {

namespace {

// a + f (b - a), bounded to the bracket so rounding never leaves [min(a,b), max(a,b)].
inline double lerp(double a, double b, double f) noexcept {
  const double v = a + f * (b - a);
  return std::clamp(v, std::min(a, b), std::max(a, b));
}

std::vector<Frame> copy_frames(const Video& video, std::size_t count) {
  return {video.frames().begin(), video.frames().begin() + static_cast<std::ptrdiff_t>(count)};
}

}  // namespace

void PreprocessConfig::validate() const {
  if (keep_frames < 2) throw Error(ErrorKind::InvalidArgument, "keep_frames must be >= 2");
  if (target_frames < keep_frames) throw Error(ErrorKind::InvalidArgument, "target_frames must be >= keep_frames");
  if (crop_size <= 0 || target_size <= 0) throw Error(ErrorKind::InvalidArgument, "sizes must be positive");
}

int triangle_threshold(std::span<const std::uint64_t> histogram) {
  const int bins = static_cast<int>(histogram.size());
  int first = -1, last = -1, nonzero = 0, peak = 0;
  for (int i = 0; i < bins; ++i) {
    if (histogram[i] == 0) continue;
    if (histogram[i] > (std::uint64_t{1} << 52)) throw Error(ErrorKind::InvalidArgument, "histogram count too large");
    ++nonzero;
    if (first < 0) first = i;
    last = i;
    if (histogram[i] > histogram[peak]) peak = i;
  }
  if (nonzero < 2) throw Error(ErrorKind::DegenerateHistogram, "need at least two non-empty bins");

  const int tail = (last - peak) >= (peak - first) ? last : first;
  const int step = tail > peak ? 1 : -1;
  const auto hp = static_cast<std::int64_t>(histogram[peak]);
  const std::int64_t dx = tail - peak;
  const std::int64_t dy = static_cast<std::int64_t>(histogram[tail]) - hp;

  // Cross product of (tail - peak) with (bin - peak); its magnitude is the
  // perpendicular distance times a constant, positive below the line.
  int best = peak;
  std::int64_t best_depth = 0;
  for (int i = peak + step; i != tail + step; i += step) {
    const std::int64_t cross = dx * (static_cast<std::int64_t>(histogram[i]) - hp) - dy * (i - peak);
    const std::int64_t depth = dx > 0 ? -cross : cross;
    if (depth > best_depth) {
      best_depth = depth;
      best = i;
    }
  }
  return best;
}

BoundingBox locate_well(const Video& video) {
  if (video.space() != ColorSpace::RGB) throw Error(ErrorKind::WrongColorSpace, "locate_well expects an RGB video");
  const int h = video.height(), w = video.width();
  const std::size_t pixels = video[0].pixel_count();

  std::vector<double> mean(pixels, 0.0);
  for (const Frame& f : video.frames()) {
    const auto d = f.data();
    for (std::size_t p = 0; p < pixels; ++p) mean[p] += (d[3 * p] + d[3 * p + 1] + d[3 * p + 2]) / 3.0;
  }
  std::vector<int> bin(pixels);
  std::array<std::uint64_t, kHistogramBins> histogram{};
  for (std::size_t p = 0; p < pixels; ++p) {
    const double lum = mean[p] / static_cast<double>(video.size());
    bin[p] = std::min(kHistogramBins - 1, static_cast<int>(std::floor(lum * 255.0 + 0.5)));
    ++histogram[static_cast<std::size_t>(bin[p])];
  }

  int threshold = 0;
  const auto occupied = std::count_if(histogram.begin(), histogram.end(), [](std::uint64_t c) { return c > 0; });
  // A single-valued image has no valley; every non-black pixel counts as well.
  if (occupied >= 2) threshold = triangle_threshold(histogram);

  BoundingBox box{h, -1, w, -1};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (bin[static_cast<std::size_t>(r) * w + c] <= threshold) continue;
      box.row_min = std::min(box.row_min, r);
      box.row_max = std::max(box.row_max, r);
      box.col_min = std::min(box.col_min, c);
      box.col_max = std::max(box.col_max, c);
    }
  }
  if (box.row_max < 0) throw Error(ErrorKind::EmptyWell, "no pixel above threshold " + std::to_string(threshold));
  return box;
}

Video center_crop(const Video& video, const BoundingBox& box, int crop_size) {
  const int h = video.height(), w = video.width();
  if (crop_size <= 0 || crop_size > h || crop_size > w) {
    throw Error(ErrorKind::CropTooLarge,
                "crop " + std::to_string(crop_size) + " does not fit " + std::to_string(h) + "x" + std::to_string(w));
  }
  auto window_start = [crop_size](double center, int extent) {
    const int start = static_cast<int>(std::floor(center - (crop_size - 1) / 2.0 + 0.5));
    return std::clamp(start, 0, extent - crop_size);
  };
  const int r0 = window_start(box.center_row(), h);
  const int c0 = window_start(box.center_col(), w);

  std::vector<Frame> frames;
  frames.reserve(video.size());
  for (const Frame& f : video.frames()) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(crop_size) * crop_size * 3);
    for (int r = r0; r < r0 + crop_size; ++r) {
      const auto row = f.data().subspan(f.index(r, c0, 0), static_cast<std::size_t>(crop_size) * 3);
      data.insert(data.end(), row.begin(), row.end());
    }
    frames.emplace_back(crop_size, crop_size, f.space(), std::move(data));
  }
  return Video(std::move(frames), video.frame_interval_minutes());
}

Video interpolate_time(const Video& video, int target_frames) {
  const int n = static_cast<int>(video.size());
  if (n < 2) throw Error(ErrorKind::TooFewFrames, "temporal interpolation needs at least 2 frames");
  if (target_frames < 2) throw Error(ErrorKind::InvalidArgument, "target_frames must be >= 2");

  std::vector<Frame> frames;
  frames.reserve(static_cast<std::size_t>(target_frames));
  frames.push_back(video[0]);
  for (int k = 1; k < target_frames - 1; ++k) {
    const double t = static_cast<double>(k * (n - 1)) / static_cast<double>(target_frames - 1);
    const int i0 = std::min(static_cast<int>(std::floor(t)), n - 2);
    const double f = t - i0;
    const auto a = video[static_cast<std::size_t>(i0)].data();
    const auto b = video[static_cast<std::size_t>(i0) + 1].data();
    std::vector<double> data(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) data[j] = lerp(a[j], b[j], f);
    frames.emplace_back(video.height(), video.width(), video.space(), std::move(data));
  }
  frames.push_back(video[video.size() - 1]);

  // Frames are resampled uniformly, so the interval shrinks accordingly.
  const double interval = video.frame_interval_minutes() * (n - 1) / (target_frames - 1);
  return Video(std::move(frames), interval);
}

Frame resize_bilinear(const Frame& frame, int target_size) {
  if (target_size <= 0) throw Error(ErrorKind::InvalidArgument, "target_size must be positive");
  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [target_size](int in) {
    std::vector<Tap> out(static_cast<std::size_t>(target_size));
    const double scale = static_cast<double>(in) / target_size;
    for (int d = 0; d < target_size; ++d) {
      const double src = std::clamp((d + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
      const int i0 = static_cast<int>(std::floor(src));
      out[static_cast<std::size_t>(d)] = {i0, std::min(i0 + 1, in - 1), src - i0};
    }
    return out;
  };
  const auto rows = taps(frame.height());
  const auto cols = taps(frame.width());

  std::vector<double> data(static_cast<std::size_t>(target_size) * target_size * 3);
  std::size_t o = 0;
  for (const Tap& ty : rows) {
    for (const Tap& tx : cols) {
      for (int ch = 0; ch < 3; ++ch) {
        const double top = lerp(frame.at(ty.i0, tx.i0, ch), frame.at(ty.i0, tx.i1, ch), tx.f);
        const double bottom = lerp(frame.at(ty.i1, tx.i0, ch), frame.at(ty.i1, tx.i1, ch), tx.f);
        data[o++] = lerp(top, bottom, ty.f);
      }
    }
  }
  return Frame(target_size, target_size, frame.space(), std::move(data));
}

WellRecord preprocess_well(const WellRecord& record, const PreprocessConfig& cfg) {
  cfg.validate();
  const Video& raw = record.video;
  if (raw.size() < static_cast<std::size_t>(cfg.keep_frames)) {
    throw Error(ErrorKind::TooFewFrames, "well '" + record.well_id + "' has " + std::to_string(raw.size()) +
                                             " frames, need " + std::to_string(cfg.keep_frames));
  }
  const Video kept(copy_frames(raw, static_cast<std::size_t>(cfg.keep_frames)), raw.frame_interval_minutes());
  const BoundingBox box = locate_well(kept);
  const Video cropped = center_crop(kept, box, cfg.crop_size);
  const Video timed = interpolate_time(cropped, cfg.target_frames);

  std::vector<Frame> frames;
  frames.reserve(timed.size());
  for (const Frame& f : timed.frames()) frames.push_back(rgb_to_hsv(resize_bilinear(f, cfg.target_size)));
  return WellRecord{record.well_id, Video(std::move(frames), timed.frame_interval_minutes()), record.split,
                    record.lineage};
}

}  // namespace wellcast
