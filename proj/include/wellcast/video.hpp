#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wellcast {

enum class ColorSpace { RGB, HSV };

std::string_view to_string(ColorSpace space) noexcept;

/// An H x W x 3 image with values in [0, 1], row-major and channel-interleaved.
///
/// Construction validates the value range; out-of-range or non-finite data is
/// rejected with ValueOutOfRange rather than clamped.
class Frame {
 public:
  static constexpr int kChannels = 3;

  Frame(int height, int width, ColorSpace space, std::vector<double> data);

  static Frame filled(int height, int width, ColorSpace space, double value);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  ColorSpace space() const noexcept { return space_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  std::span<const double> data() const noexcept { return data_; }

  std::size_t index(int row, int col, int channel) const noexcept {
    return (static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(col)) *
               kChannels +
           static_cast<std::size_t>(channel);
  }
  double at(int row, int col, int channel) const noexcept { return data_[index(row, col, channel)]; }

  bool same_shape(const Frame& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool operator==(const Frame&) const = default;

 private:
  int height_;
  int width_;
  ColorSpace space_;
  std::vector<double> data_;
};

/// A non-empty, time-ordered sequence of frames sharing shape and color space.
class Video {
 public:
  explicit Video(std::vector<Frame> frames, double frame_interval_minutes = 30.0);

  std::span<const Frame> frames() const noexcept { return frames_; }
  const Frame& operator[](std::size_t i) const noexcept { return frames_[i]; }
  std::size_t size() const noexcept { return frames_.size(); }
  int height() const noexcept { return frames_.front().height(); }
  int width() const noexcept { return frames_.front().width(); }
  ColorSpace space() const noexcept { return frames_.front().space(); }
  double frame_interval_minutes() const noexcept { return interval_; }

  bool operator==(const Video&) const = default;

 private:
  std::vector<Frame> frames_;
  double interval_;
};

Frame rgb_to_hsv(const Frame& frame);
Frame hsv_to_rgb(const Frame& frame);

// Whole-video conversions; a video already in the requested space is returned unchanged.
Video to_hsv(const Video& video);
Video to_rgb(const Video& video);

/// Loads frame_0000.png ... frame_NNNN.png (8-bit RGB) from a directory.
Video load_video(const std::filesystem::path& dir);

/// Writes frame_%04d.png, quantizing each value v to floor(255 v + 0.5).
/// Existing frame_*.png files in the directory are removed first.
void save_video(const Video& video, const std::filesystem::path& dir);

enum class Split { Train, Valid, Test, Raw };

std::string_view to_string(Split split) noexcept;
Split parse_split(std::string_view text);

struct WellRecord {
  std::string well_id;
  Video video;
  Split split = Split::Raw;
  std::vector<std::string> lineage;
};

struct ManifestEntry {
  std::string well_id;
  std::filesystem::path path;  // relative to the manifest directory
  Split split = Split::Raw;
  std::vector<std::string> lineage;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> records;
  // Directory the relative record paths resolve against. Not serialized.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const ManifestEntry& entry) const { return base_dir / entry.path; }
  std::map<Split, std::size_t> split_counts() const;
  std::vector<const ManifestEntry*> entries_in(Split split) const;
};

/// Parses a manifest, checks well ids are unique and every record directory exists.
DatasetManifest load_manifest(const std::filesystem::path& file);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& file);

WellRecord load_record(const DatasetManifest& manifest, const ManifestEntry& entry);

/// Saves every record's video (as RGB) under out_dir/<well_id>/ and writes
/// out_dir/manifest.json. Returns the written manifest.
DatasetManifest write_dataset(std::span<const WellRecord> records, const std::filesystem::path& out_dir,
                              std::uint64_t seed, int workers = 1);

}  // namespace wellcast
