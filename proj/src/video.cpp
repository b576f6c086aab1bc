#include "wellcast/video.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"

#include "wellcast/error.hpp"
#include "wellcast/parallel.hpp"

namespace wellcast {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(ColorSpace space) noexcept { return space == ColorSpace::RGB ? "RGB" : "HSV"; }

Frame::Frame(int height, int width, ColorSpace space, std::vector<double> data)
    : height_(height), width_(width), space_(space), data_(std::move(data)) {
  if (height <= 0 || width <= 0) {
    throw Error(ErrorKind::ShapeMismatch,
                "frame dimensions must be positive, got " + std::to_string(height) + "x" + std::to_string(width));
  }
  if (data_.size() != pixel_count() * kChannels) {
    throw Error(ErrorKind::ShapeMismatch, "frame data length " + std::to_string(data_.size()) +
                                              " does not match " + std::to_string(height) + "x" +
                                              std::to_string(width) + "x3");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const double v = data_[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorKind::ValueOutOfRange,
                  "frame element " + std::to_string(i) + " = " + std::to_string(v) + " outside [0,1]");
    }
  }
}

Frame Frame::filled(int height, int width, ColorSpace space, double value) {
  return Frame(height, width, space,
               std::vector<double>(static_cast<std::size_t>(std::max(height, 0)) *
                                       static_cast<std::size_t>(std::max(width, 0)) * kChannels,
                                   value));
}

Video::Video(std::vector<Frame> frames, double frame_interval_minutes)
    : frames_(std::move(frames)), interval_(frame_interval_minutes) {
  if (frames_.empty()) throw Error(ErrorKind::EmptyVideo, "video has no frames");
  const Frame& first = frames_.front();
  for (std::size_t i = 1; i < frames_.size(); ++i) {
    if (!frames_[i].same_shape(first)) {
      throw Error(ErrorKind::ShapeMismatch, "frame " + std::to_string(i) + " differs in size from frame 0");
    }
    if (frames_[i].space() != first.space()) {
      throw Error(ErrorKind::WrongColorSpace, "frame " + std::to_string(i) + " differs in color space from frame 0");
    }
  }
}

// Hexcone model. Hue is stored as angle / 360 and is 0 wherever saturation is 0.
Frame rgb_to_hsv(const Frame& frame) {
  if (frame.space() != ColorSpace::RGB) throw Error(ErrorKind::WrongColorSpace, "rgb_to_hsv expects an RGB frame");
  const auto in = frame.data();
  std::vector<double> out(in.size());
  for (std::size_t p = 0; p < in.size(); p += 3) {
    const double r = in[p], g = in[p + 1], b = in[p + 2];
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double delta = mx - mn;
    double h = 0.0;
    if (delta > 0.0) {
      if (mx == r) {
        h = (g - b) / delta;
        if (h < 0.0) h += 6.0;
      } else if (mx == g) {
        h = (b - r) / delta + 2.0;
      } else {
        h = (r - g) / delta + 4.0;
      }
      h /= 6.0;
      if (h >= 1.0) h = 0.0;
    }
    out[p] = h;
    out[p + 1] = mx > 0.0 ? delta / mx : 0.0;
    out[p + 2] = mx;
  }
  return Frame(frame.height(), frame.width(), ColorSpace::HSV, std::move(out));
}

Frame hsv_to_rgb(const Frame& frame) {
  if (frame.space() != ColorSpace::HSV) throw Error(ErrorKind::WrongColorSpace, "hsv_to_rgb expects an HSV frame");
  const auto in = frame.data();
  std::vector<double> out(in.size());
  for (std::size_t p = 0; p < in.size(); p += 3) {
    const double h = in[p], s = in[p + 1], v = in[p + 2];
    double r = v, g = v, b = v;
    if (s > 0.0) {
      double h6 = h * 6.0;
      if (h6 >= 6.0) h6 = 0.0;
      const int sector = static_cast<int>(std::floor(h6));
      const double f = h6 - sector;
      const double pv = v * (1.0 - s);
      const double qv = v * (1.0 - s * f);
      const double tv = v * (1.0 - s * (1.0 - f));
      switch (sector) {
        case 0: r = v; g = tv; b = pv; break;
        case 1: r = qv; g = v; b = pv; break;
        case 2: r = pv; g = v; b = tv; break;
        case 3: r = pv; g = qv; b = v; break;
        case 4: r = tv; g = pv; b = v; break;
        default: r = v; g = pv; b = qv; break;
      }
    }
    out[p] = r;
    out[p + 1] = g;
    out[p + 2] = b;
  }
  return Frame(frame.height(), frame.width(), ColorSpace::RGB, std::move(out));
}

namespace {

template <class Convert>
Video convert_video(const Video& video, Convert convert) {
  std::vector<Frame> frames;
  frames.reserve(video.size());
  for (const Frame& f : video.frames()) frames.push_back(convert(f));
  return Video(std::move(frames), video.frame_interval_minutes());
}

}  // namespace

Video to_hsv(const Video& video) {
  if (video.space() == ColorSpace::HSV) return video;
  return convert_video(video, rgb_to_hsv);
}

Video to_rgb(const Video& video) {
  if (video.space() == ColorSpace::RGB) return video;
  return convert_video(video, hsv_to_rgb);
}

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
    case Split::Raw: return "raw";
  }
  return "raw";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "valid") return Split::Valid;
  if (text == "test") return Split::Test;
  if (text == "raw") return Split::Raw;
  throw Error(ErrorKind::BadManifest, "unknown split '" + std::string(text) + "'");
}

std::map<Split, std::size_t> DatasetManifest::split_counts() const {
  std::map<Split, std::size_t> counts;
  for (const auto& r : records) ++counts[r.split];
  return counts;
}

std::vector<const ManifestEntry*> DatasetManifest::entries_in(Split split) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

DatasetManifest load_manifest(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open manifest " + file.string());
  DatasetManifest manifest;
  manifest.base_dir = file.parent_path();
  try {
    const json doc = json::parse(in);
    manifest.schema_version = doc.at("schema_version").get<int>();
    manifest.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& item : doc.at("records")) {
      ManifestEntry entry;
      entry.well_id = item.at("well_id").get<std::string>();
      entry.path = item.at("path").get<std::string>();
      entry.split = parse_split(item.at("split").get<std::string>());
      entry.lineage = item.at("lineage").get<std::vector<std::string>>();
      manifest.records.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BadManifest, file.string() + ": " + e.what());
  }
  if (manifest.schema_version != DatasetManifest::kSchemaVersion) {
    throw Error(ErrorKind::BadManifest, "unsupported schema_version " + std::to_string(manifest.schema_version));
  }
  std::set<std::string> seen;
  for (const auto& entry : manifest.records) {
    if (!seen.insert(entry.well_id).second) throw Error(ErrorKind::DuplicateWell, "well id '" + entry.well_id + "'");
    if (entry.split == Split::Test && !entry.lineage.empty()) {
      throw Error(ErrorKind::BadManifest, "test record '" + entry.well_id + "' has augmentation lineage");
    }
    if (!fs::is_directory(manifest.resolve(entry))) {
      throw Error(ErrorKind::MissingFile, "record directory " + manifest.resolve(entry).string() + " not found");
    }
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& file) {
  json records = json::array();
  for (const auto& entry : manifest.records) {
    records.push_back({{"well_id", entry.well_id},
                       {"path", entry.path.generic_string()},
                       {"split", std::string(to_string(entry.split))},
                       {"lineage", entry.lineage}});
  }
  const json doc = {{"schema_version", manifest.schema_version}, {"seed", manifest.seed}, {"records", records}};
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write manifest " + file.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::IoError, "failed writing manifest " + file.string());
}

WellRecord load_record(const DatasetManifest& manifest, const ManifestEntry& entry) {
  return WellRecord{entry.well_id, load_video(manifest.resolve(entry)), entry.split, entry.lineage};
}

DatasetManifest write_dataset(std::span<const WellRecord> records, const fs::path& out_dir, std::uint64_t seed,
                              int workers) {
  DatasetManifest manifest;
  manifest.seed = seed;
  manifest.base_dir = out_dir;
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.well_id).second) throw Error(ErrorKind::DuplicateWell, "well id '" + r.well_id + "'");
    manifest.records.push_back(ManifestEntry{r.well_id, fs::path(r.well_id), r.split, r.lineage});
  }
  fs::create_directories(out_dir);
  parallel_for(records.size(), workers,
               [&](std::size_t i) { save_video(to_rgb(records[i].video), out_dir / records[i].well_id); });
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace wellcast
