#include <algorithm>
#include <cmath>
#include <cstdio>
#include <regex>
#include <string>
#include <system_error>
#include <vector>

#include <png.h>

#include "wellcast/error.hpp"
#include "wellcast/video.hpp"

namespace wellcast {

namespace fs = std::filesystem;

namespace {

std::string frame_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04zu.png", index);
  return buf;
}

Frame read_png(const fs::path& file) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, file.c_str())) {
    throw Error(ErrorKind::IoError, file.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorKind::IoError, file.string() + ": " + image.message);
  }
  std::vector<double> data(buffer.size());
  std::transform(buffer.begin(), buffer.end(), data.begin(), [](png_byte b) { return b / 255.0; });
  return Frame(static_cast<int>(image.height), static_cast<int>(image.width), ColorSpace::RGB, std::move(data));
}

void write_png(const Frame& frame, const fs::path& file) {
  const auto values = frame.data();
  std::vector<png_byte> buffer(values.size());
  std::transform(values.begin(), values.end(), buffer.begin(),
                 [](double v) { return static_cast<png_byte>(std::floor(v * 255.0 + 0.5)); });
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(frame.width());
  image.height = static_cast<png_uint_32>(frame.height());
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, file.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw Error(ErrorKind::IoError, file.string() + ": " + image.message);
  }
}

}  // namespace

Video load_video(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::MissingFrame, "video directory " + dir.string() + " not found");
  static const std::regex pattern(R"(frame_(\d{4})\.png)");
  std::vector<std::size_t> indices;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) indices.push_back(std::stoul(m[1].str()));
  }
  std::sort(indices.begin(), indices.end());
  if (indices.empty()) throw Error(ErrorKind::MissingFrame, dir.string() + " contains no frame_NNNN.png files");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] != i) throw Error(ErrorKind::MissingFrame, dir.string() + ": missing " + frame_name(i));
  }
  std::vector<Frame> frames;
  frames.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    frames.push_back(read_png(dir / frame_name(i)));
    if (!frames.back().same_shape(frames.front())) {
      throw Error(ErrorKind::ShapeMismatch, (dir / frame_name(i)).string() + " differs in size from frame 0");
    }
  }
  return Video(std::move(frames));
}

void save_video(const Video& video, const fs::path& dir) {
  if (video.space() != ColorSpace::RGB) throw Error(ErrorKind::WrongColorSpace, "save_video expects an RGB video");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorKind::IoError, "cannot create " + dir.string());
  static const std::regex pattern(R"(frame_\d{4}\.png)");
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (std::regex_match(entry.path().filename().string(), pattern)) fs::remove(entry.path());
  }
  for (std::size_t i = 0; i < video.size(); ++i) write_png(video[i], dir / frame_name(i));
}

}  // namespace wellcast
