#pragma once

#include <filesystem>
#include <span>
#include <string_view>
#include <string>
#include <vector>

#include "wellcast/video.hpp"

namespace wellcast {

/// Mean squared difference in 8-bit units (values scaled by 255).
double frame_mse(const Frame& a, const Frame& b);
/// Same, on the raw [0, 1] values.
double frame_mse_unit(const Frame& a, const Frame& b);

/// Mean SSIM over all 8x8 windows (stride 1) of the luminance (channel mean).
/// Frames smaller than 8 use a single window per short axis.
double frame_ssim(const Frame& a, const Frame& b);

struct PopulationPoint {
  double green = 0.0;
  double red = 0.0;
  bool operator==(const PopulationPoint&) const = default;
};

using PopulationCurve = std::vector<PopulationPoint>;

/// Per-frame channel sums; HSV videos are converted to RGB first.
PopulationCurve population_curve(const Video& video);

enum class Species { Red, Green };
std::string_view to_string(Species s) noexcept;

struct Colony {
  Species species = Species::Red;
  int pixel_count = 0;
  double centroid_row = 0.0;
  double centroid_col = 0.0;
  bool operator==(const Colony&) const = default;
};

/// 8-connected same-species components of the foreground
/// (max(red, green) >= threshold; red wins ties). Components below
/// min_pixels are dropped. Sorted by size descending, then centroid row, then column.
std::vector<Colony> label_colonies(const Frame& frame, double value_threshold, int min_pixels);

struct EvalConfig {
  double colony_threshold = 0.2;
  int min_colony_pixels = 4;
  int first_frame_index = 11;  // label of the first evaluated frame
};

struct FrameMetrics {
  int frame_index = 0;
  double mse = 0.0;
  double mse_unit = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::string well_id;
  EvalConfig config;
  std::vector<FrameMetrics> frames;
  PopulationCurve gt_population;
  PopulationCurve pred_population;
  std::vector<std::vector<Colony>> gt_colonies;
  std::vector<std::vector<Colony>> pred_colonies;
  double mean_mse = 0.0;
  double mean_mse_unit = 0.0;
  double mean_ssim = 0.0;

  std::string to_json() const;
  /// Rows of well_id,frame,metric,value.
  std::string to_csv() const;
};

/// Compares two videos of equal length and shape, frame by frame.
EvalReport evaluate_well(const std::string& well_id, const Video& groundtruth, const Video& predicted,
                         const EvalConfig& cfg = {});

void write_report(const EvalReport& report, const std::filesystem::path& json_file);
/// JSON array of reports plus one CSV holding every report's rows.
void write_reports(std::span<const EvalReport> reports, const std::filesystem::path& json_file,
                   const std::filesystem::path& csv_file);

}  // namespace wellcast
