#include "wellcast/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "wellcast/error.hpp"

namespace wellcast {

using nlohmann::ordered_json;

namespace {

void require_same(const Frame& a, const Frame& b, const char* what) {
  if (!a.same_shape(b) || a.space() != b.space()) {
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": frames differ in shape or color space");
  }
}

std::vector<double> luminance(const Frame& f) {
  std::vector<double> out(static_cast<std::size_t>(f.height()) * f.width());
  const auto d = f.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (d[3 * i] + d[3 * i + 1] + d[3 * i + 2]) / 3.0;
  return out;
}

// Union-find over pixel indices.
struct Components {
  explicit Components(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<std::size_t> parent;
};

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

ordered_json colonies_json(const std::vector<std::vector<Colony>>& table) {
  ordered_json frames = ordered_json::array();
  for (const auto& row : table) {
    ordered_json list = ordered_json::array();
    for (const auto& c : row) {
      list.push_back({{"species", to_string(c.species)},
                      {"pixel_count", c.pixel_count},
                      {"centroid", {c.centroid_row, c.centroid_col}}});
    }
    frames.push_back(std::move(list));
  }
  return frames;
}

ordered_json curve_json(const PopulationCurve& curve) {
  ordered_json out = ordered_json::array();
  for (const auto& p : curve) out.push_back({p.green, p.red});
  return out;
}

ordered_json report_json(const EvalReport& r) {
  ordered_json frames = ordered_json::array();
  for (const auto& f : r.frames) {
    frames.push_back({{"index", f.frame_index}, {"mse", f.mse}, {"mse_unit", f.mse_unit}, {"ssim", f.ssim}});
  }
  return {{"well_id", r.well_id},
          {"config",
           {{"colony_threshold", r.config.colony_threshold},
            {"min_colony_pixels", r.config.min_colony_pixels},
            {"first_frame_index", r.config.first_frame_index}}},
          {"frames", std::move(frames)},
          {"population", {{"gt", curve_json(r.gt_population)}, {"pred", curve_json(r.pred_population)}}},
          {"colonies", {{"gt", colonies_json(r.gt_colonies)}, {"pred", colonies_json(r.pred_colonies)}}},
          {"averages", {{"mse", r.mean_mse}, {"mse_unit", r.mean_mse_unit}, {"ssim", r.mean_ssim}}}};
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + file.string());
  out << text;
  if (!out) throw Error(ErrorKind::IoError, "failed writing " + file.string());
}

}  // namespace

double frame_mse_unit(const Frame& a, const Frame& b) {
  require_same(a, b, "frame_mse");
  const auto x = a.data(), y = b.data();
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += (x[i] - y[i]) * (x[i] - y[i]);
  return total / static_cast<double>(x.size());
}

double frame_mse(const Frame& a, const Frame& b) { return frame_mse_unit(a, b) * 255.0 * 255.0; }

double frame_ssim(const Frame& a, const Frame& b) {
  require_same(a, b, "frame_ssim");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const auto la = luminance(a), lb = luminance(b);
  const int h = a.height(), w = a.width();
  const int wh = std::min(8, h), ww = std::min(8, w);
  const double n = static_cast<double>(wh) * ww;
  double total = 0.0;
  int windows = 0;
  for (int r0 = 0; r0 + wh <= h; ++r0) {
    for (int c0 = 0; c0 + ww <= w; ++c0) {
      double sa = 0, sb = 0;
      for (int r = r0; r < r0 + wh; ++r) {
        for (int c = c0; c < c0 + ww; ++c) {
          sa += la[static_cast<std::size_t>(r) * w + c];
          sb += lb[static_cast<std::size_t>(r) * w + c];
        }
      }
      const double ma = sa / n, mb = sb / n;
      double va = 0, vb = 0, cov = 0;
      for (int r = r0; r < r0 + wh; ++r) {
        for (int c = c0; c < c0 + ww; ++c) {
          const double da = la[static_cast<std::size_t>(r) * w + c] - ma;
          const double db = lb[static_cast<std::size_t>(r) * w + c] - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      }
      va /= n;
      vb /= n;
      cov /= n;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  }
  return total / windows;
}

PopulationCurve population_curve(const Video& video) {
  const Video rgb = video.space() == ColorSpace::RGB ? video : to_rgb(video);
  PopulationCurve curve;
  curve.reserve(rgb.size());
  for (const Frame& f : rgb.frames()) {
    PopulationPoint p;
    const auto d = f.data();
    for (std::size_t i = 0; i < d.size(); i += 3) {
      p.red += d[i];
      p.green += d[i + 1];
    }
    curve.push_back(p);
  }
  return curve;
}

std::string_view to_string(Species s) noexcept { return s == Species::Red ? "red" : "green"; }

std::vector<Colony> label_colonies(const Frame& frame, double value_threshold, int min_pixels) {
  const Frame rgb = frame.space() == ColorSpace::RGB ? frame : hsv_to_rgb(frame);
  const int h = rgb.height(), w = rgb.width();
  const std::size_t n = static_cast<std::size_t>(h) * w;
  // 0 background, 1 red, 2 green
  std::vector<std::uint8_t> label(n, 0);
  const auto d = rgb.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double red = d[3 * i], green = d[3 * i + 1];
    if (std::max(red, green) >= value_threshold) label[i] = red >= green ? 1 : 2;
  }
  Components comp(n);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * w + c;
      if (!label[i]) continue;
      // Previously visited neighbors: W, NW, N, NE.
      const int dr[] = {0, -1, -1, -1};
      const int dc[] = {-1, -1, 0, 1};
      for (int k = 0; k < 4; ++k) {
        const int rr = r + dr[k], cc = c + dc[k];
        if (rr < 0 || cc < 0 || cc >= w) continue;
        const std::size_t j = static_cast<std::size_t>(rr) * w + cc;
        if (label[j] == label[i]) comp.unite(i, j);
      }
    }
  }
  struct Acc {
    int count = 0;
    double rows = 0, cols = 0;
    std::uint8_t species = 0;
  };
  std::vector<Acc> acc(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!label[i]) continue;
    Acc& a = acc[comp.find(i)];
    ++a.count;
    a.rows += static_cast<double>(i / w);
    a.cols += static_cast<double>(i % w);
    a.species = label[i];
  }
  std::vector<Colony> out;
  for (const Acc& a : acc) {
    if (a.count == 0 || a.count < min_pixels) continue;
    out.push_back({a.species == 1 ? Species::Red : Species::Green, a.count, a.rows / a.count, a.cols / a.count});
  }
  std::stable_sort(out.begin(), out.end(), [](const Colony& x, const Colony& y) {
    if (x.pixel_count != y.pixel_count) return x.pixel_count > y.pixel_count;
    if (x.centroid_row != y.centroid_row) return x.centroid_row < y.centroid_row;
    return x.centroid_col < y.centroid_col;
  });
  return out;
}

EvalReport evaluate_well(const std::string& well_id, const Video& groundtruth, const Video& predicted,
                         const EvalConfig& cfg) {
  if (groundtruth.size() != predicted.size()) {
    throw Error(ErrorKind::ShapeMismatch, "groundtruth has " + std::to_string(groundtruth.size()) +
                                              " frames, prediction " + std::to_string(predicted.size()));
  }
  const Video gt = groundtruth.space() == ColorSpace::RGB ? groundtruth : to_rgb(groundtruth);
  const Video pred = predicted.space() == ColorSpace::RGB ? predicted : to_rgb(predicted);
  EvalReport r;
  r.well_id = well_id;
  r.config = cfg;
  for (std::size_t t = 0; t < gt.size(); ++t) {
    const Frame& a = gt.frames()[t];
    const Frame& b = pred.frames()[t];
    r.frames.push_back({cfg.first_frame_index + static_cast<int>(t), frame_mse(a, b), frame_mse_unit(a, b),
                        frame_ssim(a, b)});
    r.gt_colonies.push_back(label_colonies(a, cfg.colony_threshold, cfg.min_colony_pixels));
    r.pred_colonies.push_back(label_colonies(b, cfg.colony_threshold, cfg.min_colony_pixels));
  }
  r.gt_population = population_curve(gt);
  r.pred_population = population_curve(pred);
  for (const auto& f : r.frames) {
    r.mean_mse += f.mse;
    r.mean_mse_unit += f.mse_unit;
    r.mean_ssim += f.ssim;
  }
  const auto n = static_cast<double>(r.frames.size());
  r.mean_mse /= n;
  r.mean_mse_unit /= n;
  r.mean_ssim /= n;
  return r;
}

std::string EvalReport::to_json() const { return report_json(*this).dump(2) + "\n"; }

std::string EvalReport::to_csv() const {
  std::string out;
  for (const auto& f : frames) {
    const std::string prefix = well_id + "," + std::to_string(f.frame_index) + ",";
    out += prefix + "mse," + format_number(f.mse) + "\n";
    out += prefix + "mse_unit," + format_number(f.mse_unit) + "\n";
    out += prefix + "ssim," + format_number(f.ssim) + "\n";
  }
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const std::string prefix = well_id + "," + std::to_string(frames[t].frame_index) + ",";
    out += prefix + "gt_green," + format_number(gt_population[t].green) + "\n";
    out += prefix + "gt_red," + format_number(gt_population[t].red) + "\n";
    out += prefix + "pred_green," + format_number(pred_population[t].green) + "\n";
    out += prefix + "pred_red," + format_number(pred_population[t].red) + "\n";
  }
  return out;
}

void write_report(const EvalReport& report, const std::filesystem::path& json_file) {
  write_text(json_file, report.to_json());
}

void write_reports(std::span<const EvalReport> reports, const std::filesystem::path& json_file,
                   const std::filesystem::path& csv_file) {
  ordered_json all = ordered_json::array();
  std::string csv = "well_id,frame,metric,value\n";
  for (const auto& r : reports) {
    all.push_back(report_json(r));
    csv += r.to_csv();
  }
  write_text(json_file, all.dump(2) + "\n");
  write_text(csv_file, csv);
}

}  // namespace wellcast
