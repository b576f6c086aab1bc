#include "wellcast/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "json.hpp"
#include "wellcast/error.hpp"
#include "wellcast/parallel.hpp"
#include "wellcast/random.hpp"

namespace wellcast {

namespace {

enum : std::uint8_t { kEmpty = 0, kRed = 1, kGreen = 2, kOutside = 3 };

struct Grid {
  int n = 0;
  std::vector<std::uint8_t> cell;
  int area = 0;

  std::uint8_t at(int r, int c) const {
    if (r < 0 || c < 0 || r >= n || c >= n) return kOutside;
    return cell[static_cast<std::size_t>(r) * n + c];
  }
};

const int kDr[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
const int kDc[8] = {-1, 0, 1, -1, 1, -1, 0, 1};

}  // namespace

void SimConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::ConfigError, "simulation config: " + what); };
  if (image_size < 1) fail("image_size must be >= 1");
  if (frames < 1) fail("frames must be >= 1");
  if (well_radius < 1) fail("well_radius must be >= 1");
  const double cr = center_row.value_or((image_size - 1) / 2.0);
  const double cc = center_col.value_or((image_size - 1) / 2.0);
  if (cr - well_radius < -0.5 || cc - well_radius < -0.5 || cr + well_radius > image_size - 0.5 ||
      cc + well_radius > image_size - 0.5) {
    fail("well does not fit in the image");
  }
  if (seeds_red < 0 || seeds_green < 0 || seeds_red + seeds_green == 0) fail("need at least one seed");
  if (!(seed_radius > 0.0)) fail("seed_radius must be positive");
  if (!(growth_rate >= 0.0)) fail("growth_rate must be >= 0");
  if (!(carrying_capacity > 0.0 && carrying_capacity <= 1.0)) fail("carrying_capacity must lie in (0, 1]");
  if (!(kill_strength >= 0.0 && kill_strength <= 1.0)) fail("kill_strength must lie in [0, 1]");
  if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (!(red_green_balance >= 0.0 && red_green_balance <= 1.0)) fail("red_green_balance must lie in [0, 1]");
}

std::string SimConfig::to_json() const {
  nlohmann::ordered_json j{{"image_size", image_size},
                           {"frames", frames},
                           {"well_radius", well_radius},
                           {"center_row", center_row.value_or((image_size - 1) / 2.0)},
                           {"center_col", center_col.value_or((image_size - 1) / 2.0)},
                           {"seeds_red", seeds_red},
                           {"seeds_green", seeds_green},
                           {"seed_radius", seed_radius},
                           {"growth_rate", growth_rate},
                           {"carrying_capacity", carrying_capacity},
                           {"kill_strength", kill_strength},
                           {"symmetric_kill", symmetric_kill},
                           {"noise_sigma", noise_sigma},
                           {"rng_seed", rng_seed},
                           {"red_green_balance", red_green_balance}};
  return j.dump(2);
}

std::string SimTruth::to_json() const {
  nlohmann::ordered_json seeds_json = nlohmann::ordered_json::array();
  for (const auto& s : seeds) seeds_json.push_back({{"species", s.red ? "red" : "green"}, {"row", s.row}, {"col", s.col}});
  nlohmann::ordered_json j{{"center_row", center_row}, {"center_col", center_col}, {"well_radius", well_radius},
                           {"seeds", std::move(seeds_json)}, {"red", red}, {"green", green}};
  return j.dump() + "\n";
}

SimResult simulate_well(const SimConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int n = cfg.image_size;
  const double cy = cfg.center_row.value_or((n - 1) / 2.0);
  const double cx = cfg.center_col.value_or((n - 1) / 2.0);
  const double r2 = static_cast<double>(cfg.well_radius) * cfg.well_radius;

  Grid g;
  g.n = n;
  g.cell.assign(static_cast<std::size_t>(n) * n, kOutside);
  std::vector<int> well_pixels;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if ((r - cy) * (r - cy) + (c - cx) * (c - cx) <= r2) {
        g.cell[static_cast<std::size_t>(r) * n + c] = kEmpty;
        well_pixels.push_back(r * n + c);
      }
    }
  }
  g.area = static_cast<int>(well_pixels.size());
  const int cap = static_cast<int>(std::floor(cfg.carrying_capacity * g.area));
  int occupied = 0;

  SimTruth truth;
  truth.center_row = cy;
  truth.center_col = cx;
  truth.well_radius = cfg.well_radius;

  // Seeds: species order red then green, positions uniform over in-well pixels.
  const double red_radius = 2.0 * cfg.seed_radius * cfg.red_green_balance;
  const double green_radius = 2.0 * cfg.seed_radius * (1.0 - cfg.red_green_balance);
  std::uniform_int_distribution<std::size_t> pick(0, well_pixels.size() - 1);
  for (int s = 0; s < cfg.seeds_red + cfg.seeds_green; ++s) {
    const bool red = s < cfg.seeds_red;
    const int p = well_pixels[pick(rng)];
    const int sr = p / n, sc = p % n;
    truth.seeds.push_back({red, sr, sc});
    const double rad = red ? red_radius : green_radius;
    const int reach = static_cast<int>(std::ceil(rad));
    for (int r = sr - reach; r <= sr + reach; ++r) {
      for (int c = sc - reach; c <= sc + reach; ++c) {
        const bool center = r == sr && c == sc;
        if (!center && (r - sr) * (r - sr) + (c - sc) * (c - sc) > rad * rad) continue;
        if (g.at(r, c) != kEmpty || occupied >= cap) continue;
        g.cell[static_cast<std::size_t>(r) * n + c] = red ? kRed : kGreen;
        ++occupied;
      }
    }
  }

  // Static per-pixel brightness texture.
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> texture(static_cast<std::size_t>(n) * n);
  for (double& t : texture) t = std::clamp(0.85 + cfg.noise_sigma * normal(rng), 0.7, 1.0);

  auto snapshot = [&] {
    std::vector<int> red, green;
    std::vector<double> data(static_cast<std::size_t>(n) * n * 3, 0.0);
    for (int i = 0; i < n * n; ++i) {
      if (g.cell[i] == kRed) {
        red.push_back(i);
        data[3 * static_cast<std::size_t>(i)] = texture[i];
      } else if (g.cell[i] == kGreen) {
        green.push_back(i);
        data[3 * static_cast<std::size_t>(i) + 1] = texture[i];
      }
    }
    truth.red.push_back(std::move(red));
    truth.green.push_back(std::move(green));
    return Frame(n, n, ColorSpace::RGB, std::move(data));
  };

  std::vector<Frame> frames;
  frames.push_back(snapshot());
  for (int t = 1; t < cfg.frames; ++t) {
    const double p = std::clamp(cfg.growth_rate * (1.0 - occupied / (cfg.carrying_capacity * g.area)), 0.0, 1.0);
    std::vector<std::pair<int, std::uint8_t>> births;
    for (int idx : well_pixels) {
      if (g.cell[idx] != kEmpty) continue;
      const int r = idx / n, c = idx % n;
      int nr = 0, ng = 0;
      for (int k = 0; k < 8; ++k) {
        const auto v = g.at(r + kDr[k], c + kDc[k]);
        nr += v == kRed;
        ng += v == kGreen;
      }
      if (nr + ng == 0) continue;
      // Both draws happen for every candidate so the stream does not depend on p.
      const double u = unit(rng);
      const double s = unit(rng);
      if (u < p) births.emplace_back(idx, s * (nr + ng) < nr ? kRed : kGreen);
    }
    if (occupied + static_cast<int>(births.size()) > cap) {
      std::shuffle(births.begin(), births.end(), rng);
      births.resize(static_cast<std::size_t>(std::max(0, cap - occupied)));
    }
    for (const auto& [idx, species] : births) g.cell[idx] = species;
    occupied += static_cast<int>(births.size());

    if (cfg.kill_strength > 0.0) {
      std::vector<int> deaths;
      for (int idx : well_pixels) {
        const auto v = g.cell[idx];
        if (v == kEmpty) continue;
        const std::uint8_t enemy = v == kRed ? kGreen : kRed;
        if (v == kGreen && !cfg.symmetric_kill) continue;
        const int r = idx / n, c = idx % n;
        bool touching = false;
        for (int k = 0; k < 8 && !touching; ++k) touching = g.at(r + kDr[k], c + kDc[k]) == enemy;
        if (touching && unit(rng) < cfg.kill_strength) deaths.push_back(idx);
      }
      for (int idx : deaths) g.cell[idx] = kEmpty;
      occupied -= static_cast<int>(deaths.size());
    }
    frames.push_back(snapshot());
  }
  return {Video(std::move(frames)), std::move(truth)};
}

std::string corpus_well_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "well_%03d", index);
  return buf;
}

SimConfig corpus_well_config(const CorpusConfig& cfg, int index) {
  SimConfig c = cfg.base;
  const std::uint64_t s = derive_seed(cfg.seed, {static_cast<std::uint64_t>(index)});
  std::mt19937_64 rng(s);
  std::uniform_int_distribution<int> count(cfg.min_seeds, cfg.max_seeds);
  c.seeds_red = count(rng);
  c.seeds_green = count(rng);
  c.rng_seed = rng();
  return c;
}

DatasetManifest generate_corpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir, int workers) {
  if (cfg.wells < 1) throw Error(ErrorKind::InvalidArgument, "corpus needs at least one well");
  if (cfg.min_seeds < 1 || cfg.max_seeds < cfg.min_seeds) {
    throw Error(ErrorKind::InvalidArgument, "seed count range must satisfy 1 <= min <= max");
  }
  cfg.base.validate();
  std::vector<std::optional<SimResult>> results(static_cast<std::size_t>(cfg.wells));
  parallel_for(results.size(), workers, [&](std::size_t i) {
    results[i] = simulate_well(corpus_well_config(cfg, static_cast<int>(i)));
  });
  std::vector<WellRecord> records;
  for (std::size_t i = 0; i < results.size(); ++i) {
    records.push_back({corpus_well_id(static_cast<int>(i)), results[i]->video, Split::Raw, {}});
  }
  DatasetManifest manifest = write_dataset(records, out_dir, cfg.seed, workers);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto file = out_dir / records[i].well_id / "truth.json";
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out << results[i]->truth.to_json();
    if (!out) throw Error(ErrorKind::IoError, "failed writing " + file.string());
  }
  return manifest;
}

}  // namespace wellcast
