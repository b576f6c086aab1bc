#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wellcast/video.hpp"

namespace wellcast {

struct SimConfig {
  int image_size = 24;
  int frames = 14;
  int well_radius = 9;
  // Defaults to the image center.
  std::optional<double> center_row;
  std::optional<double> center_col;
  int seeds_red = 3;
  int seeds_green = 3;
  double seed_radius = 1.5;
  double growth_rate = 1.5;
  double carrying_capacity = 0.95;
  double kill_strength = 0.05;  // green kills red per contact, per frame
  bool symmetric_kill = false;  // red also kills green
  double noise_sigma = 0.05;    // texture of rendered intensities
  std::uint64_t rng_seed = 0;
  double red_green_balance = 0.5;  // >0.5 gives red larger seeds

  /// Throws ConfigError.
  void validate() const;
  std::string to_json() const;
};

struct SeedSite {
  bool red = true;
  int row = 0;
  int col = 0;
};

struct SimTruth {
  double center_row = 0.0;
  double center_col = 0.0;
  int well_radius = 0;
  std::vector<SeedSite> seeds;
  // Row-major pixel indices per frame, ascending.
  std::vector<std::vector<int>> red;
  std::vector<std::vector<int>> green;

  std::string to_json() const;
};

struct SimResult {
  Video video;
  SimTruth truth;
};

/// Stochastic two-species lattice growth inside a circular well, rendered as RGB.
///
/// Frame 0 holds the seed colonies. Each later frame, every empty in-well pixel
/// with an occupied 8-neighbor is colonized with probability
/// growth_rate * (1 - occupied_fraction / carrying_capacity), taking the
/// species of a neighbor picked at random; then red pixels touching green die
/// with probability kill_strength.
SimResult simulate_well(const SimConfig& cfg);

struct CorpusConfig {
  int wells = 48;
  SimConfig base;
  // Per-species seed counts are drawn uniformly from this range for each well.
  int min_seeds = 1;
  int max_seeds = 4;
  std::uint64_t seed = 0;
};

/// Simulates cfg.wells wells named well_000, well_001, ... with per-well seeds
/// derived from (cfg.seed, index); writes videos, truth.json per well and a raw manifest.
DatasetManifest generate_corpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir, int workers = 1);

/// The per-well configuration generate_corpus uses for well `index`.
SimConfig corpus_well_config(const CorpusConfig& cfg, int index);
std::string corpus_well_id(int index);

}  // namespace wellcast
