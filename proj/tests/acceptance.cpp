// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "support.hpp"
#include "wellcast/augment.hpp"
#include "wellcast/metrics.hpp"
#include "wellcast/parallel.hpp"
#include "wellcast/predictor.hpp"
#include "wellcast/preprocess.hpp"
#include "wellcast/simulate.hpp"

using namespace wellcast;
using nn::Tape;
using nn::Tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

int workers() { return default_workers(); }

// Raw simulator wells run through preprocessing, converted to HSV.
std::vector<WellRecord> preprocessed_corpus(const CorpusConfig& cc) {
  std::vector<std::optional<WellRecord>> out(static_cast<std::size_t>(cc.wells));
  parallel_for(out.size(), workers(), [&](std::size_t i) {
    const int index = static_cast<int>(i);
    const WellRecord raw{corpus_well_id(index), simulate_well(corpus_well_config(cc, index)).video, Split::Raw, {}};
    out[i] = preprocess_well(raw, {});
  });
  std::vector<WellRecord> records;
  for (auto& r : out) records.push_back(std::move(*r));
  return records;
}

std::vector<Video> videos_in(const std::vector<WellRecord>& records, Split split) {
  std::vector<Video> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(r.video);
  return out;
}

Video first_frames(const Video& v, int n) {
  return Video(std::vector<Frame>(v.frames().begin(), v.frames().begin() + n), v.frame_interval_minutes());
}

// ---------------------------------------------------------------------------

constexpr int kGradientSeeds = 100;
constexpr double kOpTolerance = 1e-4;
constexpr double kModelTolerance = 1e-3;
// Every fifth end-to-end model uses 3x3 kernels, the rest 1x1.
constexpr int kWideKernelEvery = 5;

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double worst_op = 0.0, worst_cell = 0.0, worst_model = 0.0;
  for (int seed = 0; seed < kGradientSeeds; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    const auto s = static_cast<std::uint64_t>(seed);
    auto check = [&](std::vector<Tensor> in, auto f) { worst_op = std::max(worst_op, testkit::gradient_error(in, f)); };
    using V = const std::vector<Tensor>&;

    std::vector<Tensor> ew{testkit::random_tensor(rng, {2, 3, 4}), testkit::random_tensor(rng, {2, 3, 4}),
                           testkit::random_tensor(rng, {})};
    check(ew, [&](Tape& t, V v) { return testkit::weighted_sum(t, t.add(v[0], v[1]), s); });
    check(ew, [&](Tape& t, V v) { return testkit::weighted_sum(t, t.sub(v[0], v[2]), s); });
    check(ew, [&](Tape& t, V v) { return testkit::weighted_sum(t, t.mul(v[0], v[1]), s); });
    check(ew, [&](Tape& t, V v) { return testkit::weighted_sum(t, t.mul(v[2], v[1]), s); });
    check(ew, [&](Tape& t, V v) { return testkit::weighted_sum(t, t.scale(v[0], 0.3), s); });
    check(ew, [&](Tape& t, V v) { return testkit::weighted_sum(t, t.sigmoid(t.scale(v[0], 3.0)), s); });
    check(ew, [&](Tape& t, V v) { return testkit::weighted_sum(t, t.tanh(t.scale(v[1], 3.0)), s); });
    check(ew, [&](Tape& t, V v) { return t.add(t.mean(v[0]), t.sum(t.mul(v[1], v[1]))); });
    check(ew, [&](Tape& t, V v) { return t.mse_loss(v[0], v[1]); });
    check(ew, [&](Tape& t, V v) {
      const std::vector<Tensor> parts{v[0], v[1]};
      return testkit::weighted_sum(t, t.slice(t.concat(parts), 1, 3), s);
    });

    std::vector<Tensor> mm{testkit::random_tensor(rng, {3, 4}), testkit::random_tensor(rng, {4, 5})};
    check(mm, [&](Tape& t, V v) { return testkit::weighted_sum(t, t.matmul(v[0], v[1]), s); });

    const std::size_t k = seed % 2 ? 3 : 5;
    std::vector<Tensor> cv{testkit::random_tensor(rng, {2, 5, 6}), testkit::random_tensor(rng, {3, 2, k, k}),
                           testkit::random_tensor(rng, {3})};
    check(cv, [&](Tape& t, V v) { return testkit::weighted_sum(t, t.conv2d(v[0], v[1], v[2]), s); });

    const std::size_t h = 2;
    std::vector<Tensor> cell{testkit::random_tensor(rng, {7 * h, 3, 3, 3}), testkit::random_tensor(rng, {7 * h}),
                             testkit::random_tensor(rng, {4 * h, h, 3, 3}), testkit::random_tensor(rng, {3 * h, h, 3, 3}),
                             testkit::random_tensor(rng, {h, 2 * h, 3, 3}), testkit::random_tensor(rng, {h, 2 * h, 1, 1}),
                             testkit::random_tensor(rng, {3, 4, 4}), testkit::random_tensor(rng, {h, 4, 4}),
                             testkit::random_tensor(rng, {h, 4, 4}), testkit::random_tensor(rng, {h, 4, 4})};
    worst_cell = std::max(worst_cell, testkit::gradient_error(cell, [&](Tape& t, V v) {
      const auto out = st_cell_forward(t, {v[0], v[1], v[2], v[3], v[4], v[5]}, v[6], {v[7], v[8], {}}, v[9]);
      return t.add(t.add(testkit::weighted_sum(t, out.hidden, s), testkit::weighted_sum(t, out.cell, s + 1)),
                   testkit::weighted_sum(t, out.memory, s + 2));
    }));

    ModelConfig tiny;
    tiny.num_layers = 1;
    tiny.hidden_channels = 4;
    tiny.kernel_size = seed % kWideKernelEvery == 0 ? 3 : 1;
    tiny.patch_size = 2;
    tiny.frame_size = 8;
    tiny.input_frames = 3;
    tiny.total_frames = 5;
    PredictorModel model(tiny, s);
    const Video video = testkit::random_video(rng, tiny.total_frames, 8, 8, ColorSpace::HSV);
    std::vector<Tensor> frames;
    for (const Frame& f : video.frames()) frames.push_back(patchify(f, tiny.patch_size));
    std::vector<Tensor> params(model.parameters().begin(), model.parameters().end());
    worst_model = std::max(worst_model, testkit::gradient_error(params, [&](Tape& t, V) {
      return sequence_loss(t, model, frames);
    }));
  }
  const double elapsed = seconds_since(t0);
  const bool pass = worst_op < kOpTolerance && worst_cell < kOpTolerance && worst_model < kModelTolerance && elapsed < 60;
  return {pass, fmt("%d seeds, worst rel. error op %.2e, cell %.2e, model %.2e, %.1f s", kGradientSeeds, worst_op,
                    worst_cell, worst_model, elapsed)};
}

// ---------------------------------------------------------------------------

Outcome geometry_reproduction() {
  int checked = 0, failures = 0;
  for (int i = 0; i < 8; ++i) {
    SimConfig cfg;
    cfg.rng_seed = 300 + static_cast<std::uint64_t>(i);
    const Video raw = simulate_well(cfg).video;
    const WellRecord rec{"w", raw, Split::Raw, {}};
    const WellRecord out = preprocess_well(rec, {});
    const bool shape_ok = raw.size() == 14 && raw.height() == 24 && out.video.size() == 20 &&
                          out.video.height() == 32 && out.video.width() == 32 && out.video.space() == ColorSpace::HSV;

    std::mt19937_64 rng(cfg.rng_seed);
    std::vector<Frame> mutated(raw.frames().begin(), raw.frames().begin() + 7);
    for (int t = 7; t < 14; ++t) mutated.push_back(testkit::random_frame(rng, 24, 24));
    const WellRecord changed{"w", Video(std::move(mutated), raw.frame_interval_minutes()), Split::Raw, {}};
    const bool identical = preprocess_well(changed, {}).video == out.video;
    ++checked;
    if (!shape_ok || !identical) ++failures;
  }
  return {failures == 0, fmt("%d wells: 14x24x24 -> 20x32x32 HSV, tail mutation ignored in %d/%d", checked,
                             checked - failures, checked)};
}

// ---------------------------------------------------------------------------

Outcome split_discipline() {
  CorpusConfig cc;
  cc.wells = 48;
  cc.seed = 3;
  const auto records = preprocessed_corpus(cc);
  SplitSpec split;
  for (int i : {5, 17, 29, 41}) split.test_well_ids.push_back(corpus_well_id(i));
  AugmentConfig aug;
  aug.seed = 3;
  const auto out = expand_dataset(records, aug, split, workers());

  std::map<Split, int> counts;
  int contaminated = 0;
  const std::set<std::string> test_ids(split.test_well_ids.begin(), split.test_well_ids.end());
  for (const auto& r : out) {
    ++counts[r.split];
    if (r.split == Split::Test) {
      if (!r.lineage.empty()) ++contaminated;
      continue;
    }
    const std::string source = r.well_id.substr(0, r.well_id.find('~'));
    if (test_ids.count(source) || r.lineage.size() != 1) ++contaminated;
  }
  const int derived = counts[Split::Train] + counts[Split::Valid];
  const double expected_train = 0.8 * derived;
  const bool pass = aug.multiplicity() == 8 && derived == 352 && std::abs(counts[Split::Train] - expected_train) <= 1.0 &&
                    counts[Split::Test] == 4 && contaminated == 0;
  return {pass, fmt("multiplicity %d, %d derived records, train %d / valid %d, test %d, contaminated %d",
                    aug.multiplicity(), derived, counts[Split::Train], counts[Split::Valid], counts[Split::Test],
                    contaminated)};
}

// ---------------------------------------------------------------------------

ModelConfig small_model(int layers, int hidden, int kernel, int patch) {
  ModelConfig c;
  c.num_layers = layers;
  c.hidden_channels = hidden;
  c.kernel_size = kernel;
  c.patch_size = patch;
  return c;
}

Outcome overfit_sanity() {
  const auto t0 = Clock::now();
  CorpusConfig cc;
  cc.wells = 2;
  cc.seed = 21;
  const auto records = preprocessed_corpus(cc);
  const std::vector<Video> data = videos_in(records, Split::Raw);

  PredictorModel model(small_model(2, 16, 3, 4), 1);
  nn::AdamState opt;
  const double initial = evaluate_loss(model, data);
  TrainConfig cfg;
  cfg.iterations = 2000;
  cfg.batch_size = 2;
  cfg.learning_rate = 2e-3;
  cfg.workers = workers();
  train(model, opt, data, {}, cfg);
  const double final_loss = evaluate_loss(model, data);
  const double elapsed = seconds_since(t0);
  return {final_loss < 0.05 * initial && elapsed < 600,
          fmt("initial %.5f, after %d iterations %.6f (%.2f%%), %.0f s", initial, cfg.iterations, final_loss,
              100.0 * final_loss / initial, elapsed)};
}

// ---------------------------------------------------------------------------

struct HeldOutScore {
  double model_mse = 0.0;
  double baseline_mse = 0.0;
};

// Mean RGB MSE over predicted frames; the baseline repeats the last input frame.
HeldOutScore score_held_out(const PredictorModel& model, const std::vector<Video>& wells) {
  const ModelConfig& c = model.config();
  HeldOutScore s;
  int n = 0;
  for (const Video& v : wells) {
    const Video pred = predict(model, first_frames(v, c.input_frames));
    const Video gt = to_rgb(v);
    for (int k = 0; k < c.predicted_frames(); ++k) {
      s.model_mse += frame_mse(pred[k], gt[c.input_frames + k]);
      s.baseline_mse += frame_mse(gt[c.input_frames - 1], gt[c.input_frames + k]);
      ++n;
    }
  }
  s.model_mse /= n;
  s.baseline_mse /= n;
  return s;
}

struct SyntheticTask {
  std::vector<Video> train;
  std::vector<Video> held_out;
};

SyntheticTask synthetic_task(const CorpusConfig& cc, int held_out) {
  auto records = preprocessed_corpus(cc);
  SplitSpec split;
  for (int i = cc.wells - held_out; i < cc.wells; ++i) split.test_well_ids.push_back(corpus_well_id(i));
  AugmentConfig aug;
  aug.seed = cc.seed;
  const auto expanded = expand_dataset(records, aug, split, workers());
  return {videos_in(expanded, Split::Train), videos_in(expanded, Split::Test)};
}

Outcome generalization() {
  const auto t0 = Clock::now();
  CorpusConfig cc;
  cc.wells = 44;
  cc.seed = 11;
  const SyntheticTask task = synthetic_task(cc, 4);

  PredictorModel model(small_model(2, 32, 3, 4), 1);
  nn::AdamState opt;
  TrainConfig cfg;
  cfg.iterations = 5000;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  cfg.workers = workers();
  train(model, opt, task.train, {}, cfg);
  const HeldOutScore s = score_held_out(model, task.held_out);
  const double gain = 1.0 - s.model_mse / s.baseline_mse;
  const double elapsed = seconds_since(t0);
  return {gain >= 0.2 && elapsed < 7200,
          fmt("%zu training videos from 40 wells, held-out MSE model %.2f vs baseline %.2f (improvement %.1f%%), %.0f s",
              task.train.size(), s.model_mse, s.baseline_mse, 100.0 * gain, elapsed)};
}

// ---------------------------------------------------------------------------

constexpr int kImbalanceRuns = 10;

Outcome imbalance_replication() {
  const auto t0 = Clock::now();
  int overestimated = 0;
  std::string runs;
  for (int run = 0; run < kImbalanceRuns; ++run) {
    CorpusConfig cc;
    cc.wells = 20;
    cc.seed = 500 + static_cast<std::uint64_t>(run);
    cc.base.red_green_balance = 0.9;
    const SyntheticTask task = synthetic_task(cc, 0);

    SimConfig balanced = corpus_well_config(cc, 1000);
    balanced.red_green_balance = 0.5;
    const Video held_out = preprocess_well({"balanced", simulate_well(balanced).video, Split::Raw, {}}, {}).video;

    PredictorModel model(small_model(1, 8, 3, 4), static_cast<std::uint64_t>(run));
    nn::AdamState opt;
    TrainConfig cfg;
    cfg.iterations = 400;
    cfg.batch_size = 4;
    cfg.learning_rate = 2e-3;
    cfg.seed = static_cast<std::uint64_t>(run);
    cfg.workers = workers();
    train(model, opt, task.train, {}, cfg);

    const ModelConfig& c = model.config();
    const double pred_red = population_curve(predict(model, first_frames(held_out, c.input_frames))).back().red;
    const double gt_red = population_curve(held_out).back().red;
    if (pred_red > gt_red) ++overestimated;
    runs += fmt(" %.0f/%.0f", pred_red, gt_red);
  }
  return {2 * overestimated > kImbalanceRuns,
          fmt("red overestimated in %d/%d runs (pred/gt final red:%s), %.0f s", overestimated, kImbalanceRuns,
              runs.c_str(), seconds_since(t0))};
}

// ---------------------------------------------------------------------------

Outcome metrics_oracles() {
  std::mt19937_64 rng(77);
  int label_mismatch = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int h = std::uniform_int_distribution<int>(1, 24)(rng);
    const int w = std::uniform_int_distribution<int>(1, 24)(rng);
    std::bernoulli_distribution on(std::uniform_real_distribution<double>(0.1, 0.9)(rng));
    std::uniform_real_distribution<double> level(0.0, 1.0);
    std::vector<double> d(static_cast<std::size_t>(h) * w * 3, 0.0);
    for (std::size_t p = 0; p < d.size(); p += 3) {
      if (!on(rng)) continue;
      d[p] = level(rng);
      d[p + 1] = level(rng);
    }
    const Frame f(h, w, ColorSpace::RGB, std::move(d));
    const int min_pixels = trial % 4;
    if (label_colonies(f, 0.2, min_pixels) != testkit::flood_fill_oracle(f, 0.2, min_pixels)) ++label_mismatch;
  }

  int invariance_failures = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Video v = testkit::random_video(rng, 3, 10, 10);
    const auto base = population_curve(v);
    for (const Video& m : {apply_flip(v, FlipAxis::Horizontal), apply_flip(v, FlipAxis::Vertical),
                           apply_rotation(v, 90), apply_rotation(v, 180), apply_rotation(v, 270)}) {
      const auto c = population_curve(m);
      for (std::size_t t = 0; t < c.size(); ++t) {
        if (std::abs(c[t].red - base[t].red) > 1e-9 || std::abs(c[t].green - base[t].green) > 1e-9) {
          ++invariance_failures;
        }
      }
    }
  }

  int metric_failures = 0;
  for (int pair = 0; pair < 1000; ++pair) {
    const Frame a = testkit::random_frame(rng, 12, 12);
    const Frame b = testkit::random_frame(rng, 12, 12);
    const bool ok = frame_mse(a, a) == 0.0 && frame_mse(a, b) == frame_mse(b, a) && frame_mse(a, b) > 0.0 &&
                    std::abs(frame_ssim(a, a) - 1.0) < 1e-12 && std::abs(frame_ssim(a, b) - frame_ssim(b, a)) < 1e-12 &&
                    frame_ssim(a, b) < 1.0;
    if (!ok) ++metric_failures;
  }
  return {label_mismatch == 0 && invariance_failures == 0 && metric_failures == 0,
          fmt("labeling mismatches %d/100, population invariance failures %d, MSE/SSIM property failures %d/1000",
              label_mismatch, invariance_failures, metric_failures)};
}

// ---------------------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WELLCAST_EXE) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Relative path -> contents for every file except resolved_config.json, which records the output path.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "resolved_config.json") continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return out;
}

Outcome determinism() {
  const fs::path base = fs::temp_directory_path() / "wellcast_acceptance_pipeline";
  fs::remove_all(base);
  const std::string flags =
      " pipeline --seed 9 --wells 8 --test-count 2 --layers 1 --hidden 4 --kernel 3 --patch 4 --iterations 20"
      " --batch-size 2 --valid-every 10 --checkpoint-every 10";
  const std::vector<std::pair<std::string, int>> runs{{"a", 1}, {"b", 1}, {"c", 4}};
  std::vector<std::map<std::string, std::string>> trees;
  for (const auto& [name, w] : runs) {
    const int code = run_cli("--workers " + std::to_string(w) + flags + " --out " + (base / name).string());
    if (code != 0) return {false, fmt("pipeline run %s exited with %d", name.c_str(), code)};
    trees.push_back(snapshot(base / name));
  }
  int manifests = 0, checkpoints = 0, reports = 0;
  for (const auto& [path, _] : trees[0]) {
    if (path.ends_with("manifest.json")) ++manifests;
    if (path.ends_with(".wckp")) ++checkpoints;
    if (path.find("report.") != std::string::npos) ++reports;
  }
  const bool same_runs = trees[0] == trees[1];
  const bool same_workers = trees[0] == trees[2];
  const bool complete = manifests == 3 && checkpoints == 1 && reports == 2;
  return {same_runs && same_workers && complete,
          fmt("%zu files (%d manifests, %d checkpoint, %d reports); repeat run %s, workers 1 vs 4 %s", trees[0].size(),
              manifests, checkpoints, reports, same_runs ? "identical" : "DIFFERENT",
              same_workers ? "identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, Outcome (*)()>> criteria{
      {"gradient correctness", gradient_correctness}, {"geometry reproduction", geometry_reproduction},
      {"split discipline", split_discipline},         {"overfit sanity", overfit_sanity},
      {"generalization", generalization},             {"imbalance replication", imbalance_replication},
      {"metrics oracles", metrics_oracles},           {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(number)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %d %-22s %s  %s\n", number, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
