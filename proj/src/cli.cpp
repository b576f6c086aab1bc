#include "wellcast/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "wellcast/augment.hpp"
#include "wellcast/error.hpp"
#include "wellcast/metrics.hpp"
#include "wellcast/parallel.hpp"
#include "wellcast/predictor.hpp"
#include "wellcast/preprocess.hpp"
#include "wellcast/random.hpp"
#include "wellcast/simulate.hpp"

namespace wellcast::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Raised with the stage name so the top level can report where a run failed.
struct StageFailure : std::runtime_error {
  StageFailure(std::string stage, const std::string& what) : std::runtime_error(what), stage(std::move(stage)) {}
  std::string stage;
};

template <class F>
auto stage(const char* name, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    throw StageFailure(name, std::string(to_string(e.kind())) + ": " + e.what());
  } catch (const fs::filesystem_error& e) {
    throw StageFailure(name, std::string("IoError: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw StageFailure(name, std::string("BadManifest: ") + e.what());
  }
}

void write_config(const fs::path& dir, const ordered_json& config) {
  fs::create_directories(dir);
  std::ofstream out(dir / "resolved_config.json", std::ios::binary | std::ios::trunc);
  out << config.dump(2) << "\n";
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + (dir / "resolved_config.json").string());
}

struct SimulateOptions {
  fs::path out;
  CorpusConfig corpus;
};

struct PreprocessOptions {
  fs::path manifest;
  fs::path out;
  PreprocessConfig cfg;
};

struct AugmentOptions {
  fs::path manifest;
  fs::path out;
  AugmentConfig aug;
  SplitSpec split;
  int test_count = 4;
  bool no_flips = false;
  bool no_rotations = false;
};

struct TrainOptions {
  fs::path manifest;
  fs::path out;
  ModelConfig model;
  TrainConfig train;
  std::uint64_t init_seed = 0;
  fs::path resume;
};

struct PredictOptions {
  fs::path checkpoint;
  fs::path input;
  fs::path out;
};

struct EvalOptions {
  fs::path gt;
  fs::path pred;
  fs::path out;
  EvalConfig cfg;
};

ordered_json sim_json(const CorpusConfig& c) {
  const SimConfig& b = c.base;
  return {{"wells", c.wells},
          {"seed", c.seed},
          {"min_seeds", c.min_seeds},
          {"max_seeds", c.max_seeds},
          {"image_size", b.image_size},
          {"frames", b.frames},
          {"well_radius", b.well_radius},
          {"seed_radius", b.seed_radius},
          {"growth_rate", b.growth_rate},
          {"carrying_capacity", b.carrying_capacity},
          {"kill_strength", b.kill_strength},
          {"symmetric_kill", b.symmetric_kill},
          {"noise_sigma", b.noise_sigma},
          {"balance", b.red_green_balance}};
}

ordered_json preprocess_json(const PreprocessConfig& c) {
  return {{"keep_frames", c.keep_frames},
          {"target_frames", c.target_frames},
          {"crop_size", c.crop_size},
          {"target_size", c.target_size}};
}

ordered_json augment_json(const AugmentOptions& o) {
  ordered_json flips = ordered_json::array();
  for (auto f : o.aug.flips) flips.push_back(f == FlipAxis::Horizontal ? "horizontal" : "vertical");
  return {{"seed", o.aug.seed},
          {"identity", o.aug.identity},
          {"flips", flips},
          {"rotations", o.aug.rotations},
          {"blur_sigma", o.aug.blur_sigma},
          {"noise_sigma", o.aug.noise_sigma},
          {"train_fraction", o.split.train_fraction},
          {"test_wells", o.split.test_well_ids}};
}

ordered_json train_json(const TrainOptions& o) {
  return {{"model", ordered_json::parse(o.model.to_json())},
          {"init_seed", o.init_seed},
          {"iterations", o.train.iterations},
          {"learning_rate", o.train.learning_rate},
          {"batch_size", o.train.batch_size},
          {"seed", o.train.seed},
          {"valid_every", o.train.valid_every},
          {"max_valid_videos", o.train.max_valid_videos},
          {"checkpoint_every", o.train.checkpoint_every},
          {"resume", o.resume.string()}};
}

ordered_json eval_json(const EvalConfig& c) {
  return {{"threshold", c.colony_threshold},
          {"min_colony_pixels", c.min_colony_pixels},
          {"first_frame_index", c.first_frame_index}};
}

void add_model_flags(CLI::App& cmd, TrainOptions& o) {
  cmd.add_option("--layers", o.model.num_layers, "Stacked ST-LSTM layers")->capture_default_str();
  cmd.add_option("--hidden", o.model.hidden_channels, "Hidden channels per layer")->capture_default_str();
  cmd.add_option("--kernel", o.model.kernel_size, "Convolution kernel size")->capture_default_str();
  cmd.add_option("--patch", o.model.patch_size, "Patch size for space-to-depth")->capture_default_str();
  cmd.add_option("--iterations", o.train.iterations, "Optimizer steps")->capture_default_str();
  cmd.add_option("--lr", o.train.learning_rate, "Adam learning rate")->capture_default_str();
  cmd.add_option("--batch-size,--batch", o.train.batch_size, "Videos per step")->capture_default_str();
  cmd.add_option("--valid-every", o.train.valid_every, "Validation interval")->capture_default_str();
  cmd.add_option("--max-valid", o.train.max_valid_videos, "Cap on validation videos (0 = all)")
      ->capture_default_str();
  cmd.add_option("--checkpoint-every", o.train.checkpoint_every, "Checkpoint interval")->capture_default_str();
}

void add_sim_flags(CLI::App& cmd, CorpusConfig& c) {
  cmd.add_option("--wells", c.wells, "Number of wells")->capture_default_str();
  cmd.add_option("--frames", c.base.frames, "Frames per well")->capture_default_str();
  cmd.add_option("--size", c.base.image_size, "Image size in pixels")->capture_default_str();
  cmd.add_option("--radius", c.base.well_radius, "Well radius in pixels")->capture_default_str();
  cmd.add_option("--balance", c.base.red_green_balance, "Red/green seed size balance")->capture_default_str();
  cmd.add_option("--growth-rate", c.base.growth_rate, "Colonization probability scale")->capture_default_str();
  cmd.add_option("--kill", c.base.kill_strength, "Contact killing probability")->capture_default_str();
  cmd.add_flag("--symmetric-kill", c.base.symmetric_kill, "Red also kills green");
  cmd.add_option("--min-seeds", c.min_seeds, "Minimum seeds per species")->capture_default_str();
  cmd.add_option("--max-seeds", c.max_seeds, "Maximum seeds per species")->capture_default_str();
}

// --- stages -----------------------------------------------------------------

void do_simulate(const SimulateOptions& o, int workers) {
  generate_corpus(o.corpus, o.out, workers);
  write_config(o.out, {{"command", "simulate"}, {"out", o.out.string()}, {"simulate", sim_json(o.corpus)}});
}

void do_preprocess(const PreprocessOptions& o, int workers) {
  o.cfg.validate();
  const DatasetManifest in = load_manifest(o.manifest);
  std::vector<std::optional<WellRecord>> out(in.records.size());
  parallel_for(out.size(), workers, [&](std::size_t i) {
    out[i] = preprocess_well(load_record(in, in.records[i]), o.cfg);
  });
  std::vector<WellRecord> records;
  for (auto& r : out) records.push_back(std::move(*r));
  write_dataset(records, o.out, in.seed, workers);
  write_config(o.out, {{"command", "preprocess"},
                       {"manifest", o.manifest.string()},
                       {"out", o.out.string()},
                       {"preprocess", preprocess_json(o.cfg)}});
}

// Picks `count` well ids with a seeded shuffle when none were named explicitly.
std::vector<std::string> choose_test_wells(const DatasetManifest& m, int count, std::uint64_t seed) {
  if (count < 0 || static_cast<std::size_t>(count) >= m.records.size()) {
    throw Error(ErrorKind::InvalidArgument, "test well count must be in [0, " + std::to_string(m.records.size()) + ")");
  }
  std::vector<std::string> ids;
  for (const auto& e : m.records) ids.push_back(e.well_id);
  std::mt19937_64 rng(derive_seed(seed, {0x7e57u}));
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(static_cast<std::size_t>(count));
  std::sort(ids.begin(), ids.end());
  return ids;
}

void do_augment(AugmentOptions o, int workers) {
  if (o.no_flips) o.aug.flips.clear();
  if (o.no_rotations) o.aug.rotations.clear();
  const DatasetManifest in = load_manifest(o.manifest);
  if (o.split.test_well_ids.empty()) o.split.test_well_ids = choose_test_wells(in, o.test_count, o.aug.seed);
  std::vector<std::optional<WellRecord>> loaded(in.records.size());
  parallel_for(loaded.size(), workers, [&](std::size_t i) {
    WellRecord r = load_record(in, in.records[i]);
    r.video = to_hsv(r.video);
    loaded[i] = std::move(r);
  });
  std::vector<WellRecord> records;
  for (auto& r : loaded) records.push_back(std::move(*r));
  const auto expanded = expand_dataset(records, o.aug, o.split, workers);
  write_dataset(expanded, o.out, o.aug.seed, workers);
  write_config(o.out, {{"command", "augment"},
                       {"manifest", o.manifest.string()},
                       {"out", o.out.string()},
                       {"augment", augment_json(o)}});
}

fs::path do_train(const TrainOptions& o, int workers) {
  const DatasetManifest manifest = load_manifest(o.manifest);
  std::optional<Checkpoint> start;
  if (!o.resume.empty()) {
    start.emplace(load_checkpoint(o.resume));
  } else {
    o.model.validate();
    start.emplace(Checkpoint{PredictorModel(o.model, o.init_seed), nn::AdamState{}, 0});
  }
  TrainConfig cfg = o.train;
  cfg.workers = workers;
  cfg.checkpoint_path = o.out / "checkpoint.wckp";
  fs::create_directories(o.out);
  const TrainingLog log = train(start->model, start->optimizer, manifest, cfg);
  log.write_csv(o.out / "training_log.csv");
  if (cfg.iterations == 0) save_checkpoint(cfg.checkpoint_path, start->model, start->optimizer, start->optimizer.step);
  write_config(o.out, {{"command", "train"},
                       {"manifest", o.manifest.string()},
                       {"out", o.out.string()},
                       {"train", train_json(o)}});
  return cfg.checkpoint_path;
}

Video prediction_input(const Video& video, const ModelConfig& cfg) {
  if (video.size() < static_cast<std::size_t>(cfg.input_frames)) {
    throw Error(ErrorKind::TooFewFrames, "input has " + std::to_string(video.size()) + " frames, model needs " +
                                             std::to_string(cfg.input_frames));
  }
  const auto frames = video.frames();
  return Video(std::vector<Frame>(frames.begin(), frames.begin() + cfg.input_frames),
               video.frame_interval_minutes());
}

void do_predict(const PredictOptions& o) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const Video input = load_video(o.input);
  save_video(predict(ckpt.model, prediction_input(input, ckpt.model.config())), o.out);
  write_config(o.out, {{"command", "predict"},
                       {"checkpoint", o.checkpoint.string()},
                       {"input", o.input.string()},
                       {"out", o.out.string()}});
}

// When groundtruth holds the full sequence, its trailing frames are the ones predicted.
Video aligned_groundtruth(const Video& gt, const Video& pred) {
  if (gt.size() < pred.size()) {
    throw Error(ErrorKind::ShapeMismatch, "groundtruth has " + std::to_string(gt.size()) +
                                              " frames, fewer than the " + std::to_string(pred.size()) + " predicted");
  }
  const auto frames = gt.frames();
  return Video(std::vector<Frame>(frames.end() - static_cast<std::ptrdiff_t>(pred.size()), frames.end()),
               gt.frame_interval_minutes());
}

void do_eval(const EvalOptions& o) {
  const Video pred = load_video(o.pred);
  const Video gt = aligned_groundtruth(load_video(o.gt), pred);
  const EvalReport report = evaluate_well(o.gt.filename().string(), gt, pred, o.cfg);
  write_report(report, o.out);
  fs::path csv = o.out;
  csv.replace_extension(".csv");
  std::ofstream out(csv, std::ios::binary | std::ios::trunc);
  out << "well_id,frame,metric,value\n" << report.to_csv();
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + csv.string());
  write_config(o.out.has_parent_path() ? o.out.parent_path() : fs::path("."),
               {{"command", "eval"},
                {"gt", o.gt.string()},
                {"pred", o.pred.string()},
                {"out", o.out.string()},
                {"eval", eval_json(o.cfg)}});
}

struct PipelineOptions {
  fs::path out;
  CorpusConfig corpus;
  PreprocessConfig preprocess;
  AugmentOptions augment;
  TrainOptions train;
  EvalConfig eval;
};

void do_pipeline(PipelineOptions o, int workers) {
  const fs::path raw = o.out / "raw", pre = o.out / "preprocessed", aug = o.out / "augmented",
                 model = o.out / "model", preds = o.out / "predictions", eval = o.out / "eval";
  const std::uint64_t seed = o.corpus.seed;
  o.augment.aug.seed = seed;
  o.train.train.seed = seed;
  o.train.init_seed = seed;
  o.train.model.frame_size = o.preprocess.target_size;
  o.train.model.total_frames = o.preprocess.target_frames;
  o.eval.first_frame_index = o.train.model.input_frames + 1;

  write_config(o.out, {{"command", "pipeline"},
                       {"out", o.out.string()},
                       {"seed", seed},
                       {"simulate", sim_json(o.corpus)},
                       {"preprocess", preprocess_json(o.preprocess)},
                       {"augment", augment_json(o.augment)},
                       {"test_count", o.augment.test_count},
                       {"train", train_json(o.train)},
                       {"eval", eval_json(o.eval)}});

  stage("simulate", [&] { do_simulate({raw, o.corpus}, workers); });
  stage("preprocess", [&] { do_preprocess({raw / "manifest.json", pre, o.preprocess}, workers); });
  stage("augment", [&] {
    o.augment.manifest = pre / "manifest.json";
    o.augment.out = aug;
    do_augment(o.augment, workers);
  });
  const fs::path ckpt = stage("train", [&] {
    o.train.manifest = aug / "manifest.json";
    o.train.out = model;
    return do_train(o.train, workers);
  });

  const DatasetManifest augmented = stage("predict", [&] { return load_manifest(aug / "manifest.json"); });
  const auto tests = augmented.entries_in(Split::Test);
  std::vector<std::optional<EvalReport>> reports(tests.size());
  stage("predict", [&] {
    const Checkpoint c = load_checkpoint(ckpt);
    parallel_for(tests.size(), workers, [&](std::size_t i) {
      const Video video = load_video(augmented.resolve(*tests[i]));
      save_video(predict(c.model, prediction_input(video, c.model.config())), preds / tests[i]->well_id);
    });
  });
  stage("eval", [&] {
    parallel_for(tests.size(), workers, [&](std::size_t i) {
      const Video pred = load_video(preds / tests[i]->well_id);
      const Video gt = aligned_groundtruth(load_video(augmented.resolve(*tests[i])), pred);
      reports[i] = evaluate_well(tests[i]->well_id, gt, pred, o.eval);
    });
    std::vector<EvalReport> all;
    for (auto& r : reports) all.push_back(std::move(*r));
    write_reports(all, eval / "report.json", eval / "report.csv");
  });
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Microwell fluorescence video forecasting toolkit", "wellcast"};
  app.require_subcommand(1);
  app.fallthrough();
  int workers = default_workers();
  app.add_option("--workers", workers, "Worker threads (results do not depend on it)")->capture_default_str();

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic well corpus");
  add_sim_flags(*simulate, sim.corpus);
  simulate->add_option("--seed", sim.corpus.seed, "Corpus seed")->capture_default_str();
  simulate->add_option("--out", sim.out, "Output directory")->required();

  PreprocessOptions pre;
  auto* preprocess = app.add_subcommand("preprocess", "Crop, resample and convert raw wells to HSV");
  preprocess->add_option("--manifest", pre.manifest, "Raw manifest")->required()->check(CLI::ExistingFile);
  preprocess->add_option("--out", pre.out, "Output directory")->required();
  preprocess->add_option("--keep-frames", pre.cfg.keep_frames, "Leading frames used")->capture_default_str();
  preprocess->add_option("--target-frames", pre.cfg.target_frames, "Frames after resampling")->capture_default_str();
  preprocess->add_option("--crop", pre.cfg.crop_size, "Crop size around the well")->capture_default_str();
  preprocess->add_option("--target-size,--size", pre.cfg.target_size, "Output frame size")->capture_default_str();

  AugmentOptions aug;
  auto* augment = app.add_subcommand("augment", "Hold out test wells, augment and split the rest");
  augment->add_option("--manifest", aug.manifest, "Preprocessed manifest")->required()->check(CLI::ExistingFile);
  augment->add_option("--out", aug.out, "Output directory")->required();
  augment->add_option("--seed", aug.aug.seed, "Augmentation and split seed")->capture_default_str();
  augment->add_option("--test-wells", aug.split.test_well_ids, "Held-out well ids")->delimiter(',');
  augment->add_option("--test-count", aug.test_count, "Held-out wells when none are named")->capture_default_str();
  augment->add_option("--train-fraction", aug.split.train_fraction, "Train share of augmented records")
      ->capture_default_str();
  augment->add_option("--blur-sigma", aug.aug.blur_sigma, "Blur sigma (0 disables)")->capture_default_str();
  augment->add_option("--noise-sigma", aug.aug.noise_sigma, "Noise sigma (0 disables)")->capture_default_str();
  augment->add_flag("--no-flips", aug.no_flips, "Skip flipped copies");
  augment->add_flag("--no-rotations", aug.no_rotations, "Skip rotated copies");

  TrainOptions tr;
  auto* trainc = app.add_subcommand("train", "Train the predictor on an augmented manifest");
  trainc->add_option("--manifest", tr.manifest, "Augmented manifest")->required()->check(CLI::ExistingFile);
  trainc->add_option("--out", tr.out, "Output directory for checkpoint and log")->required();
  trainc->add_option("--seed", tr.train.seed, "Batch sampling seed")->capture_default_str();
  trainc->add_option("--init-seed", tr.init_seed, "Parameter initialization seed")->capture_default_str();
  trainc->add_option("--frame-size", tr.model.frame_size, "Frame size the model expects")->capture_default_str();
  trainc->add_option("--input-frames", tr.model.input_frames, "Conditioning frames")->capture_default_str();
  trainc->add_option("--total-frames", tr.model.total_frames, "Frames per training video")->capture_default_str();
  trainc->add_option("--resume", tr.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  add_model_flags(*trainc, tr);

  PredictOptions pr;
  auto* predictc = app.add_subcommand("predict", "Forecast frames from a checkpoint");
  predictc->add_option("--checkpoint,--ckpt", pr.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  predictc->add_option("--input", pr.input, "Video directory; its first input_frames frames are used")
      ->required()
      ->check(CLI::ExistingDirectory);
  predictc->add_option("--out", pr.out, "Output video directory")->required();

  EvalOptions ev;
  auto* evalc = app.add_subcommand("eval", "Compare predicted frames with groundtruth");
  evalc->add_option("--gt", ev.gt, "Groundtruth video directory")->required()->check(CLI::ExistingDirectory);
  evalc->add_option("--pred", ev.pred, "Predicted video directory")->required()->check(CLI::ExistingDirectory);
  evalc->add_option("--out", ev.out, "Report JSON path (CSV written alongside)")->required();
  evalc->add_option("--threshold", ev.cfg.colony_threshold, "Colony value threshold")->capture_default_str();
  evalc->add_option("--min-pixels", ev.cfg.min_colony_pixels, "Smallest colony kept")->capture_default_str();
  evalc->add_option("--first-frame", ev.cfg.first_frame_index, "Label of the first predicted frame")
      ->capture_default_str();

  PipelineOptions pl;
  auto* pipeline = app.add_subcommand("pipeline", "simulate, preprocess, augment, train, predict and eval");
  pipeline->add_option("--out", pl.out, "Output directory")->required();
  pipeline->add_option("--seed", pl.corpus.seed, "Seed for every stage")->capture_default_str();
  add_sim_flags(*pipeline, pl.corpus);
  pipeline->add_option("--test-count", pl.augment.test_count, "Held-out wells")->capture_default_str();
  add_model_flags(*pipeline, pl.train);
  pipeline->add_option("--threshold", pl.eval.colony_threshold, "Colony value threshold")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (workers < 1) {
    std::cerr << "wellcast: --workers must be >= 1\n";
    return 2;
  }

  try {
    if (*simulate) stage("simulate", [&] { do_simulate(sim, workers); });
    if (*preprocess) stage("preprocess", [&] { do_preprocess(pre, workers); });
    if (*augment) stage("augment", [&] { do_augment(aug, workers); });
    if (*trainc) stage("train", [&] { do_train(tr, workers); });
    if (*predictc) stage("predict", [&] { do_predict(pr); });
    if (*evalc) stage("eval", [&] { do_eval(ev); });
    if (*pipeline) do_pipeline(pl, workers);
  } catch (const StageFailure& e) {
    std::cerr << "wellcast: " << e.stage << " failed: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "wellcast: failed: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace wellcast::cli
