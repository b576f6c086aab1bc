#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>

#include <spdlog/spdlog.h>

#include "wellcast/error.hpp"
#include "wellcast/logging.hpp"
#include "wellcast/parallel.hpp"
#include "wellcast/predictor.hpp"
#include "wellcast/random.hpp"

namespace wellcast {

using nn::Tape;
using nn::Tensor;

namespace {

using FrameTensors = std::vector<Tensor>;

std::vector<FrameTensors> patchify_set(std::span<const Video> videos, const ModelConfig& cfg, const char* what) {
  std::vector<FrameTensors> out;
  out.reserve(videos.size());
  for (std::size_t v = 0; v < videos.size(); ++v) {
    const Video& video = videos[v];
    if (video.space() != ColorSpace::HSV) {
      throw Error(ErrorKind::WrongColorSpace, std::string(what) + " video " + std::to_string(v) + " is not HSV");
    }
    if (video.size() != static_cast<std::size_t>(cfg.total_frames) || video.height() != cfg.frame_size ||
        video.width() != cfg.frame_size) {
      throw Error(ErrorKind::ShapeMismatch, std::string(what) + " video " + std::to_string(v) + " is " +
                                                std::to_string(video.size()) + "x" + std::to_string(video.height()) +
                                                "x" + std::to_string(video.width()) + ", expected " +
                                                std::to_string(cfg.total_frames) + "x" +
                                                std::to_string(cfg.frame_size) + "x" + std::to_string(cfg.frame_size));
    }
    FrameTensors frames;
    for (const Frame& f : video.frames()) frames.push_back(patchify(f, cfg.patch_size));
    out.push_back(std::move(frames));
  }
  return out;
}

double mean_loss(const PredictorModel& model, std::span<const FrameTensors> set, int workers) {
  if (set.empty()) throw Error(ErrorKind::EmptyDataset, "no videos to evaluate");
  std::vector<double> losses(set.size());
  parallel_for(set.size(), workers, [&](std::size_t i) {
    Tape tape(false);
    losses[i] = sequence_loss(tape, model, set[i]).item();
  });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(losses.size());
}

void validate(const TrainConfig& cfg) {
  if (cfg.iterations < 0) throw Error(ErrorKind::InvalidArgument, "iterations must be >= 0");
  if (cfg.batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch_size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw Error(ErrorKind::InvalidArgument, "learning_rate must be positive");
  if (cfg.valid_every < 1 || cfg.checkpoint_every < 1) {
    throw Error(ErrorKind::InvalidArgument, "valid_every and checkpoint_every must be >= 1");
  }
}

}  // namespace

void TrainingLog::write_csv(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + file.string());
  out << "iteration,train_mse,valid_mse\n";
  char buf[64];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%.10g", row.train_mse);
    out << row.iteration << ',' << buf << ',';
    if (row.valid_mse) {
      std::snprintf(buf, sizeof buf, "%.10g", *row.valid_mse);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorKind::IoError, "failed writing " + file.string());
}

double evaluate_loss(const PredictorModel& model, std::span<const Video> videos, int workers) {
  const auto set = patchify_set(videos, model.config(), "evaluation");
  return mean_loss(model, set, workers);
}

TrainingLog train(PredictorModel& model, nn::AdamState& optimizer, std::span<const Video> train_set,
                  std::span<const Video> valid_set, const TrainConfig& cfg) {
  validate(cfg);
  if (train_set.empty()) throw Error(ErrorKind::EmptyDataset, "training split is empty");
  const ModelConfig& mcfg = model.config();
  const auto train_data = patchify_set(train_set, mcfg, "training");
  auto valid_data = patchify_set(valid_set, mcfg, "validation");
  if (cfg.max_valid_videos > 0 && valid_data.size() > static_cast<std::size_t>(cfg.max_valid_videos)) {
    valid_data.resize(static_cast<std::size_t>(cfg.max_valid_videos));
  }

  optimizer.learning_rate = cfg.learning_rate;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const auto slots = static_cast<std::size_t>(std::clamp(cfg.workers, 1, cfg.batch_size));
  std::vector<PredictorModel> replicas;
  for (std::size_t s = 0; s < slots; ++s) replicas.push_back(model.clone());

  const std::size_t n_params = model.parameters().size();
  std::vector<std::vector<std::vector<double>>> sample_grads(batch, std::vector<std::vector<double>>(n_params));
  std::vector<double> sample_loss(batch);
  std::vector<std::size_t> picks(batch);

  TrainingLog log;
  const std::int64_t start = optimizer.step;
  auto logger_ptr = logger();
  for (int it = 1; it <= cfg.iterations; ++it) {
    const std::int64_t iteration = start + it;
    std::mt19937_64 rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(iteration)}));
    std::uniform_int_distribution<std::size_t> pick(0, train_data.size() - 1);
    for (auto& p : picks) p = pick(rng);
    for (auto& r : replicas) r.copy_values_from(model);

    parallel_for_slots(batch, static_cast<int>(slots), [&](std::size_t i, std::size_t slot) {
      PredictorModel& replica = replicas[slot];
      replica.zero_grad();
      Tape tape;
      const Tensor loss = sequence_loss(tape, replica, train_data[picks[i]]);
      tape.backward(loss);
      sample_loss[i] = loss.item();
      const auto params = replica.parameters();
      for (std::size_t p = 0; p < n_params; ++p) {
        const auto g = params[p].grad();
        sample_grads[i][p].assign(g.begin(), g.end());
        if (g.empty()) sample_grads[i][p].assign(params[p].numel(), 0.0);
      }
    });

    auto params = model.parameters();
    double loss_total = 0.0;
    for (std::size_t i = 0; i < batch; ++i) loss_total += sample_loss[i];
    for (std::size_t p = 0; p < n_params; ++p) {
      auto g = params[p].mutable_grad();
      std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t i = 0; i < batch; ++i) {
        const auto& sg = sample_grads[i][p];
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += sg[j];
      }
      for (double& v : g) v /= static_cast<double>(batch);
    }
    nn::adam_step(params, optimizer);

    TrainLogRow row{iteration, loss_total / static_cast<double>(batch), std::nullopt};
    const bool last = it == cfg.iterations;
    if (!valid_data.empty() && (iteration % cfg.valid_every == 0 || last)) {
      row.valid_mse = mean_loss(model, valid_data, cfg.workers);
      logger_ptr->info("iteration {} train_mse {:.6g} valid_mse {:.6g}", iteration, row.train_mse, *row.valid_mse);
    } else {
      logger_ptr->debug("iteration {} train_mse {:.6g}", iteration, row.train_mse);
    }
    log.rows.push_back(row);
    if (!cfg.checkpoint_path.empty() && (iteration % cfg.checkpoint_every == 0 || last)) {
      save_checkpoint(cfg.checkpoint_path, model, optimizer, iteration);
    }
  }
  return log;
}

TrainingLog train(PredictorModel& model, nn::AdamState& optimizer, const DatasetManifest& manifest,
                  const TrainConfig& cfg) {
  auto load_split = [&](Split split) {
    const auto entries = manifest.entries_in(split);
    if (entries.empty()) {
      throw Error(ErrorKind::EmptyDataset, "manifest has no " + std::string(to_string(split)) + " records");
    }
    std::vector<std::optional<Video>> loaded(entries.size());
    parallel_for(entries.size(), cfg.workers,
                 [&](std::size_t i) { loaded[i] = to_hsv(load_video(manifest.resolve(*entries[i]))); });
    std::vector<Video> videos;
    videos.reserve(loaded.size());
    for (auto& v : loaded) videos.push_back(std::move(*v));
    return videos;
  };
  const auto train_videos = load_split(Split::Train);
  const auto valid_videos = load_split(Split::Valid);
  return train(model, optimizer, train_videos, valid_videos, cfg);
}

}  // namespace wellcast
