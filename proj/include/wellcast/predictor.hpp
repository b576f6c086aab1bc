#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wellcast/tensor.hpp"
#include "wellcast/video.hpp"

namespace wellcast {

struct ModelConfig {
  int num_layers = 4;
  int hidden_channels = 32;
  int kernel_size = 5;
  int patch_size = 4;
  int input_frames = 10;
  int total_frames = 20;
  int in_channels = 3;
  int frame_size = 32;

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;

  int patch_channels() const noexcept { return patch_size * patch_size * in_channels; }
  int grid_size() const noexcept { return frame_size / patch_size; }
  int predicted_frames() const noexcept { return total_frames - input_frames; }

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

/// Space-to-depth: an H x W x 3 frame becomes a [p*p*3, H/p, W/p] tensor whose
/// channel (py * p + px) * 3 + c holds pixel (i * p + py, j * p + px, c).
nn::Tensor patchify(const Frame& frame, int patch_size);
Frame unpatchify(const nn::Tensor& tensor, int patch_size, ColorSpace space);

/// Handles to one spatiotemporal LSTM layer's parameters.
struct CellParams {
  nn::Tensor conv_x;     // [7 hidden, in, k, k]: gates i, f, g, i', f', g', o from the input
  nn::Tensor bias_x;     // [7 hidden]
  nn::Tensor conv_h;     // [4 hidden, hidden, k, k]: gates i, f, g, o from the hidden state
  nn::Tensor conv_m;     // [3 hidden, hidden, k, k]: gates i', f', g' from the spatiotemporal memory
  nn::Tensor conv_o;     // [hidden, 2 hidden, k, k]: output gate from [C, M]
  nn::Tensor conv_last;  // [hidden, 2 hidden, 1, 1]: fuses [C, M] into the hidden state
};

struct STCellState {
  nn::Tensor hidden;
  nn::Tensor cell;
  nn::Tensor memory;
};

/// One spatiotemporal LSTM step. `prev` supplies this layer's hidden state and
/// cell memory from the previous timestep; `memory` is the spatiotemporal
/// memory arriving from the layer below (or from the top layer at t - 1).
STCellState st_cell_forward(nn::Tape& tape, const CellParams& params, const nn::Tensor& x, const STCellState& prev,
                            const nn::Tensor& memory);

/// Stacked spatiotemporal LSTM with a sigmoid 1x1 output head.
class PredictorModel {
 public:
  /// Convolution weights uniform in +-sqrt(1 / fan_in), biases zero.
  PredictorModel(ModelConfig config, std::uint64_t seed);

  /// Adopts existing parameters; names and shapes must match the config's layout.
  PredictorModel(ModelConfig config, std::vector<std::string> names, std::vector<nn::Tensor> params);

  const ModelConfig& config() const noexcept { return config_; }
  const std::vector<std::string>& parameter_names() const noexcept { return names_; }
  std::span<nn::Tensor> parameters() noexcept { return params_; }
  std::span<const nn::Tensor> parameters() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept;

  CellParams cell(int layer) const;
  const nn::Tensor& head_weight() const noexcept { return params_[params_.size() - 2]; }
  const nn::Tensor& head_bias() const noexcept { return params_.back(); }

  /// Independent copy of every parameter.
  PredictorModel clone() const;
  void copy_values_from(const PredictorModel& other);
  void zero_grad() noexcept;

  /// Expected names and shapes, in storage order.
  static std::vector<std::pair<std::string, nn::Shape>> layout(const ModelConfig& config);

 private:
  ModelConfig config_;
  std::vector<std::string> names_;
  std::vector<nn::Tensor> params_;
};

enum class SequenceMode { Training, Inference };

/// Runs the recurrence over patchified HSV frames.
///
/// Frames before input_frames are fed from `frames`; later steps consume the
/// model's own previous prediction. Training mode expects total_frames
/// frames, inference mode input_frames. Returns predicted_frames() tensors.
std::vector<nn::Tensor> forward_sequence(nn::Tape& tape, const PredictorModel& model,
                                         std::span<const nn::Tensor> frames, SequenceMode mode);

/// Convenience wrapper taking and returning HSV videos; no gradients are recorded.
Video forward_sequence(const PredictorModel& model, const Video& video, SequenceMode mode);

/// Mean over the predicted frames of the per-frame MSE against frames
/// input_frames .. total_frames - 1 of `frames`.
nn::Tensor sequence_loss(nn::Tape& tape, const PredictorModel& model, std::span<const nn::Tensor> frames);

struct TrainConfig {
  int iterations = 50000;
  double learning_rate = 3e-4;
  int batch_size = 8;
  std::uint64_t seed = 0;
  int valid_every = 500;
  int max_valid_videos = 0;  // 0 = all
  int checkpoint_every = 5000;
  std::filesystem::path checkpoint_path;  // empty: no checkpoints
  int workers = 1;
};

struct TrainLogRow {
  std::int64_t iteration = 0;
  double train_mse = 0.0;
  std::optional<double> valid_mse;
};

struct TrainingLog {
  std::vector<TrainLogRow> rows;

  /// iteration,train_mse,valid_mse with valid_mse blank on non-validation rows.
  void write_csv(const std::filesystem::path& file) const;
};

/// Optimizer steps over HSV videos of total_frames frames.
///
/// Each step draws batch_size videos (with replacement, order derived from
/// seed and step), averages their sequence losses, and applies Adam. Per-sample
/// gradients are reduced in batch order, so results do not depend on workers.
TrainingLog train(PredictorModel& model, nn::AdamState& optimizer, std::span<const Video> train_set,
                  std::span<const Video> valid_set, const TrainConfig& cfg);

/// Loads the manifest's train and valid records (converted to HSV) and trains.
TrainingLog train(PredictorModel& model, nn::AdamState& optimizer, const DatasetManifest& manifest,
                  const TrainConfig& cfg);

/// Mean sequence loss over a set of HSV videos.
double evaluate_loss(const PredictorModel& model, std::span<const Video> videos, int workers = 1);

struct Checkpoint {
  PredictorModel model;
  nn::AdamState optimizer;
  std::int64_t iteration = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const PredictorModel& model, const nn::AdamState& optimizer,
                                            std::int64_t iteration);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& file, const PredictorModel& model, const nn::AdamState& optimizer,
                     std::int64_t iteration);
Checkpoint load_checkpoint(const std::filesystem::path& file);

/// Loads the checkpoint and predicts from exactly input_frames frames (RGB or
/// HSV, sized per the config). Returns the predicted frames in RGB.
Video predict(const std::filesystem::path& checkpoint, const Video& input);
Video predict(const PredictorModel& model, const Video& input);

}  // namespace wellcast
