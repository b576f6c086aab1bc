#include "wellcast/predictor.hpp"

#include <cmath>
#include <random>

#include "json.hpp"

#include "wellcast/error.hpp"

namespace wellcast {

using nn::Tape;
using nn::Tensor;

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::ConfigError, what); };
  if (num_layers < 1) fail("num_layers must be >= 1");
  if (hidden_channels < 1) fail("hidden_channels must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) fail("kernel_size must be a positive odd integer");
  if (patch_size < 1) fail("patch_size must be >= 1");
  if (in_channels != 3) fail("in_channels must be 3");
  if (frame_size < 1 || frame_size % patch_size != 0) fail("frame_size must be a positive multiple of patch_size");
  if (input_frames < 1 || total_frames <= input_frames) fail("need total_frames > input_frames >= 1");
}

std::string ModelConfig::to_json() const {
  const nlohmann::json j = {{"num_layers", num_layers},   {"hidden_channels", hidden_channels},
                            {"kernel_size", kernel_size}, {"patch_size", patch_size},
                            {"input_frames", input_frames}, {"total_frames", total_frames},
                            {"in_channels", in_channels}, {"frame_size", frame_size}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.num_layers = j.at("num_layers").get<int>();
    c.hidden_channels = j.at("hidden_channels").get<int>();
    c.kernel_size = j.at("kernel_size").get<int>();
    c.patch_size = j.at("patch_size").get<int>();
    c.input_frames = j.at("input_frames").get<int>();
    c.total_frames = j.at("total_frames").get<int>();
    c.in_channels = j.at("in_channels").get<int>();
    c.frame_size = j.at("frame_size").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

Tensor patchify(const Frame& frame, int patch_size) {
  const int p = patch_size;
  if (p < 1 || frame.height() % p != 0 || frame.width() % p != 0) {
    throw Error(ErrorKind::ShapeMismatch, std::to_string(frame.height()) + "x" + std::to_string(frame.width()) +
                                              " frame is not divisible by patch size " + std::to_string(p));
  }
  const int gh = frame.height() / p, gw = frame.width() / p, channels = p * p * Frame::kChannels;
  std::vector<double> out(frame.data().size());
  for (int py = 0; py < p; ++py) {
    for (int px = 0; px < p; ++px) {
      for (int c = 0; c < Frame::kChannels; ++c) {
        const std::size_t ch = static_cast<std::size_t>((py * p + px) * Frame::kChannels + c);
        for (int i = 0; i < gh; ++i) {
          for (int j = 0; j < gw; ++j) {
            out[(ch * gh + i) * gw + j] = frame.at(i * p + py, j * p + px, c);
          }
        }
      }
    }
  }
  return Tensor::from({static_cast<std::size_t>(channels), static_cast<std::size_t>(gh), static_cast<std::size_t>(gw)},
                      std::move(out));
}

Frame unpatchify(const Tensor& tensor, int patch_size, ColorSpace space) {
  const int p = patch_size;
  const auto& s = tensor.shape();
  if (p < 1 || s.size() != 3 || s[0] != static_cast<std::size_t>(p * p * Frame::kChannels)) {
    throw Error(ErrorKind::ShapeMismatch, "cannot unpatchify " + nn::to_string(s) + " with patch size " +
                                              std::to_string(p));
  }
  const int gh = static_cast<int>(s[1]), gw = static_cast<int>(s[2]);
  const int h = gh * p, w = gw * p;
  std::vector<double> out(tensor.numel());
  const auto in = tensor.data();
  for (int py = 0; py < p; ++py) {
    for (int px = 0; px < p; ++px) {
      for (int c = 0; c < Frame::kChannels; ++c) {
        const std::size_t ch = static_cast<std::size_t>((py * p + px) * Frame::kChannels + c);
        for (int i = 0; i < gh; ++i) {
          for (int j = 0; j < gw; ++j) {
            out[(static_cast<std::size_t>(i * p + py) * w + static_cast<std::size_t>(j * p + px)) * 3 +
                static_cast<std::size_t>(c)] = in[(ch * gh + i) * gw + j];
          }
        }
      }
    }
  }
  return Frame(h, w, space, std::move(out));
}

STCellState st_cell_forward(Tape& tape, const CellParams& params, const Tensor& x, const STCellState& prev,
                            const Tensor& memory) {
  const std::size_t h = params.conv_h.dim(1);
  if (prev.hidden.shape() != prev.cell.shape() || prev.hidden.shape() != memory.shape() || prev.hidden.dim(0) != h) {
    throw Error(ErrorKind::ShapeMismatch, "cell state shapes " + nn::to_string(prev.hidden.shape()) + ", " +
                                              nn::to_string(prev.cell.shape()) + ", " +
                                              nn::to_string(memory.shape()));
  }
  if (x.shape().size() != 3 || x.dim(1) != memory.dim(1) || x.dim(2) != memory.dim(2)) {
    throw Error(ErrorKind::ShapeMismatch, "cell input " + nn::to_string(x.shape()) + " vs state " +
                                              nn::to_string(memory.shape()));
  }
  const Tensor xc = tape.conv2d(x, params.conv_x, params.bias_x);
  const Tensor hc = tape.conv2d(prev.hidden, params.conv_h);
  const Tensor mc = tape.conv2d(memory, params.conv_m);
  auto gate = [&](const Tensor& t, std::size_t k) { return tape.slice(t, k * h, (k + 1) * h); };

  const Tensor i_t = tape.sigmoid(tape.add(gate(xc, 0), gate(hc, 0)));
  const Tensor f_t = tape.sigmoid(tape.add(gate(xc, 1), gate(hc, 1)));
  const Tensor g_t = tape.tanh(tape.add(gate(xc, 2), gate(hc, 2)));
  const Tensor c_new = tape.add(tape.mul(f_t, prev.cell), tape.mul(i_t, g_t));

  const Tensor i_m = tape.sigmoid(tape.add(gate(xc, 3), gate(mc, 0)));
  const Tensor f_m = tape.sigmoid(tape.add(gate(xc, 4), gate(mc, 1)));
  const Tensor g_m = tape.tanh(tape.add(gate(xc, 5), gate(mc, 2)));
  const Tensor m_new = tape.add(tape.mul(f_m, memory), tape.mul(i_m, g_m));

  const Tensor both[] = {c_new, m_new};
  const Tensor mem = tape.concat(both);
  const Tensor o_t = tape.sigmoid(tape.add(tape.add(gate(xc, 6), gate(hc, 3)), tape.conv2d(mem, params.conv_o)));
  const Tensor h_new = tape.mul(o_t, tape.tanh(tape.conv2d(mem, params.conv_last)));
  return {h_new, c_new, m_new};
}

std::vector<std::pair<std::string, nn::Shape>> PredictorModel::layout(const ModelConfig& config) {
  config.validate();
  const auto hid = static_cast<std::size_t>(config.hidden_channels);
  const auto k = static_cast<std::size_t>(config.kernel_size);
  std::vector<std::pair<std::string, nn::Shape>> out;
  for (int l = 0; l < config.num_layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    const std::size_t in = l == 0 ? static_cast<std::size_t>(config.patch_channels()) : hid;
    out.emplace_back(prefix + "conv_x", nn::Shape{7 * hid, in, k, k});
    out.emplace_back(prefix + "bias_x", nn::Shape{7 * hid});
    out.emplace_back(prefix + "conv_h", nn::Shape{4 * hid, hid, k, k});
    out.emplace_back(prefix + "conv_m", nn::Shape{3 * hid, hid, k, k});
    out.emplace_back(prefix + "conv_o", nn::Shape{hid, 2 * hid, k, k});
    out.emplace_back(prefix + "conv_last", nn::Shape{hid, 2 * hid, 1, 1});
  }
  out.emplace_back("head.weight", nn::Shape{static_cast<std::size_t>(config.patch_channels()), hid, 1, 1});
  out.emplace_back("head.bias", nn::Shape{static_cast<std::size_t>(config.patch_channels())});
  return out;
}

PredictorModel::PredictorModel(ModelConfig config, std::uint64_t seed) : config_(config) {
  std::mt19937_64 rng(seed);
  for (auto& [name, shape] : layout(config_)) {
    std::vector<double> values(nn::numel(shape), 0.0);
    if (shape.size() == 4) {
      const double bound = std::sqrt(1.0 / static_cast<double>(shape[1] * shape[2] * shape[3]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : values) v = dist(rng);
    }
    names_.push_back(name);
    params_.push_back(Tensor::from(shape, std::move(values), true));
  }
}

PredictorModel::PredictorModel(ModelConfig config, std::vector<std::string> names, std::vector<Tensor> params)
    : config_(config), names_(std::move(names)), params_(std::move(params)) {
  const auto expected = layout(config_);
  if (names_.size() != expected.size() || params_.size() != expected.size()) {
    throw Error(ErrorKind::ConfigMismatch, "expected " + std::to_string(expected.size()) + " parameters, got " +
                                               std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (names_[i] != expected[i].first || params_[i].shape() != expected[i].second) {
      throw Error(ErrorKind::ConfigMismatch, "parameter " + std::to_string(i) + " is " + names_[i] + " " +
                                                 nn::to_string(params_[i].shape()) + ", expected " +
                                                 expected[i].first + " " + nn::to_string(expected[i].second));
    }
    if (!params_[i].requires_grad()) params_[i] = params_[i].clone(true);
  }
}

std::size_t PredictorModel::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

CellParams PredictorModel::cell(int layer) const {
  const std::size_t base = static_cast<std::size_t>(layer) * 6;
  return {params_[base], params_[base + 1], params_[base + 2], params_[base + 3], params_[base + 4], params_[base + 5]};
}

PredictorModel PredictorModel::clone() const {
  std::vector<Tensor> copies;
  copies.reserve(params_.size());
  for (const auto& p : params_) copies.push_back(p.clone(true));
  return PredictorModel(config_, names_, std::move(copies));
}

void PredictorModel::copy_values_from(const PredictorModel& other) {
  if (other.config_ != config_) throw Error(ErrorKind::ConfigMismatch, "copy between different model configs");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto src = other.params_[i].data();
    std::copy(src.begin(), src.end(), params_[i].mutable_data().begin());
  }
}

void PredictorModel::zero_grad() noexcept {
  for (auto& p : params_) p.zero_grad();
}

std::vector<Tensor> forward_sequence(Tape& tape, const PredictorModel& model, std::span<const Tensor> frames,
                                     SequenceMode mode) {
  const ModelConfig& cfg = model.config();
  const auto expected_frames =
      static_cast<std::size_t>(mode == SequenceMode::Training ? cfg.total_frames : cfg.input_frames);
  if (frames.size() != expected_frames) {
    throw Error(ErrorKind::ShapeMismatch, "sequence has " + std::to_string(frames.size()) + " frames, expected " +
                                              std::to_string(expected_frames));
  }
  const auto grid = static_cast<std::size_t>(cfg.grid_size());
  const nn::Shape frame_shape{static_cast<std::size_t>(cfg.patch_channels()), grid, grid};
  for (const auto& f : frames) {
    if (f.shape() != frame_shape) {
      throw Error(ErrorKind::ShapeMismatch, "frame tensor " + nn::to_string(f.shape()) + ", expected " +
                                                nn::to_string(frame_shape));
    }
  }

  const nn::Shape state_shape{static_cast<std::size_t>(cfg.hidden_channels), grid, grid};
  const auto layers = static_cast<std::size_t>(cfg.num_layers);
  std::vector<STCellState> state(layers, STCellState{Tensor::zeros(state_shape), Tensor::zeros(state_shape), {}});
  std::vector<CellParams> cells;
  for (int l = 0; l < cfg.num_layers; ++l) cells.push_back(model.cell(l));
  // The spatiotemporal memory climbs the stack within a step and wraps from
  // the top layer back to the bottom at the next step.
  Tensor memory = Tensor::zeros(state_shape);

  std::vector<Tensor> predictions;
  predictions.reserve(static_cast<std::size_t>(cfg.predicted_frames()));
  Tensor generated;
  for (int t = 0; t < cfg.total_frames - 1; ++t) {
    Tensor input = t < cfg.input_frames ? frames[static_cast<std::size_t>(t)] : generated;
    for (std::size_t l = 0; l < layers; ++l) {
      STCellState next = st_cell_forward(tape, cells[l], l == 0 ? input : state[l - 1].hidden, state[l], memory);
      memory = next.memory;
      state[l] = std::move(next);
    }
    if (t >= cfg.input_frames - 1) {
      generated = tape.sigmoid(tape.conv2d(state.back().hidden, model.head_weight(), model.head_bias()));
      predictions.push_back(generated);
    }
  }
  return predictions;
}

namespace {

std::vector<Tensor> patchify_video(const Video& video, const ModelConfig& cfg) {
  if (video.space() != ColorSpace::HSV) throw Error(ErrorKind::WrongColorSpace, "predictor expects HSV frames");
  if (video.height() != cfg.frame_size || video.width() != cfg.frame_size) {
    throw Error(ErrorKind::ShapeMismatch, "frames are " + std::to_string(video.height()) + "x" +
                                              std::to_string(video.width()) + ", model expects " +
                                              std::to_string(cfg.frame_size));
  }
  std::vector<Tensor> out;
  out.reserve(video.size());
  for (const Frame& f : video.frames()) out.push_back(patchify(f, cfg.patch_size));
  return out;
}

}  // namespace

Video forward_sequence(const PredictorModel& model, const Video& video, SequenceMode mode) {
  const auto frames = patchify_video(video, model.config());
  Tape tape(false);
  const auto predictions = forward_sequence(tape, model, frames, mode);
  std::vector<Frame> out;
  out.reserve(predictions.size());
  for (const auto& p : predictions) out.push_back(unpatchify(p, model.config().patch_size, ColorSpace::HSV));
  return Video(std::move(out), video.frame_interval_minutes());
}

Tensor sequence_loss(Tape& tape, const PredictorModel& model, std::span<const Tensor> frames) {
  const auto predictions = forward_sequence(tape, model, frames, SequenceMode::Training);
  const auto first = static_cast<std::size_t>(model.config().input_frames);
  Tensor total;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const Tensor term = tape.mse_loss(predictions[k], frames[first + k]);
    total = total.defined() ? tape.add(total, term) : term;
  }
  return tape.scale(total, 1.0 / static_cast<double>(predictions.size()));
}

Video predict(const PredictorModel& model, const Video& input) {
  const ModelConfig& cfg = model.config();
  if (input.size() != static_cast<std::size_t>(cfg.input_frames)) {
    throw Error(ErrorKind::ConfigMismatch, "input has " + std::to_string(input.size()) + " frames, model expects " +
                                               std::to_string(cfg.input_frames));
  }
  if (input.height() != cfg.frame_size || input.width() != cfg.frame_size) {
    throw Error(ErrorKind::ConfigMismatch, "input frames are " + std::to_string(input.height()) + "x" +
                                               std::to_string(input.width()) + ", model expects " +
                                               std::to_string(cfg.frame_size));
  }
  return to_rgb(forward_sequence(model, to_hsv(input), SequenceMode::Inference));
}

Video predict(const std::filesystem::path& checkpoint, const Video& input) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  return predict(ckpt.model, input);
}

}  // namespace wellcast
