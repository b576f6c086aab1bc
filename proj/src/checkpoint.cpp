#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "wellcast/error.hpp"
#include "wellcast/predictor.hpp"

namespace wellcast {

using nn::Shape;
using nn::Tensor;

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'W', 'C', 'K', 'P'};
constexpr std::uint8_t kFloat64 = 1;

class Writer {
 public:
  template <class T>
  void pod(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void array(const std::string& name, const Shape& shape, std::span<const double> values) {
    str(name);
    pod(kFloat64);
    pod(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) pod(static_cast<std::uint64_t>(d));
    raw(values.data(), values.size() * sizeof(double));
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorKind::BadCheckpoint, "checkpoint is truncated");
  }
  template <class T>
  T pod() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  struct Array {
    std::string name;
    Shape shape;
    std::vector<double> values;
  };
  Array array() {
    Array a;
    a.name = str();
    if (pod<std::uint8_t>() != kFloat64) throw Error(ErrorKind::BadCheckpoint, "unsupported dtype for " + a.name);
    const auto rank = pod<std::uint32_t>();
    if (rank > 8) throw Error(ErrorKind::BadCheckpoint, "implausible rank for " + a.name);
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = pod<std::uint64_t>();
      if (d != 0 && count > (bytes_.size() / sizeof(double)) / d + 1) {
        throw Error(ErrorKind::BadCheckpoint, "checkpoint is truncated");
      }
      count *= d;
      a.shape.push_back(static_cast<std::size_t>(d));
    }
    if (count > (bytes_.size() - pos_) / sizeof(double)) throw Error(ErrorKind::BadCheckpoint, "checkpoint is truncated");
    a.values.resize(static_cast<std::size_t>(count));
    std::memcpy(a.values.data(), bytes_.data() + pos_, count * sizeof(double));
    pos_ += count * sizeof(double);
    return a;
  }
  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

double scalar_entry(const Reader::Array& a, const char* name) {
  if (a.name != name || !a.shape.empty() || a.values.size() != 1) {
    throw Error(ErrorKind::BadCheckpoint, std::string("expected scalar optimizer entry '") + name + "', found '" +
                                              a.name + "'");
  }
  return a.values[0];
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const PredictorModel& model, const nn::AdamState& optimizer,
                                            std::int64_t iteration) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.pod(kCheckpointVersion);
  w.str(model.config().to_json());
  w.pod(static_cast<std::uint64_t>(iteration));

  const auto params = model.parameters();
  const auto& names = model.parameter_names();
  w.pod(static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) w.array(names[i], params[i].shape(), params[i].data());

  const bool has_moments = !optimizer.first_moment.empty();
  if (has_moments && (optimizer.first_moment.size() != params.size() || optimizer.second_moment.size() != params.size())) {
    throw Error(ErrorKind::ShapeMismatch, "optimizer moments do not match the model's parameters");
  }
  w.pod(static_cast<std::uint32_t>(5 + (has_moments ? 2 * params.size() : 0)));
  const auto scalar = [&](const char* name, double v) { w.array(name, {}, std::span<const double>(&v, 1)); };
  scalar("step", static_cast<double>(optimizer.step));
  scalar("learning_rate", optimizer.learning_rate);
  scalar("beta1", optimizer.beta1);
  scalar("beta2", optimizer.beta2);
  scalar("epsilon", optimizer.epsilon);
  if (has_moments) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      w.array("m/" + names[i], params[i].shape(), optimizer.first_moment[i]);
      w.array("v/" + names[i], params[i].shape(), optimizer.second_moment[i]);
    }
  }
  return std::move(w.bytes);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(sizeof kMagic);
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw Error(ErrorKind::BadCheckpoint, "bad magic");
  r.pod<std::uint32_t>();
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::BadCheckpoint, "unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig config;
  try {
    config = ModelConfig::from_json(r.str());
  } catch (const Error& e) {
    throw Error(ErrorKind::BadCheckpoint, std::string("invalid model config: ") + e.what());
  }
  const auto iteration = static_cast<std::int64_t>(r.pod<std::uint64_t>());

  const auto n_params = r.pod<std::uint32_t>();
  std::vector<std::string> names;
  std::vector<Tensor> params;
  for (std::uint32_t i = 0; i < n_params; ++i) {
    auto a = r.array();
    names.push_back(std::move(a.name));
    params.push_back(Tensor::from(std::move(a.shape), std::move(a.values), true));
  }

  nn::AdamState opt;
  const auto n_opt = r.pod<std::uint32_t>();
  if (n_opt != 5 && n_opt != 5 + 2 * n_params) throw Error(ErrorKind::BadCheckpoint, "unexpected optimizer table size");
  const double step = scalar_entry(r.array(), "step");
  opt.step = static_cast<std::int64_t>(step);
  opt.learning_rate = scalar_entry(r.array(), "learning_rate");
  opt.beta1 = scalar_entry(r.array(), "beta1");
  opt.beta2 = scalar_entry(r.array(), "beta2");
  opt.epsilon = scalar_entry(r.array(), "epsilon");
  if (n_opt > 5) {
    for (std::uint32_t i = 0; i < n_params; ++i) {
      auto m = r.array();
      auto v = r.array();
      if (m.name != "m/" + names[i] || v.name != "v/" + names[i] || m.shape != params[i].shape() ||
          v.shape != params[i].shape()) {
        throw Error(ErrorKind::BadCheckpoint, "optimizer moments do not match parameter '" + names[i] + "'");
      }
      opt.first_moment.push_back(std::move(m.values));
      opt.second_moment.push_back(std::move(v.values));
    }
  }
  if (!r.done()) throw Error(ErrorKind::BadCheckpoint, "trailing bytes after checkpoint");

  try {
    return Checkpoint{PredictorModel(config, std::move(names), std::move(params)), std::move(opt), iteration};
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::ConfigMismatch) throw;
    throw Error(ErrorKind::BadCheckpoint, e.what());
  }
}

void save_checkpoint(const std::filesystem::path& file, const PredictorModel& model, const nn::AdamState& optimizer,
                     std::int64_t iteration) {
  const auto bytes = encode_checkpoint(model, optimizer, iteration);
  std::error_code ec;
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path(), ec);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + file.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "failed writing " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, "checkpoint " + file.string() + " not found");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace wellcast
