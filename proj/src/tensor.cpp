#include "wellcast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>

#include "wellcast/error.hpp"

namespace wellcast::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::vector<double>& grad_of(detail::TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.value.size(), 0.0);
  return t.grad;
}

bool is_scalar(const Tensor& t) { return t.numel() == 1; }

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->defined() && t->requires_grad(); });
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw Error(ErrorKind::InvalidArgument, std::string(op) + ": undefined tensor");
}

inline double stable_sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::size_t numel(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = nn::numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (nn::numel(shape) != values.size()) {
    throw Error(ErrorKind::ShapeMismatch,
                "shape " + to_string(shape) + " needs " + std::to_string(nn::numel(shape)) + " values, got " +
                    std::to_string(values.size()));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NumericOverflow, "non-finite tensor value");
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->value = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

std::span<double> Tensor::mutable_grad() { return grad_of(*impl_); }

void Tensor::zero_grad() noexcept { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

double Tensor::item() const {
  if (numel() != 1) throw Error(ErrorKind::NotScalar, "item() on tensor of shape " + to_string(shape()));
  return impl_->value[0];
}

Tensor Tensor::clone(bool requires_grad) const { return from(impl_->shape, impl_->value, requires_grad); }

template <class Backward>
Tensor Tape::record(Shape shape, std::vector<double> value, bool requires_grad, Backward&& backward, const char* op) {
  for (double v : value) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NumericOverflow, std::string(op) + " produced a non-finite value");
  }
  auto out = std::make_shared<Impl>();
  out->shape = std::move(shape);
  out->value = std::move(value);
  out->requires_grad = requires_grad && recording_;
  if (out->requires_grad) {
    nodes_.push_back([out_ptr = out.get(), keep = out, bw = std::forward<Backward>(backward)] {
      if (!out_ptr->grad.empty()) bw(*out_ptr);
    });
  }
  return Tensor(std::move(out));
}

Tensor Tape::binary(const Tensor& a, const Tensor& b, int kind) {
  static constexpr const char* names[] = {"add", "sub", "mul"};
  require_defined(a, names[kind]);
  require_defined(b, names[kind]);
  const bool same = a.shape() == b.shape();
  if (!same && !is_scalar(a) && !is_scalar(b)) {
    throw Error(ErrorKind::ShapeMismatch,
                std::string(names[kind]) + ": " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const bool a_bcast = !same && is_scalar(a);
  const bool b_bcast = !same && !a_bcast && is_scalar(b);
  const Shape shape = a_bcast ? b.shape() : a.shape();
  const std::size_t n = nn::numel(shape);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[a_bcast ? 0 : i];
    const double y = bv[b_bcast ? 0 : i];
    out[i] = kind == 0 ? x + y : kind == 1 ? x - y : x * y;
  }
  ImplPtr ai = a.impl_, bi = b.impl_;
  return record(
      shape, std::move(out), any_requires_grad({&a, &b}),
      [ai, bi, a_bcast, b_bcast, kind, n](Impl& o) {
        const auto& g = o.grad;
        if (ai->requires_grad) {
          auto& ga = grad_of(*ai);
          for (std::size_t i = 0; i < n; ++i) {
            const double d = kind == 2 ? g[i] * bi->value[b_bcast ? 0 : i] : g[i];
            ga[a_bcast ? 0 : i] += d;
          }
        }
        if (bi->requires_grad) {
          auto& gb = grad_of(*bi);
          for (std::size_t i = 0; i < n; ++i) {
            const double d = kind == 0 ? g[i] : kind == 1 ? -g[i] : g[i] * ai->value[a_bcast ? 0 : i];
            gb[b_bcast ? 0 : i] += d;
          }
        }
      },
      names[kind]);
}

Tensor Tape::add(const Tensor& a, const Tensor& b) { return binary(a, b, 0); }
Tensor Tape::sub(const Tensor& a, const Tensor& b) { return binary(a, b, 1); }
Tensor Tape::mul(const Tensor& a, const Tensor& b) { return binary(a, b, 2); }

Tensor Tape::scale(const Tensor& a, double factor) {
  require_defined(a, "scale");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  ImplPtr ai = a.impl_;
  return record(
      a.shape(), std::move(out), any_requires_grad({&a}),
      [ai, factor](Impl& o) {
        auto& ga = grad_of(*ai);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * o.grad[i];
      },
      "scale");
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0)) {
    throw Error(ErrorKind::ShapeMismatch, "matmul: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  MapMat(out.data(), m, n).noalias() = ConstMapMat(a.data().data(), m, k) * ConstMapMat(b.data().data(), k, n);
  ImplPtr ai = a.impl_, bi = b.impl_;
  return record(
      {a.dim(0), b.dim(1)}, std::move(out), any_requires_grad({&a, &b}),
      [ai, bi, m, k, n](Impl& o) {
        const ConstMapMat g(o.grad.data(), m, n);
        if (ai->requires_grad) {
          MapMat(grad_of(*ai).data(), m, k).noalias() += g * ConstMapMat(bi->value.data(), k, n).transpose();
        }
        if (bi->requires_grad) {
          MapMat(grad_of(*bi).data(), k, n).noalias() += ConstMapMat(ai->value.data(), m, k).transpose() * g;
        }
      },
      "matmul");
}

Tensor Tape::conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  require_defined(x, "conv2d");
  require_defined(kernel, "conv2d");
  const auto& xs = x.shape();
  const auto& ks = kernel.shape();
  if (xs.size() != 3 || ks.size() != 4 || ks[1] != xs[0] || ks[2] != ks[3] || ks[2] % 2 == 0) {
    throw Error(ErrorKind::ShapeMismatch, "conv2d: input " + to_string(xs) + ", kernel " + to_string(ks));
  }
  if (bias.defined() && (bias.shape().size() != 1 || bias.dim(0) != ks[0])) {
    throw Error(ErrorKind::ShapeMismatch, "conv2d: bias " + to_string(bias.shape()) + " for kernel " + to_string(ks));
  }
  const int channels = static_cast<int>(xs[0]), height = static_cast<int>(xs[1]), width = static_cast<int>(xs[2]);
  const int outc = static_cast<int>(ks[0]), k = static_cast<int>(ks[2]), pad = k / 2;
  const Eigen::Index hw = height * width;
  const Eigen::Index ckk = static_cast<Eigen::Index>(channels) * k * k;

  // im2col: row (c, ki, kj), column (y, x) holds x[c, y + ki - pad, x + kj - pad] or 0.
  std::vector<double> cols;
  if (k == 1) {
    cols.assign(x.data().begin(), x.data().end());
  } else {
    cols.assign(static_cast<std::size_t>(ckk * hw), 0.0);
    const double* src = x.data().data();
    for (int c = 0; c < channels; ++c) {
      for (int ki = 0; ki < k; ++ki) {
        for (int kj = 0; kj < k; ++kj) {
          double* row = cols.data() + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * hw;
          for (int y = 0; y < height; ++y) {
            const int sy = y + ki - pad;
            if (sy < 0 || sy >= height) continue;
            const int x0 = std::max(0, pad - kj), x1 = std::min(width, width + pad - kj);
            const double* srow = src + (static_cast<std::size_t>(c) * height + sy) * width + (kj - pad);
            std::copy(srow + x0, srow + x1, row + static_cast<std::size_t>(y) * width + x0);
          }
        }
      }
    }
  }

  std::vector<double> out(static_cast<std::size_t>(outc * hw));
  MapMat out_m(out.data(), outc, hw);
  out_m.noalias() = ConstMapMat(kernel.data().data(), outc, ckk) * ConstMapMat(cols.data(), ckk, hw);
  if (bias.defined()) {
    for (int o = 0; o < outc; ++o) out_m.row(o).array() += bias.data()[static_cast<std::size_t>(o)];
  }

  ImplPtr xi = x.impl_, ki_ptr = kernel.impl_, bi = bias.impl_;
  return record(
      {ks[0], xs[1], xs[2]}, std::move(out), any_requires_grad({&x, &kernel, &bias}),
      [xi, ki_ptr, bi, cols = std::move(cols), channels, height, width, outc, k, pad, hw, ckk](Impl& o) {
        const ConstMapMat g(o.grad.data(), outc, hw);
        if (ki_ptr->requires_grad) {
          MapMat(grad_of(*ki_ptr).data(), outc, ckk).noalias() += g * ConstMapMat(cols.data(), ckk, hw).transpose();
        }
        if (bi && bi->requires_grad) {
          auto& gb = grad_of(*bi);
          for (int c = 0; c < outc; ++c) {
            double acc = 0.0;
            for (Eigen::Index j = 0; j < hw; ++j) acc += g(c, j);
            gb[static_cast<std::size_t>(c)] += acc;
          }
        }
        if (xi->requires_grad) {
          auto& gx = grad_of(*xi);
          if (k == 1) {
            MapMat(gx.data(), ckk, hw).noalias() += ConstMapMat(ki_ptr->value.data(), outc, ckk).transpose() * g;
            return;
          }
          RowMat dcols = ConstMapMat(ki_ptr->value.data(), outc, ckk).transpose() * g;
          for (int c = 0; c < channels; ++c) {
            for (int ki = 0; ki < k; ++ki) {
              for (int kj = 0; kj < k; ++kj) {
                const double* row = dcols.data() + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * hw;
                for (int y = 0; y < height; ++y) {
                  const int sy = y + ki - pad;
                  if (sy < 0 || sy >= height) continue;
                  const int x0 = std::max(0, pad - kj), x1 = std::min(width, width + pad - kj);
                  double* drow = gx.data() + (static_cast<std::size_t>(c) * height + sy) * width + (kj - pad);
                  const double* crow = row + static_cast<std::size_t>(y) * width;
                  for (int xx = x0; xx < x1; ++xx) drow[xx] += crow[xx];
                }
              }
            }
          }
        }
      },
      "conv2d");
}

Tensor Tape::sigmoid(const Tensor& a) {
  require_defined(a, "sigmoid");
  std::vector<double> out(a.numel());
  std::transform(a.data().begin(), a.data().end(), out.begin(), stable_sigmoid);
  ImplPtr ai = a.impl_;
  return record(
      a.shape(), std::move(out), any_requires_grad({&a}),
      [ai](Impl& o) {
        auto& ga = grad_of(*ai);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * o.value[i] * (1.0 - o.value[i]);
      },
      "sigmoid");
}

Tensor Tape::tanh(const Tensor& a) {
  require_defined(a, "tanh");
  std::vector<double> out(a.numel());
  std::transform(a.data().begin(), a.data().end(), out.begin(), [](double v) { return std::tanh(v); });
  ImplPtr ai = a.impl_;
  return record(
      a.shape(), std::move(out), any_requires_grad({&a}),
      [ai](Impl& o) {
        auto& ga = grad_of(*ai);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * (1.0 - o.value[i] * o.value[i]);
      },
      "tanh");
}

Tensor Tape::concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error(ErrorKind::InvalidArgument, "concat: no inputs");
  for (const auto& p : parts) require_defined(p, "concat");
  Shape shape = parts[0].shape();
  if (shape.empty()) throw Error(ErrorKind::ShapeMismatch, "concat: scalar input");
  shape[0] = 0;
  for (const auto& p : parts) {
    if (p.shape().size() != shape.size() || !std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1)) {
      throw Error(ErrorKind::ShapeMismatch, "concat: " + to_string(p.shape()) + " vs " + to_string(parts[0].shape()));
    }
    shape[0] += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(nn::numel(shape));
  std::vector<ImplPtr> impls;
  bool any_grad = false;
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    impls.push_back(p.impl_);
    any_grad = any_grad || p.requires_grad();
  }
  return record(
      shape, std::move(out), any_grad,
      [impls](Impl& o) {
        std::size_t offset = 0;
        for (const auto& in : impls) {
          const std::size_t n = in->value.size();
          if (in->requires_grad) {
            auto& g = grad_of(*in);
            for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[offset + i];
          }
          offset += n;
        }
      },
      "concat");
}

Tensor Tape::slice(const Tensor& a, std::size_t begin, std::size_t end) {
  require_defined(a, "slice");
  if (a.shape().empty() || begin >= end || end > a.dim(0)) {
    throw Error(ErrorKind::ShapeMismatch, "slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                                              ") of " + to_string(a.shape()));
  }
  Shape shape = a.shape();
  shape[0] = end - begin;
  const std::size_t inner = a.numel() / a.dim(0);
  const std::size_t offset = begin * inner;
  const std::size_t n = (end - begin) * inner;
  std::vector<double> out(a.data().begin() + static_cast<std::ptrdiff_t>(offset),
                          a.data().begin() + static_cast<std::ptrdiff_t>(offset + n));
  ImplPtr ai = a.impl_;
  return record(
      shape, std::move(out), any_requires_grad({&a}),
      [ai, offset, n](Impl& o) {
        auto& ga = grad_of(*ai);
        for (std::size_t i = 0; i < n; ++i) ga[offset + i] += o.grad[i];
      },
      "slice");
}

Tensor Tape::sum(const Tensor& a) {
  require_defined(a, "sum");
  const double total = std::accumulate(a.data().begin(), a.data().end(), 0.0);
  ImplPtr ai = a.impl_;
  return record(
      {}, {total}, a.requires_grad(),
      [ai](Impl& o) {
        auto& ga = grad_of(*ai);
        for (double& g : ga) g += o.grad[0];
      },
      "sum");
}

Tensor Tape::mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor Tape::mse_loss(const Tensor& prediction, const Tensor& target) {
  require_defined(prediction, "mse_loss");
  require_defined(target, "mse_loss");
  if (prediction.shape() != target.shape()) {
    throw Error(ErrorKind::ShapeMismatch,
                "mse_loss: " + to_string(prediction.shape()) + " vs " + to_string(target.shape()));
  }
  const std::size_t n = prediction.numel();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = prediction.data()[i] - target.data()[i];
    total += d * d;
  }
  ImplPtr pi = prediction.impl_, ti = target.impl_;
  return record(
      {}, {total / static_cast<double>(n)}, any_requires_grad({&prediction, &target}),
      [pi, ti, n](Impl& o) {
        const double c = 2.0 * o.grad[0] / static_cast<double>(n);
        if (pi->requires_grad) {
          auto& gp = grad_of(*pi);
          for (std::size_t i = 0; i < n; ++i) gp[i] += c * (pi->value[i] - ti->value[i]);
        }
        if (ti->requires_grad) {
          auto& gt = grad_of(*ti);
          for (std::size_t i = 0; i < n; ++i) gt[i] -= c * (pi->value[i] - ti->value[i]);
        }
      },
      "mse_loss");
}

void Tape::backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.numel() != 1) throw Error(ErrorKind::NotScalar, "backward on tensor of shape " + to_string(loss.shape()));
  if (!loss.requires_grad()) return;
  grad_of(*loss.impl_)[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (state.step < 0) throw Error(ErrorKind::InvalidArgument, "adam step must be >= 0");
  if (state.first_moment.empty() && state.second_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.numel(), 0.0);
      state.second_moment.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw Error(ErrorKind::ShapeMismatch, "adam state holds " + std::to_string(state.first_moment.size()) +
                                              " buffers for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].numel() || state.second_moment[i].size() != params[i].numel()) {
      throw Error(ErrorKind::ShapeMismatch, "adam moment buffer " + std::to_string(i) + " does not match parameter");
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].mutable_data();
    const auto grad = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      values[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

}  // namespace wellcast::nn
