#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <random>
#include <vector>

#include "wellcast/metrics.hpp"
#include "wellcast/tensor.hpp"
#include "wellcast/video.hpp"

namespace wellcast::testkit {

inline nn::Tensor random_tensor(std::mt19937_64& rng, nn::Shape shape, double lo = -1.0, double hi = 1.0,
                                bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(nn::numel(shape));
  for (double& x : v) x = u(rng);
  return nn::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline Frame random_frame(std::mt19937_64& rng, int h, int w, ColorSpace space = ColorSpace::RGB) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(h) * w * 3);
  for (double& x : v) x = u(rng);
  return Frame(h, w, space, std::move(v));
}

inline Video random_video(std::mt19937_64& rng, int frames, int h, int w, ColorSpace space = ColorSpace::RGB) {
  std::vector<Frame> out;
  for (int i = 0; i < frames; ++i) out.push_back(random_frame(rng, h, w, space));
  return Video(std::move(out));
}

// Random 8-bit-representable frame, so PNG round trips are exact.
inline Frame random_byte_frame(std::mt19937_64& rng, int h, int w) {
  std::uniform_int_distribution<int> u(0, 255);
  std::vector<double> v(static_cast<std::size_t>(h) * w * 3);
  for (double& x : v) x = u(rng) / 255.0;
  return Frame(h, w, ColorSpace::RGB, std::move(v));
}

/// Largest relative error between the taped gradient of `loss_of` and central
/// differences, over every element of every input. Error for one input is
/// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8).
inline double gradient_error(std::vector<nn::Tensor>& inputs,
                             const std::function<nn::Tensor(nn::Tape&, const std::vector<nn::Tensor>&)>& loss_of,
                             double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  {
    nn::Tape tape;
    tape.backward(loss_of(tape, inputs));
  }
  double worst = 0.0;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    const std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                      : std::vector<double>(t.numel(), 0.0);
    std::vector<double> numeric(t.numel());
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      nn::Tape up(false);
      const double fp = loss_of(up, inputs).item();
      values[i] = saved - h;
      nn::Tape down(false);
      const double fm = loss_of(down, inputs).item();
      values[i] = saved;
      numeric[i] = (fp - fm) / (2 * h);
    }
    double diff = 0, na = 0, nn_ = 0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn_ += numeric[i] * numeric[i];
    }
    worst = std::max(worst, std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn_), 1e-8}));
  }
  return worst;
}

/// Contracts an arbitrary tensor to a scalar with fixed random weights so every
/// output element influences the loss.
inline nn::Tensor weighted_sum(nn::Tape& tape, const nn::Tensor& t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return tape.sum(tape.mul(t, random_tensor(rng, t.shape(), -1.0, 1.0, false)));
}

// Breadth-first flood fill per species, written independently of the library.
inline std::vector<Colony> flood_fill_oracle(const Frame& f, double threshold, int min_pixels) {
  const int h = f.height(), w = f.width();
  std::vector<int> species(static_cast<std::size_t>(h) * w, 0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double red = f.at(r, c, 0), green = f.at(r, c, 1);
      if (red >= threshold || green >= threshold) species[static_cast<std::size_t>(r) * w + c] = red >= green ? 1 : 2;
    }
  std::vector<bool> seen(species.size(), false);
  std::vector<Colony> out;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const std::size_t start = static_cast<std::size_t>(r) * w + c;
      if (!species[start] || seen[start]) continue;
      std::deque<std::pair<int, int>> queue{{r, c}};
      seen[start] = true;
      int count = 0;
      double rows = 0, cols = 0;
      while (!queue.empty()) {
        auto [y, x] = queue.front();
        queue.pop_front();
        ++count;
        rows += y;
        cols += x;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
            const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
            if (seen[j] || species[j] != species[start]) continue;
            seen[j] = true;
            queue.emplace_back(ny, nx);
          }
      }
      if (count >= min_pixels) {
        out.push_back({species[start] == 1 ? Species::Red : Species::Green, count, rows / count, cols / count});
      }
    }
  std::sort(out.begin(), out.end(), [](const Colony& a, const Colony& b) {
    return std::tie(b.pixel_count, a.centroid_row, a.centroid_col) < std::tie(a.pixel_count, b.centroid_row, b.centroid_col);
  });
  return out;
}

}  // namespace wellcast::testkit
