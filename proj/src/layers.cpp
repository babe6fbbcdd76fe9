#include "patchmil/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "patchmil/error.hpp"
#include "patchmil/simd/kernels.hpp"

namespace patchmil::nn {
namespace {

void require_shape(const Tensor& t, Shape expected, std::string_view who) {
  if (shape_of(t) != expected || t.data.size() != expected.size())
    throw InvalidArgument(std::string(who) + ": unexpected input shape " + std::to_string(t.channels) + "x" +
                          std::to_string(t.height) + "x" + std::to_string(t.width));
}

// Unfolds a (C, H, W) tensor into a (C*k*k, H*W) matrix for stride-1,
// same-padding convolution.
void im2col(const Tensor& in, int k, std::vector<float>& col) {
  const int pad = k / 2;
  const int h = in.height, w = in.width;
  const std::size_t hw = in.plane_size();
  col.assign(static_cast<std::size_t>(in.channels) * k * k * hw, 0.0f);
  for (int c = 0; c < in.channels; ++c) {
    const float* plane = in.data.data() + c * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h || x_hi <= x_lo) continue;
          std::copy(plane + static_cast<std::size_t>(sy) * w + x_lo + dx, plane + static_cast<std::size_t>(sy) * w + x_hi + dx,
                    row + static_cast<std::size_t>(y) * w + x_lo);
        }
      }
    }
  }
}

void col2im_add(const std::vector<float>& col, int k, Tensor& out) {
  const int pad = k / 2;
  const int h = out.height, w = out.width;
  const std::size_t hw = out.plane_size();
  for (int c = 0; c < out.channels; ++c) {
    float* plane = out.data.data() + c * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          for (int x = x_lo; x < x_hi; ++x) plane[static_cast<std::size_t>(sy) * w + x + dx] += row[static_cast<std::size_t>(y) * w + x];
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_channels, int out_channels, int kernel) : in_(in_channels), out_(out_channels), k_(kernel) {
  if (in_ <= 0 || out_ <= 0 || k_ <= 0 || k_ % 2 == 0) throw InvalidArgument("conv2d: invalid geometry");
  params_.emplace_back(static_cast<std::size_t>(out_) * in_ * k_ * k_);
  params_.emplace_back(static_cast<std::size_t>(out_));
}

Shape Conv2d::output_shape(Shape in) const {
  if (in.channels != in_) throw InvalidArgument("conv2d: expected " + std::to_string(in_) + " input channels");
  return {out_, in.height, in.width};
}

void Conv2d::initialize(Rng& rng) {
  const double stddev = std::sqrt(2.0 / (static_cast<double>(in_) * k_ * k_));
  for (float& v : params_[0].value) v = static_cast<float>(normal(rng) * stddev);
  std::fill(params_[1].value.begin(), params_[1].value.end(), 0.0f);
}

void Conv2d::forward(const Tensor& in, Tensor& out) const {
  const Shape os = output_shape(shape_of(in));
  const std::size_t hw = in.plane_size();
  const std::size_t kk = static_cast<std::size_t>(in_) * k_ * k_;
  thread_local std::vector<float> col;
  im2col(in, k_, col);
  out = Tensor(os.height, os.width, os.channels);
  simd::active().gemm(out_, hw, kk, params_[0].value.data(), kk, col.data(), hw, out.data.data(), hw, false);
  for (int o = 0; o < out_; ++o) {
    const float b = params_[1].value[o];
    float* row = out.data.data() + o * hw;
    for (std::size_t i = 0; i < hw; ++i) row[i] += b;
  }
}

void Conv2d::backward(const Tensor& in, const Tensor&, const Tensor& grad_out, Tensor& grad_in) {
  const auto& kern = simd::active();
  const std::size_t hw = in.plane_size();
  const std::size_t kk = static_cast<std::size_t>(in_) * k_ * k_;
  require_shape(grad_out, output_shape(shape_of(in)), "conv2d backward");
  thread_local std::vector<float> col;
  im2col(in, k_, col);
  if (trainable) {
    float* dw = params_[0].grad.data();
    for (int o = 0; o < out_; ++o) {
      const float* g = grad_out.data.data() + o * hw;
      for (std::size_t r = 0; r < kk; ++r) dw[o * kk + r] += kern.dot(g, col.data() + r * hw, hw);
      params_[1].grad[o] += std::accumulate(g, g + hw, 0.0f);
    }
  }
  // dcol = W^T * dOut
  std::vector<float> wt(kk * out_);
  const float* w = params_[0].value.data();
  for (int o = 0; o < out_; ++o)
    for (std::size_t r = 0; r < kk; ++r) wt[r * out_ + o] = w[o * kk + r];
  thread_local std::vector<float> dcol;
  dcol.resize(kk * hw);
  kern.gemm(kk, hw, out_, wt.data(), out_, grad_out.data.data(), hw, dcol.data(), hw, false);
  grad_in = Tensor(in.height, in.width, in.channels);
  col2im_add(dcol, k_, grad_in);
}

// ---------------------------------------------------------------- Relu

void Relu::forward(const Tensor& in, Tensor& out) const {
  out = in;
  simd::active().relu(out.data.data(), out.data.size());
}

void Relu::backward(const Tensor&, const Tensor& out, const Tensor& grad_out, Tensor& grad_in) {
  grad_in = grad_out;
  for (std::size_t i = 0; i < grad_in.data.size(); ++i)
    if (!(out.data[i] > 0.0f)) grad_in.data[i] = 0.0f;
}

// ---------------------------------------------------------------- MaxPool2

void MaxPool2::forward(const Tensor& in, Tensor& out) const {
  const Shape os = output_shape(shape_of(in));
  out = Tensor(os.height, os.width, os.channels);
  for (int c = 0; c < os.channels; ++c)
    for (int y = 0; y < os.height; ++y)
      for (int x = 0; x < os.width; ++x) {
        const int sy = 2 * y, sx = 2 * x;
        out.at(y, x, c) = std::max(std::max(in.at(sy, sx, c), in.at(sy, sx + 1, c)),
                                   std::max(in.at(sy + 1, sx, c), in.at(sy + 1, sx + 1, c)));
      }
}

void MaxPool2::backward(const Tensor& in, const Tensor&, const Tensor& grad_out, Tensor& grad_in) {
  const Shape os = output_shape(shape_of(in));
  require_shape(grad_out, os, "maxpool2 backward");
  grad_in = Tensor(in.height, in.width, in.channels);
  for (int c = 0; c < os.channels; ++c)
    for (int y = 0; y < os.height; ++y)
      for (int x = 0; x < os.width; ++x) {
        int by = 2 * y, bx = 2 * x;
        float best = in.at(by, bx, c);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            if (in.at(2 * y + dy, 2 * x + dx, c) > best) {
              best = in.at(2 * y + dy, 2 * x + dx, c);
              by = 2 * y + dy;
              bx = 2 * x + dx;
            }
        grad_in.at(by, bx, c) += grad_out.at(y, x, c);
      }
}

// ---------------------------------------------------------------- global pools

void GlobalMaxPool::forward(const Tensor& in, Tensor& out) const {
  out = Tensor(1, 1, in.channels);
  const std::size_t hw = in.plane_size();
  for (int c = 0; c < in.channels; ++c) out.data[c] = simd::active().max(in.data.data() + c * hw, hw);
}

void GlobalMaxPool::backward(const Tensor& in, const Tensor&, const Tensor& grad_out, Tensor& grad_in) {
  grad_in = Tensor(in.height, in.width, in.channels);
  const std::size_t hw = in.plane_size();
  for (int c = 0; c < in.channels; ++c) {
    const float* p = in.data.data() + c * hw;
    const std::size_t arg = static_cast<std::size_t>(std::max_element(p, p + hw) - p);
    grad_in.data[c * hw + arg] = grad_out.data[c];
  }
}

void GlobalAvgPool::forward(const Tensor& in, Tensor& out) const {
  out = Tensor(1, 1, in.channels);
  const std::size_t hw = in.plane_size();
  for (int c = 0; c < in.channels; ++c) {
    const float* p = in.data.data() + c * hw;
    out.data[c] = static_cast<float>(std::accumulate(p, p + hw, 0.0) / static_cast<double>(hw));
  }
}

void GlobalAvgPool::backward(const Tensor& in, const Tensor&, const Tensor& grad_out, Tensor& grad_in) {
  grad_in = Tensor(in.height, in.width, in.channels);
  const std::size_t hw = in.plane_size();
  for (int c = 0; c < in.channels; ++c) {
    const float g = grad_out.data[c] / static_cast<float>(hw);
    std::fill_n(grad_in.data.begin() + static_cast<std::ptrdiff_t>(c * hw), hw, g);
  }
}

// ---------------------------------------------------------------- Dense

Dense::Dense(int in_features, int out_features) : in_(in_features), out_(out_features) {
  if (in_ <= 0 || out_ <= 0) throw InvalidArgument("dense: invalid geometry");
  params_.emplace_back(static_cast<std::size_t>(out_) * in_);
  params_.emplace_back(static_cast<std::size_t>(out_));
}

Shape Dense::output_shape(Shape in) const {
  if (in.size() != static_cast<std::size_t>(in_))
    throw InvalidArgument("dense: expected " + std::to_string(in_) + " input features, got " + std::to_string(in.size()));
  return {out_, 1, 1};
}

void Dense::initialize(Rng& rng) {
  const double stddev = std::sqrt(1.0 / in_);
  for (float& v : params_[0].value) v = static_cast<float>(normal(rng) * stddev);
  std::fill(params_[1].value.begin(), params_[1].value.end(), 0.0f);
}

void Dense::forward(const Tensor& in, Tensor& out) const {
  output_shape(shape_of(in));
  out = Tensor(1, 1, out_);
  const auto& kern = simd::active();
  for (int o = 0; o < out_; ++o)
    out.data[o] = kern.dot(params_[0].value.data() + static_cast<std::size_t>(o) * in_, in.data.data(), in_) + params_[1].value[o];
}

void Dense::backward(const Tensor& in, const Tensor&, const Tensor& grad_out, Tensor& grad_in) {
  const auto& kern = simd::active();
  grad_in = Tensor(in.height, in.width, in.channels);
  for (int o = 0; o < out_; ++o) {
    const float g = grad_out.data[o];
    const float* wrow = params_[0].value.data() + static_cast<std::size_t>(o) * in_;
    if (trainable) {
      kern.axpy(g, in.data.data(), params_[0].grad.data() + static_cast<std::size_t>(o) * in_, in_);
      params_[1].grad[o] += g;
    }
    kern.axpy(g, wrow, grad_in.data.data(), in_);
  }
}

// ---------------------------------------------------------------- Network

Tensor Network::forward(const Tensor& input) const {
  Tensor cur = input;
  Tensor next;
  for (const auto& layer : layers_) {
    layer->forward(cur, next);
    std::swap(cur, next);
  }
  return cur;
}

Tensor Network::forward_recorded(const Tensor& input, Trace& trace) const {
  trace.activations.clear();
  trace.activations.reserve(layers_.size() + 1);
  trace.activations.push_back(input);
  for (const auto& layer : layers_) {
    Tensor next;
    layer->forward(trace.activations.back(), next);
    trace.activations.push_back(std::move(next));
  }
  return trace.activations.back();
}

Tensor Network::backward(const Trace& trace, const Tensor& grad_output) {
  if (trace.activations.size() != layers_.size() + 1) throw InvalidArgument("backward: trace does not match network");
  // Layers below the first trainable one need no gradient at all.
  std::size_t first_trainable = layers_.size();
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i]->weight_bearing() && layers_[i]->trainable) {
      first_trainable = i;
      break;
    }
  Tensor grad = grad_output;
  for (std::size_t i = layers_.size(); i-- > first_trainable;) {
    Tensor grad_in;
    layers_[i]->backward(trace.activations[i], trace.activations[i + 1], grad, grad_in);
    grad = std::move(grad_in);
  }
  if (first_trainable != 0) return {};
  return grad;
}

void Network::zero_grad() {
  for (auto& layer : layers_)
    for (Parameter& p : layer->params()) std::fill(p.grad.begin(), p.grad.end(), 0.0f);
}

void Network::initialize(Rng& rng) {
  for (auto& layer : layers_) layer->initialize(rng);
}

std::vector<std::size_t> Network::weight_layer_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i]->weight_bearing()) idx.push_back(i);
  return idx;
}

}  // namespace patchmil::nn
