#include "fastpose/tensornet.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "fastpose/errors.hpp"

namespace fastpose {

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.c) + "," + std::to_string(s.h) + "," + std::to_string(s.w) + ")";
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape s, std::vector<T> values) : shape(s), data(std::move(values)) {
  if (data.size() != shape.size()) {
    fail(ErrorCode::kShapeMismatch, "tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + to_string(shape));
  }
}

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv2D: return "Conv2D";
    case LayerKind::kGroupNorm: return "GroupNorm";
    case LayerKind::kReLU: return "ReLU";
    case LayerKind::kUpsample2x: return "Upsample2xNearest";
    case LayerKind::kDense: return "Dense";
    case LayerKind::kFlatten: return "Flatten";
    case LayerKind::kConcat: return "ConcatChannels";
  }
  return "?";
}

LayerKind layer_kind_from_name(std::string_view name) {
  for (auto k : {LayerKind::kConv2D, LayerKind::kGroupNorm, LayerKind::kReLU, LayerKind::kUpsample2x,
                 LayerKind::kDense, LayerKind::kFlatten, LayerKind::kConcat}) {
    if (layer_kind_name(k) == name) return k;
  }
  fail(ErrorCode::kInvalidConfig, "unknown layer kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Graph construction and shape inference

template <typename T>
int BasicLayerGraph<T>::find(std::string_view name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

template <typename T>
int BasicLayerGraph<T>::add(BasicLayer<T> layer) {
  layers_.push_back(std::move(layer));
  return static_cast<int>(layers_.size()) - 1;
}

template <typename T>
int BasicLayerGraph<T>::add_conv(std::string name, std::string module, InputRef input,
                                 int in_channels, int out_channels, int kernel, int stride,
                                 int padding) {
  BasicLayer<T> l;
  l.name = std::move(name);
  l.module = std::move(module);
  l.kind = LayerKind::kConv2D;
  l.inputs = {input};
  l.in_channels = in_channels;
  l.out_channels = out_channels;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  l.weight.assign(static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel, T(0));
  l.bias.assign(out_channels, T(0));
  return add(std::move(l));
}

template <typename T>
int BasicLayerGraph<T>::add_group_norm(std::string name, std::string module, InputRef input,
                                       int channels, int group_size) {
  BasicLayer<T> l;
  l.name = std::move(name);
  l.module = std::move(module);
  l.kind = LayerKind::kGroupNorm;
  l.inputs = {input};
  l.in_channels = l.out_channels = channels;
  l.group_size = group_size;
  l.weight.assign(channels, T(1));
  l.bias.assign(channels, T(0));
  return add(std::move(l));
}

template <typename T>
int BasicLayerGraph<T>::add_relu(std::string name, std::string module, InputRef input) {
  BasicLayer<T> l;
  l.name = std::move(name);
  l.module = std::move(module);
  l.kind = LayerKind::kReLU;
  l.inputs = {input};
  return add(std::move(l));
}

template <typename T>
int BasicLayerGraph<T>::add_upsample(std::string name, std::string module, InputRef input) {
  BasicLayer<T> l;
  l.name = std::move(name);
  l.module = std::move(module);
  l.kind = LayerKind::kUpsample2x;
  l.inputs = {input};
  return add(std::move(l));
}

template <typename T>
int BasicLayerGraph<T>::add_dense(std::string name, std::string module, InputRef input,
                                  int in_features, int out_features) {
  BasicLayer<T> l;
  l.name = std::move(name);
  l.module = std::move(module);
  l.kind = LayerKind::kDense;
  l.inputs = {input};
  l.in_channels = in_features;
  l.out_channels = out_features;
  l.weight.assign(static_cast<std::size_t>(out_features) * in_features, T(0));
  l.bias.assign(out_features, T(0));
  return add(std::move(l));
}

template <typename T>
int BasicLayerGraph<T>::add_flatten(std::string name, std::string module, InputRef input) {
  BasicLayer<T> l;
  l.name = std::move(name);
  l.module = std::move(module);
  l.kind = LayerKind::kFlatten;
  l.inputs = {input};
  return add(std::move(l));
}

template <typename T>
int BasicLayerGraph<T>::add_concat(std::string name, std::string module, std::vector<InputRef> inputs) {
  BasicLayer<T> l;
  l.name = std::move(name);
  l.module = std::move(module);
  l.kind = LayerKind::kConcat;
  l.inputs = std::move(inputs);
  return add(std::move(l));
}

namespace {

[[noreturn]] void layer_error(ErrorCode code, std::size_t index, const std::string& name,
                              const std::string& reason) {
  fail(code, "layer " + std::to_string(index) + " '" + name + "': " + reason);
}

}  // namespace

template <typename T>
std::vector<Shape> BasicLayerGraph<T>::infer_shapes(const Shape& input) const {
  if (input.c < 1 || input.h < 1 || input.w < 1) {
    fail(ErrorCode::kShapeMismatch, "graph input shape " + to_string(input) + " is empty");
  }
  std::vector<Shape> shapes;
  shapes.reserve(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    auto err = [&](ErrorCode code, const std::string& reason) { layer_error(code, i, l.name, reason); };
    if (l.inputs.empty()) err(ErrorCode::kInvalidConfig, "has no inputs");
    std::vector<Shape> in;
    for (const auto& ref : l.inputs) {
      if (ref.layer < InputRef::kGraphInput || ref.layer >= static_cast<int>(i)) {
        err(ErrorCode::kInvalidConfig, "input " + std::to_string(ref.layer) + " is not an earlier layer");
      }
      in.push_back(ref.layer == InputRef::kGraphInput ? input : shapes[ref.layer]);
    }
    if (l.kind != LayerKind::kConcat) {
      if (l.inputs.size() != 1) err(ErrorCode::kInvalidConfig, "expects exactly one input");
      if (l.inputs[0].begin != 0 || l.inputs[0].end != -1) {
        err(ErrorCode::kInvalidConfig, "channel slices are only valid on ConcatChannels");
      }
    }
    const Shape x = in.front();
    Shape out = x;
    switch (l.kind) {
      case LayerKind::kConv2D: {
        if (l.kernel < 1 || l.stride < 1 || l.padding < 0) err(ErrorCode::kInvalidConfig, "bad conv geometry");
        if (x.c != l.in_channels) {
          err(ErrorCode::kShapeMismatch, "declares " + std::to_string(l.in_channels) +
                                             " input channels, producer has " + std::to_string(x.c));
        }
        if (l.out_channels < 1) err(ErrorCode::kShapeMismatch, "has no filters");
        const std::size_t wn = static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel;
        if (l.weight.size() != wn || l.bias.size() != static_cast<std::size_t>(l.out_channels)) {
          err(ErrorCode::kShapeMismatch, "parameter sizes do not match the declared shape");
        }
        const int ho = (x.h + 2 * l.padding - l.kernel) / l.stride + 1;
        const int wo = (x.w + 2 * l.padding - l.kernel) / l.stride + 1;
        if (x.h + 2 * l.padding < l.kernel || x.w + 2 * l.padding < l.kernel) {
          err(ErrorCode::kShapeMismatch, "kernel larger than padded input");
        }
        out = {l.out_channels, ho, wo};
        break;
      }
      case LayerKind::kGroupNorm: {
        if (x.c != l.in_channels || l.out_channels != l.in_channels) {
          err(ErrorCode::kShapeMismatch, "declares " + std::to_string(l.in_channels) +
                                             " channels, producer has " + std::to_string(x.c));
        }
        if (l.group_size < 1 || x.c % l.group_size != 0) {
          err(ErrorCode::kShapeMismatch, std::to_string(x.c) + " channels are not a multiple of group size " +
                                             std::to_string(l.group_size));
        }
        if (l.weight.size() != static_cast<std::size_t>(x.c) || l.bias.size() != static_cast<std::size_t>(x.c)) {
          err(ErrorCode::kShapeMismatch, "gamma/beta sizes do not match the channel count");
        }
        break;
      }
      case LayerKind::kReLU:
        break;
      case LayerKind::kUpsample2x:
        out = {x.c, 2 * x.h, 2 * x.w};
        break;
      case LayerKind::kDense: {
        if (static_cast<int>(x.size()) != l.in_channels) {
          err(ErrorCode::kShapeMismatch, "declares " + std::to_string(l.in_channels) +
                                             " input features, producer has " + std::to_string(x.size()));
        }
        if (l.out_channels < 1) err(ErrorCode::kShapeMismatch, "has no outputs");
        if (l.weight.size() != static_cast<std::size_t>(l.out_channels) * l.in_channels ||
            l.bias.size() != static_cast<std::size_t>(l.out_channels)) {
          err(ErrorCode::kShapeMismatch, "parameter sizes do not match the declared shape");
        }
        out = {l.out_channels, 1, 1};
        break;
      }
      case LayerKind::kFlatten:
        out = {static_cast<int>(x.size()), 1, 1};
        break;
      case LayerKind::kConcat: {
        int channels = 0;
        for (std::size_t k = 0; k < l.inputs.size(); ++k) {
          const auto& ref = l.inputs[k];
          const int end = ref.end < 0 ? in[k].c : ref.end;
          if (ref.begin < 0 || end > in[k].c || ref.begin >= end) {
            err(ErrorCode::kShapeMismatch, "slice [" + std::to_string(ref.begin) + "," + std::to_string(end) +
                                               ") outside producer channels " + std::to_string(in[k].c));
          }
          if (in[k].h != x.h || in[k].w != x.w) err(ErrorCode::kShapeMismatch, "inputs differ in spatial size");
          channels += end - ref.begin;
        }
        out = {channels, x.h, x.w};
        break;
      }
    }
    shapes.push_back(out);
  }
  return shapes;
}

template <typename T>
Shape BasicLayerGraph<T>::output_shape() const {
  if (layers_.empty()) return input_shape_;
  return infer_shapes().back();
}

// ---------------------------------------------------------------------------
// Forward

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeom {
  int in_c, in_h, in_w, out_h, out_w, k, stride, pad;
  int rows() const { return in_c * k * k; }
  int cols() const { return out_h * out_w; }
  bool is_pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

template <typename T>
ConvGeom conv_geom(const BasicLayer<T>& l, const Shape& in, const Shape& out) {
  return {in.c, in.h, in.w, out.h, out.w, l.kernel, l.stride, l.padding};
}

template <typename T>
void im2col(const T* x, const ConvGeom& g, std::vector<T>& col) {
  col.assign(static_cast<std::size_t>(g.rows()) * g.cols(), T(0));
  for (int c = 0; c < g.in_c; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = col.data() + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * g.cols();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          const T* src = x + (static_cast<std::size_t>(c) * g.in_h + iy) * g.in_w;
          T* dst = row + static_cast<std::size_t>(oy) * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) dst[ox] = src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* dx) {
  for (int c = 0; c < g.in_c; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * g.cols();
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          T* dst = dx + (static_cast<std::size_t>(c) * g.in_h + iy) * g.in_w;
          const T* src = row + static_cast<std::size_t>(oy) * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void conv_forward(const BasicLayer<T>& l, const BasicTensor<T>& x, BasicTensor<T>& y) {
  const ConvGeom g = conv_geom(l, x.shape, y.shape);
  std::vector<T> col;
  const T* col_ptr = x.data.data();
  if (!g.is_pointwise()) {
    im2col(x.data.data(), g, col);
    col_ptr = col.data();
  }
  Eigen::Map<const MatR<T>> w(l.weight.data(), l.out_channels, g.rows());
  Eigen::Map<const MatR<T>> c(col_ptr, g.rows(), g.cols());
  Eigen::Map<MatR<T>> out(y.data.data(), l.out_channels, g.cols());
  out.noalias() = w * c;
  for (int o = 0; o < l.out_channels; ++o) out.row(o).array() += l.bias[o];
}

template <typename T>
void group_norm_forward(const BasicLayer<T>& l, const BasicTensor<T>& x, BasicTensor<T>& y) {
  const int hw = x.shape.h * x.shape.w;
  const int groups = x.shape.c / l.group_size;
  const std::size_t n = static_cast<std::size_t>(l.group_size) * hw;
  for (int g = 0; g < groups; ++g) {
    const std::size_t base = static_cast<std::size_t>(g) * n;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += static_cast<double>(x.data[base + i]);
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(x.data[base + i]) - mean;
      sq += d * d;
    }
    const double inv_std = 1.0 / std::sqrt(sq / static_cast<double>(n) + kGroupNormEpsilon);
    for (int cc = 0; cc < l.group_size; ++cc) {
      const int ch = g * l.group_size + cc;
      const double gamma = static_cast<double>(l.weight[ch]);
      const double beta = static_cast<double>(l.bias[ch]);
      const std::size_t off = static_cast<std::size_t>(ch) * hw;
      for (int i = 0; i < hw; ++i) {
        const double xhat = (static_cast<double>(x.data[off + i]) - mean) * inv_std;
        y.data[off + i] = static_cast<T>(gamma * xhat + beta);
      }
    }
  }
}

template <typename T>
void upsample_forward(const BasicTensor<T>& x, BasicTensor<T>& y) {
  for (int c = 0; c < x.shape.c; ++c) {
    for (int yy = 0; yy < y.shape.h; ++yy) {
      for (int xx = 0; xx < y.shape.w; ++xx) y.at(c, yy, xx) = x.at(c, yy / 2, xx / 2);
    }
  }
}

template <typename T>
void dense_forward(const BasicLayer<T>& l, const BasicTensor<T>& x, BasicTensor<T>& y) {
  Eigen::Map<const MatR<T>> w(l.weight.data(), l.out_channels, l.in_channels);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> in(x.data.data(), l.in_channels);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(l.bias.data(), l.out_channels);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> out(y.data.data(), l.out_channels);
  out.noalias() = w * in;
  out += b;
}

int slice_end(const InputRef& ref, const Shape& s) { return ref.end < 0 ? s.c : ref.end; }

}  // namespace

template <typename T>
ForwardTrace<T> forward_trace(const BasicLayerGraph<T>& graph, const BasicTensor<T>& input) {
  if (!(input.shape == graph.input_shape()) || input.data.size() != input.shape.size()) {
    fail(ErrorCode::kShapeMismatch, "input shape " + to_string(input.shape) + " differs from declared " +
                                        to_string(graph.input_shape()));
  }
  const auto shapes = graph.infer_shapes();
  ForwardTrace<T> trace;
  trace.input = input;
  trace.activations.reserve(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto& l = graph.layer(i);
    auto src = [&](std::size_t k) -> const BasicTensor<T>& {
      const int p = l.inputs[k].layer;
      return p == InputRef::kGraphInput ? trace.input : trace.activations[p];
    };
    BasicTensor<T> y(shapes[i]);
    const BasicTensor<T>& x = src(0);
    switch (l.kind) {
      case LayerKind::kConv2D: conv_forward(l, x, y); break;
      case LayerKind::kGroupNorm: group_norm_forward(l, x, y); break;
      case LayerKind::kReLU:
        for (std::size_t j = 0; j < x.data.size(); ++j) y.data[j] = x.data[j] > T(0) ? x.data[j] : T(0);
        break;
      case LayerKind::kUpsample2x: upsample_forward(x, y); break;
      case LayerKind::kDense: dense_forward(l, x, y); break;
      case LayerKind::kFlatten: y.data = x.data; break;
      case LayerKind::kConcat: {
        std::size_t off = 0;
        for (std::size_t k = 0; k < l.inputs.size(); ++k) {
          const auto& s = src(k);
          const std::size_t hw = static_cast<std::size_t>(s.shape.h) * s.shape.w;
          const std::size_t b = l.inputs[k].begin * hw;
          const std::size_t e = slice_end(l.inputs[k], s.shape) * hw;
          std::copy(s.data.begin() + b, s.data.begin() + e, y.data.begin() + off);
          off += e - b;
        }
        break;
      }
    }
    trace.activations.push_back(std::move(y));
  }
  if (graph.empty()) trace.activations.push_back(input);
  return trace;
}

// ---------------------------------------------------------------------------
// Backward

template <typename T>
BasicGradients<T> zero_gradients(const BasicLayerGraph<T>& graph) {
  BasicGradients<T> g;
  g.layers.resize(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    g.layers[i].weight.assign(graph.layer(i).weight.size(), T(0));
    g.layers[i].bias.assign(graph.layer(i).bias.size(), T(0));
  }
  g.input = BasicTensor<T>(graph.input_shape());
  return g;
}

template <typename T>
void accumulate(BasicGradients<T>& a, const BasicGradients<T>& b, T scale) {
  if (a.layers.size() != b.layers.size()) fail(ErrorCode::kShapeMismatch, "gradient layer counts differ");
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    auto& x = a.layers[i];
    const auto& y = b.layers[i];
    if (x.weight.size() != y.weight.size() || x.bias.size() != y.bias.size()) {
      fail(ErrorCode::kShapeMismatch, "gradient shapes differ at layer " + std::to_string(i));
    }
    for (std::size_t j = 0; j < x.weight.size(); ++j) x.weight[j] += scale * y.weight[j];
    for (std::size_t j = 0; j < x.bias.size(); ++j) x.bias[j] += scale * y.bias[j];
  }
  if (a.input.data.size() == b.input.data.size()) {
    for (std::size_t j = 0; j < a.input.data.size(); ++j) a.input.data[j] += scale * b.input.data[j];
  }
}

namespace {

template <typename T>
void conv_backward(const BasicLayer<T>& l, const BasicTensor<T>& x, const BasicTensor<T>& dy,
                   ParamGrad<T>& pg, BasicTensor<T>& dx) {
  const ConvGeom g = conv_geom(l, x.shape, dy.shape);
  std::vector<T> col;
  const T* col_ptr = x.data.data();
  if (!g.is_pointwise()) {
    im2col(x.data.data(), g, col);
    col_ptr = col.data();
  }
  Eigen::Map<const MatR<T>> w(l.weight.data(), l.out_channels, g.rows());
  Eigen::Map<const MatR<T>> c(col_ptr, g.rows(), g.cols());
  Eigen::Map<const MatR<T>> d(dy.data.data(), l.out_channels, g.cols());
  Eigen::Map<MatR<T>> dw(pg.weight.data(), l.out_channels, g.rows());
  dw.noalias() += d * c.transpose();
  for (int o = 0; o < l.out_channels; ++o) pg.bias[o] += d.row(o).sum();
  if (g.is_pointwise()) {
    Eigen::Map<MatR<T>> dxm(dx.data.data(), g.rows(), g.cols());
    dxm.noalias() += w.transpose() * d;
  } else {
    MatR<T> dcol = w.transpose() * d;
    col2im_add(dcol.data(), g, dx.data.data());
  }
}

template <typename T>
void group_norm_backward(const BasicLayer<T>& l, const BasicTensor<T>& x, const BasicTensor<T>& dy,
                         ParamGrad<T>& pg, BasicTensor<T>& dx) {
  const int hw = x.shape.h * x.shape.w;
  const int groups = x.shape.c / l.group_size;
  const std::size_t n = static_cast<std::size_t>(l.group_size) * hw;
  std::vector<double> xhat(n);
  std::vector<double> dxhat(n);
  for (int g = 0; g < groups; ++g) {
    const std::size_t base = static_cast<std::size_t>(g) * n;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += static_cast<double>(x.data[base + i]);
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(x.data[base + i]) - mean;
      sq += d * d;
    }
    const double inv_std = 1.0 / std::sqrt(sq / static_cast<double>(n) + kGroupNormEpsilon);
    double s1 = 0.0;
    double s2 = 0.0;
    for (int cc = 0; cc < l.group_size; ++cc) {
      const int ch = g * l.group_size + cc;
      const double gamma = static_cast<double>(l.weight[ch]);
      double dgamma = 0.0;
      double dbeta = 0.0;
      for (int i = 0; i < hw; ++i) {
        const std::size_t local = static_cast<std::size_t>(cc) * hw + i;
        const double xh = (static_cast<double>(x.data[base + local]) - mean) * inv_std;
        const double g_out = static_cast<double>(dy.data[base + local]);
        xhat[local] = xh;
        dxhat[local] = g_out * gamma;
        dgamma += g_out * xh;
        dbeta += g_out;
        s1 += dxhat[local];
        s2 += dxhat[local] * xh;
      }
      pg.weight[ch] += static_cast<T>(dgamma);
      pg.bias[ch] += static_cast<T>(dbeta);
    }
    const double scale = inv_std / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = scale * (static_cast<double>(n) * dxhat[i] - s1 - xhat[i] * s2);
      dx.data[base + i] += static_cast<T>(v);
    }
  }
}

template <typename T>
void dense_backward(const BasicLayer<T>& l, const BasicTensor<T>& x, const BasicTensor<T>& dy,
                    ParamGrad<T>& pg, BasicTensor<T>& dx) {
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  Eigen::Map<const MatR<T>> w(l.weight.data(), l.out_channels, l.in_channels);
  Eigen::Map<const Vec> in(x.data.data(), l.in_channels);
  Eigen::Map<const Vec> d(dy.data.data(), l.out_channels);
  Eigen::Map<MatR<T>> dw(pg.weight.data(), l.out_channels, l.in_channels);
  dw.noalias() += d * in.transpose();
  Eigen::Map<Vec> db(pg.bias.data(), l.out_channels);
  db += d;
  Eigen::Map<Vec> dxv(dx.data.data(), l.in_channels);
  dxv.noalias() += w.transpose() * d;
}

}  // namespace

template <typename T>
BasicGradients<T> backward(const BasicLayerGraph<T>& graph, const ForwardTrace<T>& trace,
                           const BasicTensor<T>& upstream) {
  if (trace.activations.size() != std::max<std::size_t>(graph.size(), 1)) {
    fail(ErrorCode::kShapeMismatch, "forward trace does not belong to this graph");
  }
  if (!(upstream.shape == trace.output().shape) || upstream.data.size() != upstream.shape.size()) {
    fail(ErrorCode::kShapeMismatch, "upstream gradient shape " + to_string(upstream.shape) +
                                        " differs from output " + to_string(trace.output().shape));
  }
  BasicGradients<T> grads = zero_gradients(graph);
  if (graph.empty()) {
    grads.input = upstream;
    return grads;
  }
  std::vector<BasicTensor<T>> dact(graph.size());
  dact.back() = upstream;
  auto grad_of = [&](int producer) -> BasicTensor<T>& {
    if (producer == InputRef::kGraphInput) return grads.input;
    auto& t = dact[producer];
    if (t.data.empty()) t = BasicTensor<T>(trace.activations[producer].shape);
    return t;
  };
  for (int i = static_cast<int>(graph.size()) - 1; i >= 0; --i) {
    const auto& l = graph.layer(i);
    if (dact[i].data.empty()) continue;  // output not consumed downstream
    const BasicTensor<T>& dy = dact[i];
    const int p0 = l.inputs[0].layer;
    const BasicTensor<T>& x = p0 == InputRef::kGraphInput ? trace.input : trace.activations[p0];
    switch (l.kind) {
      case LayerKind::kConv2D: conv_backward(l, x, dy, grads.layers[i], grad_of(p0)); break;
      case LayerKind::kGroupNorm: group_norm_backward(l, x, dy, grads.layers[i], grad_of(p0)); break;
      case LayerKind::kReLU: {
        auto& dx = grad_of(p0);
        for (std::size_t j = 0; j < dy.data.size(); ++j) {
          if (x.data[j] > T(0)) dx.data[j] += dy.data[j];
        }
        break;
      }
      case LayerKind::kUpsample2x: {
        auto& dx = grad_of(p0);
        for (int c = 0; c < dy.shape.c; ++c) {
          for (int yy = 0; yy < dy.shape.h; ++yy) {
            for (int xx = 0; xx < dy.shape.w; ++xx) dx.at(c, yy / 2, xx / 2) += dy.at(c, yy, xx);
          }
        }
        break;
      }
      case LayerKind::kDense: dense_backward(l, x, dy, grads.layers[i], grad_of(p0)); break;
      case LayerKind::kFlatten: {
        auto& dx = grad_of(p0);
        for (std::size_t j = 0; j < dy.data.size(); ++j) dx.data[j] += dy.data[j];
        break;
      }
      case LayerKind::kConcat: {
        std::size_t off = 0;
        for (const auto& ref : l.inputs) {
          auto& dx = grad_of(ref.layer);
          const std::size_t hw = static_cast<std::size_t>(dx.shape.h) * dx.shape.w;
          const std::size_t b = ref.begin * hw;
          const std::size_t e = slice_end(ref, dx.shape) * hw;
          for (std::size_t j = b; j < e; ++j) dx.data[j] += dy.data[off + j - b];
          off += e - b;
        }
        break;
      }
    }
    // Activation gradients are no longer needed once propagated.
    if (i != static_cast<int>(graph.size()) - 1) dact[i] = BasicTensor<T>();
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Accounting and conversion

template <typename T>
FlopReport count_flops(const BasicLayerGraph<T>& graph, const Shape& input) {
  const auto shapes = graph.infer_shapes(input);
  FlopReport r;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto& l = graph.layer(i);
    LayerFlops f{l.name, l.kind, 0, 0};
    const Shape& out = shapes[i];
    switch (l.kind) {
      case LayerKind::kConv2D:
        f.macs = static_cast<std::uint64_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel *
                 out.h * out.w;
        break;
      case LayerKind::kDense:
        f.macs = static_cast<std::uint64_t>(l.out_channels) * l.in_channels;
        break;
      case LayerKind::kGroupNorm:
      case LayerKind::kReLU:
      case LayerKind::kUpsample2x:
        f.elementwise = out.size();
        break;
      case LayerKind::kFlatten:
      case LayerKind::kConcat:
        break;
    }
    r.total_macs += f.macs;
    r.total_elementwise += f.elementwise;
    r.layers.push_back(std::move(f));
  }
  return r;
}

template <typename T>
std::uint64_t count_params(const BasicLayerGraph<T>& graph) {
  std::uint64_t n = 0;
  for (const auto& l : graph.layers()) n += l.weight.size() + l.bias.size();
  return n;
}

template <typename U, typename T>
BasicLayerGraph<U> graph_cast(const BasicLayerGraph<T>& graph) {
  BasicLayerGraph<U> out(graph.input_shape());
  for (const auto& l : graph.layers()) {
    BasicLayer<U> c;
    c.name = l.name;
    c.module = l.module;
    c.kind = l.kind;
    c.inputs = l.inputs;
    c.in_channels = l.in_channels;
    c.out_channels = l.out_channels;
    c.kernel = l.kernel;
    c.stride = l.stride;
    c.padding = l.padding;
    c.group_size = l.group_size;
    c.weight.assign(l.weight.begin(), l.weight.end());
    c.bias.assign(l.bias.begin(), l.bias.end());
    out.add(std::move(c));
  }
  return out;
}

template struct BasicTensor<float>;
template struct BasicTensor<double>;
template class BasicLayerGraph<float>;
template class BasicLayerGraph<double>;

#define FASTPOSE_INSTANTIATE(T)                                                                    \
  template ForwardTrace<T> forward_trace(const BasicLayerGraph<T>&, const BasicTensor<T>&);        \
  template BasicGradients<T> backward(const BasicLayerGraph<T>&, const ForwardTrace<T>&,           \
                                      const BasicTensor<T>&);                                      \
  template BasicGradients<T> zero_gradients(const BasicLayerGraph<T>&);                            \
  template void accumulate(BasicGradients<T>&, const BasicGradients<T>&, T);                       \
  template FlopReport count_flops(const BasicLayerGraph<T>&, const Shape&);                        \
  template std::uint64_t count_params(const BasicLayerGraph<T>&);

FASTPOSE_INSTANTIATE(float)
FASTPOSE_INSTANTIATE(double)
#undef FASTPOSE_INSTANTIATE

template BasicLayerGraph<double> graph_cast<double, float>(const BasicLayerGraph<float>&);
template BasicLayerGraph<float> graph_cast<float, double>(const BasicLayerGraph<double>&);
template BasicLayerGraph<float> graph_cast<float, float>(const BasicLayerGraph<float>&);
template BasicLayerGraph<double> graph_cast<double, double>(const BasicLayerGraph<double>&);

}  // namespace fastpose
