#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fastpose {

// (channels, height, width); a flat vector of n elements is (n, 1, 1).
struct Shape {
  int c = 0;
  int h = 1;
  int w = 1;

  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

template <typename T>
struct BasicTensor {
  Shape shape;
  std::vector<T> data;

  BasicTensor() = default;
  explicit BasicTensor(Shape s, T fill = T(0)) : shape(s), data(s.size(), fill) {}
  BasicTensor(Shape s, std::vector<T> values);

  T& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * shape.h + y) * shape.w + x]; }
  T at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * shape.h + y) * shape.w + x];
  }
};

using Tensor = BasicTensor<float>;

enum class LayerKind { kConv2D, kGroupNorm, kReLU, kUpsample2x, kDense, kFlatten, kConcat };

std::string_view layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(std::string_view name);

// Producer reference. layer == kGraphInput reads the graph input. For
// kConcat inputs [begin, end) selects a channel slice (end == -1: all).
struct InputRef {
  static constexpr int kGraphInput = -1;
  int layer = kGraphInput;
  int begin = 0;
  int end = -1;

  friend bool operator==(const InputRef&, const InputRef&) = default;
};

// One layer record. Parameter layout:
//   kConv2D    weight out×in×k×k, bias out
//   kDense     weight out×in (row-major), bias out
//   kGroupNorm weight = γ (channels), bias = β (channels)
template <typename T>
struct BasicLayer {
  std::string name;
  std::string module;  // "backbone", "head", "pnp", ... ; used by the pruner
  LayerKind kind = LayerKind::kReLU;
  std::vector<InputRef> inputs;
  int in_channels = 0;   // conv: input channels; dense: input features; GN: channels
  int out_channels = 0;  // conv: filters; dense: output features; GN/concat: channels
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  int group_size = 1;  // channels per GroupNorm group
  std::vector<T> weight;
  std::vector<T> bias;

  bool has_params() const {
    return kind == LayerKind::kConv2D || kind == LayerKind::kDense || kind == LayerKind::kGroupNorm;
  }
};

inline constexpr double kGroupNormEpsilon = 1e-5;

// Layers are stored in topological order; every input refers to an earlier
// layer or the graph input. The last layer is the graph output.
template <typename T>
class BasicLayerGraph {
 public:
  BasicLayerGraph() = default;
  explicit BasicLayerGraph(Shape input_shape) : input_shape_(input_shape) {}

  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::vector<BasicLayer<T>>& layers() const noexcept { return layers_; }
  std::vector<BasicLayer<T>>& mutable_layers() noexcept { return layers_; }
  const BasicLayer<T>& layer(std::size_t i) const { return layers_.at(i); }
  BasicLayer<T>& mutable_layer(std::size_t i) { return layers_.at(i); }
  std::size_t size() const noexcept { return layers_.size(); }
  bool empty() const noexcept { return layers_.empty(); }
  int output_index() const noexcept { return static_cast<int>(layers_.size()) - 1; }

  // Index of the layer with this name, or -1.
  int find(std::string_view name) const;

  // Appends a layer; returns its index. Shapes are checked by validate().
  int add(BasicLayer<T> layer);
  int add_conv(std::string name, std::string module, InputRef input, int in_channels,
               int out_channels, int kernel, int stride, int padding);
  int add_group_norm(std::string name, std::string module, InputRef input, int channels,
                     int group_size);
  int add_relu(std::string name, std::string module, InputRef input);
  int add_upsample(std::string name, std::string module, InputRef input);
  int add_dense(std::string name, std::string module, InputRef input, int in_features,
                int out_features);
  int add_flatten(std::string name, std::string module, InputRef input);
  int add_concat(std::string name, std::string module, std::vector<InputRef> inputs);

  // Per-layer output shapes for the declared input shape. Throws
  // ShapeMismatch / InvalidConfig when an invariant does not hold.
  std::vector<Shape> infer_shapes() const { return infer_shapes(input_shape_); }
  std::vector<Shape> infer_shapes(const Shape& input) const;
  Shape output_shape() const;

  // Checks every structural invariant: topological order, channel agreement
  // between producers and consumers, GroupNorm divisibility, parameter sizes.
  void validate() const { (void)infer_shapes(); }

 private:
  Shape input_shape_;
  std::vector<BasicLayer<T>> layers_;
};

using Layer = BasicLayer<float>;
using LayerGraph = BasicLayerGraph<float>;

template <typename T>
struct ForwardTrace {
  BasicTensor<T> input;
  std::vector<BasicTensor<T>> activations;  // one per layer
  const BasicTensor<T>& output() const { return activations.back(); }
};

template <typename T>
struct ParamGrad {
  std::vector<T> weight;
  std::vector<T> bias;
};

template <typename T>
struct BasicGradients {
  std::vector<ParamGrad<T>> layers;  // congruent with the graph's parameters
  BasicTensor<T> input;              // gradient w.r.t. the graph input
};

using Gradients = BasicGradients<float>;

// Throws ShapeMismatch when the input shape differs from the declared one.
template <typename T>
ForwardTrace<T> forward_trace(const BasicLayerGraph<T>& graph, const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> forward(const BasicLayerGraph<T>& graph, const BasicTensor<T>& input) {
  return forward_trace(graph, input).output();
}

// Reverse-mode gradients for `upstream` = dLoss/dOutput.
template <typename T>
BasicGradients<T> backward(const BasicLayerGraph<T>& graph, const ForwardTrace<T>& trace,
                           const BasicTensor<T>& upstream);

template <typename T>
BasicGradients<T> backward(const BasicLayerGraph<T>& graph, const BasicTensor<T>& input,
                           const BasicTensor<T>& upstream) {
  return backward(graph, forward_trace(graph, input), upstream);
}

template <typename T>
BasicGradients<T> zero_gradients(const BasicLayerGraph<T>& graph);

// Element-wise a += scale * b; shapes must match.
template <typename T>
void accumulate(BasicGradients<T>& a, const BasicGradients<T>& b, T scale = T(1));

template <typename U, typename T>
BasicLayerGraph<U> graph_cast(const BasicLayerGraph<T>& graph);

template <typename U, typename T>
BasicTensor<U> tensor_cast(const BasicTensor<T>& t) {
  BasicTensor<U> out(t.shape);
  for (std::size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<U>(t.data[i]);
  return out;
}

struct LayerFlops {
  std::string name;
  LayerKind kind = LayerKind::kReLU;
  std::uint64_t macs = 0;         // multiply-accumulates (Conv2D, Dense)
  std::uint64_t elementwise = 0;  // element operations of the other kinds
};

struct FlopReport {
  std::vector<LayerFlops> layers;
  std::uint64_t total_macs = 0;
  std::uint64_t total_elementwise = 0;
};

// Conv2D: out·in·k²·h_out·w_out; Dense: out·in; GroupNorm, ReLU, Upsample:
// one elementwise op per output element; Flatten and Concat: 0.
template <typename T>
FlopReport count_flops(const BasicLayerGraph<T>& graph, const Shape& input);
template <typename T>
FlopReport count_flops(const BasicLayerGraph<T>& graph) {
  return count_flops(graph, graph.input_shape());
}

template <typename T>
std::uint64_t count_params(const BasicLayerGraph<T>& graph);

extern template struct BasicTensor<float>;
extern template struct BasicTensor<double>;
extern template class BasicLayerGraph<float>;
extern template class BasicLayerGraph<double>;

}  // namespace fastpose
