#include "fastpose/distiller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fastpose/datio.hpp"
#include "fastpose/errors.hpp"
#include "fastpose/toy_gdrn.hpp"

namespace fastpose {

namespace {

constexpr double kNormFloor = 1e-12;

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    fail(ErrorCode::kInvalidTemperature, "temperature must be positive, got " + format_real(temperature));
  }
}

// Per-pixel L2 normalization along channels. Zero vectors pass through.
std::vector<double> pixel_l2(const std::vector<double>& v, const Shape& s, std::vector<double>* norms) {
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  std::vector<double> u(v.size());
  if (norms) norms->assign(hw, 0.0);
  for (std::size_t p = 0; p < hw; ++p) {
    double n2 = 0.0;
    for (int c = 0; c < s.c; ++c) n2 += v[c * hw + p] * v[c * hw + p];
    const double n = std::sqrt(n2);
    if (norms) (*norms)[p] = n;
    for (int c = 0; c < s.c; ++c) u[c * hw + p] = n > kNormFloor ? v[c * hw + p] / n : v[c * hw + p];
  }
  return u;
}

std::vector<double> pixel_l2_backward(const std::vector<double>& u, const std::vector<double>& du,
                                      const std::vector<double>& norms, const Shape& s) {
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  std::vector<double> dv(du.size());
  for (std::size_t p = 0; p < hw; ++p) {
    const double n = norms[p];
    if (n <= kNormFloor) {
      for (int c = 0; c < s.c; ++c) dv[c * hw + p] = du[c * hw + p];
      continue;
    }
    double dot = 0.0;
    for (int c = 0; c < s.c; ++c) dot += u[c * hw + p] * du[c * hw + p];
    for (int c = 0; c < s.c; ++c) dv[c * hw + p] = (du[c * hw + p] - u[c * hw + p] * dot) / n;
  }
  return dv;
}

// Per-channel standardization over the spatial positions.
std::vector<double> channel_standardize(const std::vector<double>& v, const Shape& s, std::vector<double>* scales) {
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  std::vector<double> u(v.size());
  if (scales) scales->assign(s.c, 0.0);
  for (int c = 0; c < s.c; ++c) {
    const double* x = v.data() + c * hw;
    double mean = std::accumulate(x, x + hw, 0.0) / static_cast<double>(hw);
    double var = 0.0;
    for (std::size_t p = 0; p < hw; ++p) var += (x[p] - mean) * (x[p] - mean);
    var /= static_cast<double>(hw);
    const double scale = std::sqrt(var + kGroupNormEpsilon);
    if (scales) (*scales)[c] = scale;
    for (std::size_t p = 0; p < hw; ++p) u[c * hw + p] = (x[p] - mean) / scale;
  }
  return u;
}

std::vector<double> channel_standardize_backward(const std::vector<double>& u, const std::vector<double>& du,
                                                 const std::vector<double>& scales, const Shape& s) {
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  const double inv_n = 1.0 / static_cast<double>(hw);
  std::vector<double> dv(du.size());
  for (int c = 0; c < s.c; ++c) {
    double mean_du = 0.0, mean_du_u = 0.0;
    for (std::size_t p = 0; p < hw; ++p) {
      mean_du += du[c * hw + p];
      mean_du_u += du[c * hw + p] * u[c * hw + p];
    }
    mean_du *= inv_n;
    mean_du_u *= inv_n;
    for (std::size_t p = 0; p < hw; ++p) {
      dv[c * hw + p] = (du[c * hw + p] - mean_du - u[c * hw + p] * mean_du_u) / scales[c];
    }
  }
  return dv;
}

std::vector<double> to_double(const Tensor& t) { return {t.data.begin(), t.data.end()}; }

Tensor to_tensor(const Shape& s, const std::vector<double>& v) {
  Tensor t(s);
  for (std::size_t i = 0; i < v.size(); ++i) t.data[i] = static_cast<float>(v[i]);
  return t;
}

}  // namespace

void DistillConfig::validate() const {
  check_temperature(temperature);
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    fail(ErrorCode::kInvalidConfig, "learning rate must be positive");
  }
  if (epochs < 0) fail(ErrorCode::kInvalidConfig, "epochs must be >= 0");
  if (batch_size < 0) fail(ErrorCode::kInvalidConfig, "batch size must be >= 0");
}

std::vector<double> soften(std::span<const double> logits, double temperature) {
  check_temperature(temperature);
  if (logits.empty()) return {};
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - m) / temperature);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

LossWithGrad kl_loss(std::span<const double> student, std::span<const double> teacher, double temperature,
                     KlScale scale) {
  check_temperature(temperature);
  if (student.size() != teacher.size() || student.empty()) {
    fail(ErrorCode::kLengthMismatch, "student has " + std::to_string(student.size()) + " logits, teacher " +
                                         std::to_string(teacher.size()));
  }
  const auto ps = soften(student, temperature);
  const auto pt = soften(teacher, temperature);
  const double factor = scale == KlScale::kTau ? temperature : temperature * temperature;
  LossWithGrad out;
  out.grad.resize(student.size());
  double kl = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (pt[i] > 0.0) kl += pt[i] * (std::log(pt[i]) - std::log(ps[i]));
    // d/dz_s of τ·KL is (p_s − p_t); each extra τ factor scales it.
    out.grad[i] = factor / temperature * (ps[i] - pt[i]);
  }
  out.loss = factor * kl;
  return out;
}

LossWithGrad mse_loss(std::span<const double> student, std::span<const double> teacher) {
  if (student.size() != teacher.size() || student.empty()) {
    fail(ErrorCode::kLengthMismatch, "student has " + std::to_string(student.size()) + " values, target " +
                                         std::to_string(teacher.size()));
  }
  const double n = static_cast<double>(student.size());
  LossWithGrad out;
  out.grad.resize(student.size());
  for (std::size_t i = 0; i < student.size(); ++i) {
    const double d = student[i] - teacher[i];
    out.loss += d * d;
    out.grad[i] = 2.0 * d / n;
  }
  out.loss /= n;
  return out;
}

Adapter Adapter::create(const Shape& student_features, int teacher_channels, std::uint64_t seed) {
  if (student_features.c <= 0 || student_features.c > teacher_channels) {
    fail(ErrorCode::kInvalidConfig, "adapter needs 0 < student channels (" + std::to_string(student_features.c) +
                                        ") <= teacher channels (" + std::to_string(teacher_channels) + ")");
  }
  Adapter a{LayerGraph(student_features)};
  a.graph.add_conv("adapter", "adapter", InputRef{}, student_features.c, teacher_channels, 1, 1, 0);
  init_weights(a.graph, Rng(seed).split("adapter"));
  return a;
}

Adapter Adapter::embedding(const Shape& student_features, int teacher_channels) {
  Adapter a = create(student_features, teacher_channels, 0);
  auto& l = a.graph.mutable_layer(0);
  std::fill(l.weight.begin(), l.weight.end(), 0.0f);
  std::fill(l.bias.begin(), l.bias.end(), 0.0f);
  for (int i = 0; i < student_features.c; ++i) l.weight[static_cast<std::size_t>(i) * student_features.c + i] = 1.0f;
  return a;
}

AlignResult align_and_loss(const Tensor& student_features, const Tensor& teacher_features, const Adapter& adapter,
                           const DistillConfig& config) {
  if (student_features.shape != adapter.graph.input_shape()) {
    fail(ErrorCode::kShapeMismatch, "student features " + to_string(student_features.shape) +
                                        " do not match adapter input " + to_string(adapter.graph.input_shape()));
  }
  const auto trace = forward_trace(adapter.graph, student_features);
  const Shape s = trace.output().shape;
  if (teacher_features.shape != s) {
    fail(ErrorCode::kShapeMismatch, "adapted student features " + to_string(s) + " do not match teacher " +
                                        to_string(teacher_features.shape));
  }
  const auto vs = to_double(trace.output());
  const auto vt = to_double(teacher_features);
  std::vector<double> aux;
  std::vector<double> us, ut;
  if (config.feature_norm == FeatureNorm::kPixelL2) {
    us = pixel_l2(vs, s, &aux);
    ut = pixel_l2(vt, s, nullptr);
  } else {
    us = channel_standardize(vs, s, &aux);
    ut = channel_standardize(vt, s, nullptr);
  }

  AlignResult out;
  std::vector<double> du;
  if (config.loss_kind == LossKind::kMse) {
    auto l = mse_loss(us, ut);
    out.loss = l.loss;
    du = std::move(l.grad);
  } else {
    // KL between per-pixel channel distributions, averaged over pixels.
    const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
    du.assign(us.size(), 0.0);
    std::vector<double> a(s.c), b(s.c);
    for (std::size_t p = 0; p < hw; ++p) {
      for (int c = 0; c < s.c; ++c) {
        a[c] = us[c * hw + p];
        b[c] = ut[c * hw + p];
      }
      auto l = kl_loss(a, b, config.temperature, config.kl_scale);
      out.loss += l.loss / static_cast<double>(hw);
      for (int c = 0; c < s.c; ++c) du[c * hw + p] = l.grad[c] / static_cast<double>(hw);
    }
  }
  const auto dv = config.feature_norm == FeatureNorm::kPixelL2 ? pixel_l2_backward(us, du, aux, s)
                                                                : channel_standardize_backward(us, du, aux, s);
  auto grads = backward(adapter.graph, trace, to_tensor(s, dv));
  out.student_grad = std::move(grads.input);
  out.adapter_grads = std::move(grads);
  return out;
}

void sgd_step(LayerGraph& graph, const Gradients& grads, double learning_rate) {
  if (grads.layers.size() != graph.size()) {
    fail(ErrorCode::kShapeMismatch, "gradient has " + std::to_string(grads.layers.size()) + " layers, graph " +
                                        std::to_string(graph.size()));
  }
  for (std::size_t i = 0; i < graph.size(); ++i) {
    auto& l = graph.mutable_layer(i);
    const auto& g = grads.layers[i];
    if (g.weight.size() != l.weight.size() || g.bias.size() != l.bias.size()) {
      fail(ErrorCode::kShapeMismatch, "gradient for layer " + l.name + " has the wrong size");
    }
    const float eta = static_cast<float>(learning_rate);
    for (std::size_t k = 0; k < l.weight.size(); ++k) l.weight[k] -= eta * g.weight[k];
    for (std::size_t k = 0; k < l.bias.size(); ++k) l.bias[k] -= eta * g.bias[k];
  }
}

InputSampler fixed_batch(std::vector<Tensor> inputs) {
  return [inputs = std::move(inputs)](int) { return inputs; };
}

std::vector<Tensor> random_inputs(const Shape& shape, std::size_t count, const Rng& rng) {
  Rng r = rng;
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Tensor t(shape);
    for (float& v : t.data) v = static_cast<float>(r.uniform(-1.0, 1.0));
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

// Sample order for one epoch: identity for full-batch steps, a seeded
// shuffle for mini-batches.
std::vector<std::size_t> epoch_order(std::size_t n, const DistillConfig& config, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (config.batch_size > 0 && static_cast<std::size_t>(config.batch_size) < n) {
    Rng r = Rng(config.seed).split("epoch-" + std::to_string(epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[r.below(i)]);
  }
  return order;
}

std::size_t step_size(std::size_t n, const DistillConfig& config) {
  return config.batch_size == 0 ? n : std::min<std::size_t>(n, config.batch_size);
}

std::vector<Tensor> epoch_batch(const InputSampler& sampler, int epoch) {
  auto batch = sampler(epoch);
  if (batch.empty()) fail(ErrorCode::kEmptyInput, "input sampler returned no samples");
  return batch;
}

}  // namespace

TrainResult align_train(const LayerGraph& student, const Adapter& adapter, const DistillConfig& config,
                        const InputSampler& sampler, const TargetFn& target) {
  config.validate();
  TrainResult r{student, adapter, {}};
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batch = epoch_batch(sampler, epoch);
    const std::size_t n = batch.size();
    const auto order = epoch_order(n, config, epoch);
    const std::size_t m = step_size(n, config);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += m) {
      const std::size_t end = std::min(n, start + m);
      const float w = 1.0f / static_cast<float>(end - start);
      auto gs = zero_gradients(r.graph);
      auto ga = zero_gradients(r.adapter.graph);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const Tensor goal = target(batch[i], i, epoch);
        const auto trace = forward_trace(r.graph, batch[i]);
        const auto aligned = align_and_loss(trace.output(), goal, r.adapter, config);
        total += aligned.loss;
        accumulate(gs, backward(r.graph, trace, aligned.student_grad), w);
        accumulate(ga, aligned.adapter_grads, w);
      }
      sgd_step(r.graph, gs, config.learning_rate);
      sgd_step(r.adapter.graph, ga, config.learning_rate);
    }
    r.loss_trace.push_back(total / static_cast<double>(n));
  }
  return r;
}

TrainResult distill_train(const LayerGraph& teacher, const LayerGraph& student, const Adapter& adapter,
                          const DistillConfig& config, const InputSampler& sampler) {
  return align_train(student, adapter, config, sampler,
                     [&teacher](const Tensor& x, std::size_t, int) { return forward(teacher, x); });
}

TrainResult fine_tune(const LayerGraph& pruned, const LayerGraph& reference, const DistillConfig& config,
                      const InputSampler& sampler) {
  config.validate();
  TrainResult r;
  r.graph = pruned;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batch = epoch_batch(sampler, epoch);
    const std::size_t n = batch.size();
    const auto order = epoch_order(n, config, epoch);
    const std::size_t m = step_size(n, config);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += m) {
      const std::size_t end = std::min(n, start + m);
      const float w = 1.0f / static_cast<float>(end - start);
      auto g = zero_gradients(r.graph);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const auto goal = to_double(forward(reference, batch[i]));
        const auto trace = forward_trace(r.graph, batch[i]);
        const auto loss = mse_loss(to_double(trace.output()), goal);
        total += loss.loss;
        accumulate(g, backward(r.graph, trace, to_tensor(trace.output().shape, loss.grad)), w);
      }
      sgd_step(r.graph, g, config.learning_rate);
    }
    r.loss_trace.push_back(total / static_cast<double>(n));
  }
  return r;
}

double output_mse(const LayerGraph& model, const LayerGraph& reference, const std::vector<Tensor>& inputs) {
  if (inputs.empty()) fail(ErrorCode::kEmptyInput, "no inputs");
  double total = 0.0;
  for (const auto& x : inputs) total += mse_loss(to_double(forward(model, x)), to_double(forward(reference, x))).loss;
  return total / static_cast<double>(inputs.size());
}

double feature_alignment_loss(const LayerGraph& student, const Adapter& adapter, const LayerGraph& teacher,
                              const std::vector<Tensor>& inputs, const DistillConfig& config) {
  if (inputs.empty()) fail(ErrorCode::kEmptyInput, "no inputs");
  double total = 0.0;
  for (const auto& x : inputs) {
    total += align_and_loss(forward(student, x), forward(teacher, x), adapter, config).loss;
  }
  return total / static_cast<double>(inputs.size());
}

std::string loss_trace_csv(const std::vector<double>& trace) {
  std::string out = "epoch,mean_loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) out += std::to_string(i) + "," + format_real(trace[i]) + "\n";
  return out;
}

}  // namespace fastpose
