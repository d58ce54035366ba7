#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fastpose/rng.hpp"
#include "fastpose/tensornet.hpp"

namespace fastpose {

enum class LossKind { kKl, kMse };

// Leading factor of the KL loss: τ as written in the method description, or
// the τ² common in the distillation literature.
enum class KlScale { kTau, kTauSquared };

// How feature maps are normalized before the alignment loss.
enum class FeatureNorm { kPixelL2, kChannelStandardize };

struct DistillConfig {
  double temperature = 1.0;
  LossKind loss_kind = LossKind::kMse;
  double learning_rate = 0.01;
  int epochs = 1;
  int batch_size = 0;  // samples per SGD step; 0 = the whole batch
  std::uint64_t seed = 0;
  KlScale kl_scale = KlScale::kTau;
  FeatureNorm feature_norm = FeatureNorm::kPixelL2;

  // Throws InvalidTemperature (τ <= 0) or InvalidConfig.
  void validate() const;
};

struct LossWithGrad {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d student values
};

// Temperature softmax with max subtraction. Throws InvalidTemperature.
std::vector<double> soften(std::span<const double> logits, double temperature);

// scale · Σ_j p_t,j log(p_t,j / p_s,j) with scale = τ (or τ²).
// Throws LengthMismatch, InvalidTemperature.
LossWithGrad kl_loss(std::span<const double> student, std::span<const double> teacher,
                     double temperature, KlScale scale = KlScale::kTau);

// (1/N) Σ (s − t)². Throws LengthMismatch (also for N = 0).
LossWithGrad mse_loss(std::span<const double> student, std::span<const double> teacher);

// 1×1 conv lifting student feature channels to the teacher's width.
struct Adapter {
  LayerGraph graph;

  int student_channels() const { return graph.input_shape().c; }
  int teacher_channels() const { return graph.layer(0).out_channels; }

  // Throws InvalidConfig unless student_channels <= teacher_channels.
  static Adapter create(const Shape& student_features, int teacher_channels, std::uint64_t seed);
  // Copies student channel i to teacher channel i, zeros elsewhere.
  static Adapter embedding(const Shape& student_features, int teacher_channels);
};

struct AlignResult {
  double loss = 0.0;
  Tensor student_grad;        // d loss / d student features
  Gradients adapter_grads;    // d loss / d adapter parameters
};

// Adapts student features, normalizes both sides and returns the MSE (or KL
// over per-pixel channel distributions for LossKind::kKl) with gradients for
// the student features and adapter. Teacher features receive no gradient.
// Throws ShapeMismatch.
AlignResult align_and_loss(const Tensor& student_features, const Tensor& teacher_features,
                           const Adapter& adapter, const DistillConfig& config = {});

// w ← w − η·g over every parameter. Throws ShapeMismatch.
void sgd_step(LayerGraph& graph, const Gradients& grads, double learning_rate);

// Supplies the input batch for a given epoch.
using InputSampler = std::function<std::vector<Tensor>(int epoch)>;

InputSampler fixed_batch(std::vector<Tensor> inputs);
std::vector<Tensor> random_inputs(const Shape& shape, std::size_t count, const Rng& rng);

struct TrainResult {
  LayerGraph graph;
  Adapter adapter;               // unused by fine_tune
  std::vector<double> loss_trace;  // mean loss per epoch, measured before each step
};

// Target features for one input (index within the epoch's batch).
using TargetFn = std::function<Tensor(const Tensor& input, std::size_t index, int epoch)>;

// Trains `student` (+ adapter) so that its output features align with
// `target`. distill_train uses the frozen teacher's output as the target.
TrainResult align_train(const LayerGraph& student, const Adapter& adapter, const DistillConfig& config,
                        const InputSampler& sampler, const TargetFn& target);

TrainResult distill_train(const LayerGraph& teacher, const LayerGraph& student, const Adapter& adapter,
                          const DistillConfig& config, const InputSampler& sampler);

// Output-matching MSE between `pruned` and the frozen `reference`.
TrainResult fine_tune(const LayerGraph& pruned, const LayerGraph& reference, const DistillConfig& config,
                      const InputSampler& sampler);

// Mean output-matching MSE over the inputs.
double output_mse(const LayerGraph& model, const LayerGraph& reference, const std::vector<Tensor>& inputs);

// Mean align_and_loss value over the inputs (no training).
double feature_alignment_loss(const LayerGraph& student, const Adapter& adapter, const LayerGraph& teacher,
                              const std::vector<Tensor>& inputs, const DistillConfig& config = {});

// "epoch,mean_loss" with 17 significant digits.
std::string loss_trace_csv(const std::vector<double>& trace);

}  // namespace fastpose
