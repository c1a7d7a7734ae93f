#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mia/sample.hpp"

namespace mia {

// Numerically stable softmax (max-subtracted). Throws kInvalidArgument on
// empty or non-finite input.
std::vector<double> softmax(std::span<const double> logits);

// Index of the largest value; ties go to the lowest index.
Label argmax(std::span<const double> values);

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<float> weights;  // row-major, out x in
  std::vector<float> bias;     // out
};

// Fully connected network with ReLU hidden activations and a linear head.
class MlpModel {
 public:
  MlpModel() = default;
  // Throws kInvalidArgument on mismatched dims or non-finite parameters.
  explicit MlpModel(std::vector<DenseLayer> layers);

  // Glorot-uniform weights and zero biases from a seeded stream.
  static MlpModel initialized(std::vector<std::size_t> widths,
                              std::uint64_t seed);

  std::vector<std::size_t> widths() const;
  std::size_t input_size() const { return layers_.front().in; }
  std::size_t n_classes() const { return layers_.back().out; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  // Throws kInvalidArgument if x.size() != input_size().
  std::vector<double> logits(std::span<const float> x) const;

 private:
  std::vector<DenseLayer> layers_;
};

Label predict_label(const MlpModel& model, const Sample& x);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  double learning_rate = 0.001;
  std::vector<std::size_t> hidden = {64};
  std::uint64_t seed = 0;

  // Throws kInvalidArgument when batch_size == 0 or learning_rate <= 0.
  void validate() const;
};

// Mini-batch softmax cross-entropy training with Adam. Deterministic for a
// fixed (dataset, config). Throws TrainingFailure when the loss diverges.
MlpModel train_mlp(const Dataset& train, const TrainConfig& config);

double accuracy(const MlpModel& model, const Dataset& data);

std::string model_to_json(const MlpModel& model);
MlpModel model_from_json(const std::string& text);
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace mia
