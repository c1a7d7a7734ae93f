#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mia {

using Label = std::uint32_t;

struct Shape {
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 1;

  std::size_t size() const { return height * width * channels; }
  bool operator==(const Shape&) const = default;
};

// A point in the [0,1]^n input domain with HWC layout metadata.
class Sample {
 public:
  Sample() = default;
  // Throws kInvalidArgument if data.size() != shape.size(), a dim is zero,
  // or a component falls outside [0,1].
  Sample(std::vector<float> data, Shape shape);
  // Flat 1-row sample, shape (1, n, 1).
  static Sample flat(std::vector<float> data);

  const std::vector<float>& data() const { return data_; }
  std::span<const float> view() const { return data_; }
  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  float at(std::size_t row, std::size_t col, std::size_t ch) const {
    return data_[(row * shape_.width + col) * shape_.channels + ch];
  }

  bool operator==(const Sample&) const = default;

 private:
  std::vector<float> data_;
  Shape shape_;
};

struct LabeledSample {
  Sample sample;
  Label label = 0;
};

enum class DatasetRole { kTrain, kTest, kAux };

const char* to_string(DatasetRole role);

class Dataset {
 public:
  Dataset() = default;
  // Validates non-emptiness, a shared shape and label range.
  Dataset(std::vector<LabeledSample> samples, std::size_t n_classes,
          DatasetRole role);

  const std::vector<LabeledSample>& samples() const { return samples_; }
  const LabeledSample& operator[](std::size_t i) const { return samples_[i]; }
  std::size_t size() const { return samples_.size(); }
  std::size_t n_classes() const { return n_classes_; }
  DatasetRole role() const { return role_; }
  const Shape& shape() const { return samples_.front().sample.shape(); }

 private:
  std::vector<LabeledSample> samples_;
  std::size_t n_classes_ = 0;
  DatasetRole role_ = DatasetRole::kTrain;
};

// Euclidean distance between two equally sized points.
double l2_distance(std::span<const float> a, std::span<const float> b);

}  // namespace mia
