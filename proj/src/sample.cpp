#include "mia/sample.hpp"

#include <cmath>
#include <string>

#include "mia/error.hpp"

namespace mia {

Sample::Sample(std::vector<float> data, Shape shape)
    : data_(std::move(data)), shape_(shape) {
  if (shape_.height == 0 || shape_.width == 0 || shape_.channels == 0) {
    throw Error(ErrorCode::kInvalidArgument, "sample shape dims must be >= 1");
  }
  if (data_.size() != shape_.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "sample has " + std::to_string(data_.size()) +
                    " values but shape needs " + std::to_string(shape_.size()));
  }
  for (float v : data_) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "sample component outside [0,1]: " + std::to_string(v));
    }
  }
}

Sample Sample::flat(std::vector<float> data) {
  const std::size_t n = data.size();
  return Sample(std::move(data), Shape{1, n, 1});
}

const char* to_string(DatasetRole role) {
  switch (role) {
    case DatasetRole::kTrain: return "train";
    case DatasetRole::kTest: return "test";
    case DatasetRole::kAux: return "aux";
  }
  return "unknown";
}

Dataset::Dataset(std::vector<LabeledSample> samples, std::size_t n_classes,
                 DatasetRole role)
    : samples_(std::move(samples)), n_classes_(n_classes), role_(role) {
  if (samples_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "dataset is empty");
  }
  const Shape& shape = samples_.front().sample.shape();
  for (const auto& s : samples_) {
    if (!(s.sample.shape() == shape)) {
      throw Error(ErrorCode::kInvalidArgument, "dataset shapes differ");
    }
    if (s.label >= n_classes_) {
      throw Error(ErrorCode::kInvalidArgument,
                  "label " + std::to_string(s.label) + " >= n_classes " +
                      std::to_string(n_classes_));
    }
  }
}

double l2_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kInvalidArgument, "l2_distance: size mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return std::sqrt(sum);
}

}  // namespace mia
