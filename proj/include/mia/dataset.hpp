#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mia/sample.hpp"

namespace mia {

struct SyntheticSpec {
  std::size_t n_classes = 4;
  std::size_t n_per_class = 50;
  Shape shape{8, 8, 1};
  double cluster_spread = 0.1;
  // Per-sample contrast factor range applied to (center - 0.5). A range of
  // [1,1] yields plain isotropic clusters.
  double contrast_min = 1.0;
  double contrast_max = 1.0;
  // Zero-valued border width; samples live in the interior.
  std::size_t margin = 0;
  std::uint64_t seed = 0;
};

// Gaussian clusters around spatially smooth class centers, clamped to [0,1].
// Samples are ordered class-major. Throws kInvalidArgument for
// n_classes < 2, n_per_class == 0 or cluster_spread <= 0.
Dataset make_synthetic_dataset(const SyntheticSpec& spec,
                               DatasetRole role = DatasetRole::kTrain);

struct DatasetSplit {
  Dataset train;
  Dataset test;
  Dataset aux;
};

// Stratified seeded split: per class, the first n_train go to train, the
// next n_test to test and the rest (if any) to aux.
DatasetSplit split_dataset(const Dataset& all, std::size_t n_train_per_class,
                           std::size_t n_test_per_class, std::uint64_t seed);

// MIADS1 binary format (little-endian).
void write_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path,
                     DatasetRole role = DatasetRole::kTrain);

}  // namespace mia
