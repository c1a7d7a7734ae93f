#include "mia/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "mia/error.hpp"
#include "rng.hpp"

namespace mia {

namespace {

constexpr std::size_t kCoarseGrid = 3;

// Coarse random grid, bilinearly upsampled to the image resolution, so that
// one-pixel shifts of a center stay close to it.
std::vector<double> smooth_center(const Shape& shape, std::mt19937_64& rng) {
  std::vector<double> coarse(kCoarseGrid * kCoarseGrid * shape.channels);
  for (double& v : coarse) v = 0.15 + 0.7 * detail::uniform01(rng);
  std::vector<double> out(shape.size());
  auto axis = [](std::size_t i, std::size_t n, std::size_t& lo, double& frac) {
    const double pos =
        n > 1 ? static_cast<double>(i) * (kCoarseGrid - 1) / static_cast<double>(n - 1) : 0.0;
    lo = std::min<std::size_t>(static_cast<std::size_t>(pos), kCoarseGrid - 2);
    frac = pos - static_cast<double>(lo);
  };
  for (std::size_t r = 0; r < shape.height; ++r) {
    std::size_t r0;
    double fr;
    axis(r, shape.height, r0, fr);
    for (std::size_t c = 0; c < shape.width; ++c) {
      std::size_t c0;
      double fc;
      axis(c, shape.width, c0, fc);
      for (std::size_t ch = 0; ch < shape.channels; ++ch) {
        auto at = [&](std::size_t rr, std::size_t cc) {
          return coarse[(rr * kCoarseGrid + cc) * shape.channels + ch];
        };
        const double top = at(r0, c0) * (1 - fc) + at(r0, c0 + 1) * fc;
        const double bottom = at(r0 + 1, c0) * (1 - fc) + at(r0 + 1, c0 + 1) * fc;
        out[(r * shape.width + c) * shape.channels + ch] = top * (1 - fr) + bottom * fr;
      }
    }
  }
  return out;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<unsigned char, 4> b = {
      static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
      static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b.data()), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw Error(ErrorCode::kIoError, "dataset file truncated");
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

constexpr char kMagic[] = "MIADS1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

}  // namespace

Dataset make_synthetic_dataset(const SyntheticSpec& spec, DatasetRole role) {
  if (spec.n_classes < 2) {
    throw Error(ErrorCode::kInvalidArgument, "n_classes must be >= 2");
  }
  if (spec.n_per_class == 0) {
    throw Error(ErrorCode::kInvalidArgument, "n_per_class must be >= 1");
  }
  if (!(spec.cluster_spread > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "cluster_spread must be > 0");
  }
  if (!(spec.contrast_min > 0.0) || spec.contrast_max < spec.contrast_min) {
    throw Error(ErrorCode::kInvalidArgument, "bad contrast range");
  }
  if (spec.shape.size() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "shape dims must be >= 1");
  }
  if (2 * spec.margin >= spec.shape.height || 2 * spec.margin >= spec.shape.width) {
    throw Error(ErrorCode::kInvalidArgument, "margin leaves no interior");
  }
  const Shape inner{spec.shape.height - 2 * spec.margin, spec.shape.width - 2 * spec.margin,
                    spec.shape.channels};
  auto center_rng = detail::make_stream(spec.seed, 0xce47e5);
  std::vector<std::vector<double>> centers;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    centers.push_back(smooth_center(inner, center_rng));
  }
  auto rng = detail::make_stream(spec.seed, 0x5a3b1e);
  detail::Normal normal;
  std::vector<LabeledSample> samples;
  samples.reserve(spec.n_classes * spec.n_per_class);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    for (std::size_t k = 0; k < spec.n_per_class; ++k) {
      const double contrast =
          spec.contrast_min + (spec.contrast_max - spec.contrast_min) * detail::uniform01(rng);
      std::vector<float> data(spec.shape.size(), 0.0f);
      const std::size_t row_len = inner.width * inner.channels;
      for (std::size_t i = 0; i < inner.size(); ++i) {
        const double v = 0.5 + contrast * (centers[c][i] - 0.5) +
                         spec.cluster_spread * normal(rng);
        const std::size_t r = i / row_len + spec.margin;
        const std::size_t rest = i % row_len + spec.margin * spec.shape.channels;
        data[r * spec.shape.width * spec.shape.channels + rest] =
            static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
      samples.push_back({Sample(std::move(data), spec.shape), static_cast<Label>(c)});
    }
  }
  return Dataset(std::move(samples), spec.n_classes, role);
}

DatasetSplit split_dataset(const Dataset& all, std::size_t n_train_per_class,
                           std::size_t n_test_per_class, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(all.n_classes());
  for (std::size_t i = 0; i < all.size(); ++i) by_class[all[i].label].push_back(i);
  auto rng = detail::make_stream(seed, 0x5b117);
  std::vector<LabeledSample> train, test, aux;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.size() < n_train_per_class + n_test_per_class) {
      throw Error(ErrorCode::kInvalidArgument,
                  "class " + std::to_string(c) + " has too few samples to split");
    }
    detail::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto& dst = k < n_train_per_class ? train
                  : k < n_train_per_class + n_test_per_class ? test
                                                             : aux;
      dst.push_back(all[idx[k]]);
    }
  }
  DatasetSplit split{Dataset(std::move(train), all.n_classes(), DatasetRole::kTrain),
                     Dataset(std::move(test), all.n_classes(), DatasetRole::kTest),
                     {}};
  if (!aux.empty()) split.aux = Dataset(std::move(aux), all.n_classes(), DatasetRole::kAux);
  return split;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out.write(kMagic, kMagicLen);
  const Shape& shape = data.shape();
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  put_u32(out, static_cast<std::uint32_t>(shape.height));
  put_u32(out, static_cast<std::uint32_t>(shape.width));
  put_u32(out, static_cast<std::uint32_t>(shape.channels));
  put_u32(out, static_cast<std::uint32_t>(data.n_classes()));
  for (const auto& item : data.samples()) {
    for (float v : item.sample.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  for (const auto& item : data.samples()) put_u32(out, item.label);
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path, DatasetRole role) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  char magic[kMagicLen];
  if (!in.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0) {
    throw Error(ErrorCode::kIoError, path.string() + " is not a MIADS1 file");
  }
  const std::uint32_t n = get_u32(in);
  const Shape shape{get_u32(in), get_u32(in), get_u32(in)};
  const std::uint32_t n_classes = get_u32(in);
  std::vector<std::vector<float>> values(n, std::vector<float>(shape.size()));
  for (auto& row : values) {
    for (float& v : row) v = std::bit_cast<float>(get_u32(in));
  }
  std::vector<LabeledSample> samples;
  samples.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    samples.push_back({Sample(std::move(values[i]), shape), get_u32(in)});
  }
  return Dataset(std::move(samples), n_classes, role);
}

}  // namespace mia
