#include "mia/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "mia/error.hpp"
#include "rng.hpp"

namespace mia {

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "softmax of empty vector");
  }
  double max = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kInvalidArgument, "softmax of non-finite logit");
    }
    max = std::max(max, v);
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

Label argmax(std::span<const double> values) {
  Label best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<Label>(i);
  }
  return best;
}

MlpModel::MlpModel(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "model has no layers");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.in == 0 || layer.out == 0 ||
        layer.weights.size() != layer.in * layer.out ||
        layer.bias.size() != layer.out) {
      throw Error(ErrorCode::kInvalidArgument,
                  "layer " + std::to_string(l) + " has inconsistent dims");
    }
    if (l > 0 && layers_[l - 1].out != layer.in) {
      throw Error(ErrorCode::kInvalidArgument,
                  "layer " + std::to_string(l) + " input does not match");
    }
    auto finite = [](float v) { return std::isfinite(v); };
    if (!std::all_of(layer.weights.begin(), layer.weights.end(), finite) ||
        !std::all_of(layer.bias.begin(), layer.bias.end(), finite)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "layer " + std::to_string(l) + " has non-finite parameters");
    }
  }
}

MlpModel MlpModel::initialized(std::vector<std::size_t> widths,
                               std::uint64_t seed) {
  if (widths.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "need at least two widths");
  }
  auto rng = detail::make_stream(seed, 0x1417);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    DenseLayer layer;
    layer.in = widths[l];
    layer.out = widths[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    layer.weights.resize(layer.in * layer.out);
    for (float& w : layer.weights) {
      w = static_cast<float>((2.0 * detail::uniform01(rng) - 1.0) * limit);
    }
    layer.bias.assign(layer.out, 0.0f);
    layers.push_back(std::move(layer));
  }
  return MlpModel(std::move(layers));
}

std::vector<std::size_t> MlpModel::widths() const {
  std::vector<std::size_t> w{layers_.front().in};
  for (const auto& layer : layers_) w.push_back(layer.out);
  return w;
}

namespace {

// Forward pass keeping every layer's post-activation output.
void forward(const std::vector<DenseLayer>& layers, std::span<const float> x,
             std::vector<std::vector<float>>& acts) {
  acts.resize(layers.size() + 1);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const auto& in = acts[l];
    auto& out = acts[l + 1];
    out.resize(layer.out);
    const bool hidden = l + 1 < layers.size();
    for (std::size_t o = 0; o < layer.out; ++o) {
      const float* row = layer.weights.data() + o * layer.in;
      float sum = layer.bias[o];
      for (std::size_t i = 0; i < layer.in; ++i) sum += row[i] * in[i];
      out[o] = hidden ? std::max(sum, 0.0f) : sum;
    }
  }
}

}  // namespace

std::vector<double> MlpModel::logits(std::span<const float> x) const {
  if (x.size() != input_size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "input has " + std::to_string(x.size()) +
                    " values, model expects " + std::to_string(input_size()));
  }
  thread_local std::vector<std::vector<float>> acts;
  forward(layers_, x, acts);
  return {acts.back().begin(), acts.back().end()};
}

Label predict_label(const MlpModel& model, const Sample& x) {
  const auto z = model.logits(x.view());
  return argmax(z);
}

void TrainConfig::validate() const {
  if (batch_size == 0) {
    throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  }
  if (!(learning_rate > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "learning_rate must be > 0");
  }
}

MlpModel train_mlp(const Dataset& train, const TrainConfig& config) {
  config.validate();
  if (train.size() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "training set is empty");
  }
  std::vector<std::size_t> widths{train.shape().size()};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(train.n_classes());
  MlpModel model = MlpModel::initialized(widths, config.seed);
  auto& layers = model.mutable_layers();

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  struct Moments {
    std::vector<double> gw, gb, mw, mb, vw, vb;
  };
  std::vector<Moments> moments(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& m = moments[l];
    const std::size_t nw = layers[l].weights.size(), nb = layers[l].bias.size();
    m.gw.assign(nw, 0.0); m.mw.assign(nw, 0.0); m.vw.assign(nw, 0.0);
    m.gb.assign(nb, 0.0); m.mb.assign(nb, 0.0); m.vb.assign(nb, 0.0);
  }

  auto rng = detail::make_stream(config.seed, 0x5bff1e);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<float>> acts;
  std::vector<std::vector<double>> deltas(layers.size());
  std::uint64_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    detail::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (auto& m : moments) {
        std::fill(m.gw.begin(), m.gw.end(), 0.0);
        std::fill(m.gb.begin(), m.gb.end(), 0.0);
      }
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& item = train[order[k]];
        forward(layers, item.sample.view(), acts);
        std::vector<double> z(acts.back().begin(), acts.back().end());
        if (!std::all_of(z.begin(), z.end(), [](double v) { return std::isfinite(v); })) {
          throw TrainingFailure("non-finite logits at epoch " + std::to_string(epoch), epoch);
        }
        const auto p = softmax(z);
        batch_loss -= std::log(std::max(p[item.label], 1e-300));
        // Output delta of cross-entropy over softmax.
        deltas.back().assign(p.begin(), p.end());
        deltas.back()[item.label] -= 1.0;
        for (std::size_t l = layers.size(); l-- > 0;) {
          const auto& layer = layers[l];
          const auto& in = acts[l];
          auto& m = moments[l];
          const auto& d = deltas[l];
          for (std::size_t o = 0; o < layer.out; ++o) {
            if (d[o] == 0.0) continue;
            double* g = m.gw.data() + o * layer.in;
            for (std::size_t i = 0; i < layer.in; ++i) g[i] += d[o] * in[i];
            m.gb[o] += d[o];
          }
          if (l == 0) break;
          auto& prev = deltas[l - 1];
          prev.assign(layer.in, 0.0);
          for (std::size_t o = 0; o < layer.out; ++o) {
            if (d[o] == 0.0) continue;
            const float* row = layer.weights.data() + o * layer.in;
            for (std::size_t i = 0; i < layer.in; ++i) prev[i] += d[o] * row[i];
          }
          for (std::size_t i = 0; i < layer.in; ++i) {
            if (in[i] <= 0.0f) prev[i] = 0.0;  // ReLU'
          }
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingFailure("loss diverged at epoch " + std::to_string(epoch),
                              epoch);
      }
      ++step;
      const double scale = 1.0 / static_cast<double>(end - start);
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      auto adam = [&](std::vector<float>& param, std::vector<double>& grad,
                      std::vector<double>& m1, std::vector<double>& m2) {
        for (std::size_t i = 0; i < param.size(); ++i) {
          const double g = grad[i] * scale;
          m1[i] = kBeta1 * m1[i] + (1.0 - kBeta1) * g;
          m2[i] = kBeta2 * m2[i] + (1.0 - kBeta2) * g * g;
          const double update =
              config.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + kEps);
          param[i] = static_cast<float>(param[i] - update);
        }
      };
      for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& m = moments[l];
        adam(layers[l].weights, m.gw, m.mw, m.vw);
        adam(layers[l].bias, m.gb, m.mb, m.vb);
      }
    }
  }
  return model;
}

double accuracy(const MlpModel& model, const Dataset& data) {
  std::size_t correct = 0;
  for (const auto& item : data.samples()) {
    if (predict_label(model, item.sample) == item.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::string model_to_json(const MlpModel& model) {
  nlohmann::json doc;
  doc["widths"] = model.widths();
  auto& layers = doc["layers"] = nlohmann::json::array();
  for (const auto& layer : model.layers()) {
    nlohmann::json w = nlohmann::json::array();
    for (std::size_t o = 0; o < layer.out; ++o) {
      w.push_back(std::vector<float>(layer.weights.begin() + o * layer.in,
                                     layer.weights.begin() + (o + 1) * layer.in));
    }
    layers.push_back({{"w", std::move(w)}, {"b", layer.bias}});
  }
  return doc.dump();
}

MlpModel model_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("model json: ") + e.what());
  }
  try {
    const auto widths = doc.at("widths").get<std::vector<std::size_t>>();
    const auto& jl = doc.at("layers");
    if (jl.size() + 1 != widths.size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "model json: widths and layers disagree");
    }
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l < jl.size(); ++l) {
      DenseLayer layer;
      layer.in = widths[l];
      layer.out = widths[l + 1];
      const auto rows = jl[l].at("w").get<std::vector<std::vector<float>>>();
      if (rows.size() != layer.out) {
        throw Error(ErrorCode::kInvalidArgument, "model json: bad row count");
      }
      for (const auto& row : rows) {
        if (row.size() != layer.in) {
          throw Error(ErrorCode::kInvalidArgument, "model json: bad row width");
        }
        layer.weights.insert(layer.weights.end(), row.begin(), row.end());
      }
      layer.bias = jl[l].at("b").get<std::vector<float>>();
      layers.push_back(std::move(layer));
    }
    return MlpModel(std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("model json: ") + e.what());
  }
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << model_to_json(model) << '\n';
}

MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

}  // namespace mia
