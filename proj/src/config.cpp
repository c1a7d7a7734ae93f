#include "mia/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mia/error.hpp"
#include "rng.hpp"

namespace mia {

namespace {

using nlohmann::json;

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void reject_unknown(const json& obj, const std::string& prefix,
                    std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(prefix.empty() ? "<root>" : prefix, "must be an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (!keys.count(key)) throw ConfigError(join(prefix, key), "unknown key");
  }
}

template <typename T>
void read(const json& obj, const std::string& prefix, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(join(prefix, key), "has the wrong type");
  }
}

void read_count(const json& obj, const std::string& prefix, const char* key,
                std::size_t& out, std::size_t min) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min)) {
    throw ConfigError(join(prefix, key), "must be an integer >= " + std::to_string(min));
  }
  out = v.get<std::size_t>();
}

void read_seed(const json& obj, const std::string& prefix, const char* key,
               std::uint64_t& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
    throw ConfigError(join(prefix, key), "must be a non-negative integer");
  }
  out = v.get<std::uint64_t>();
}

void parse_data(const json& j, DataConfig& d, const std::string& p) {
  reject_unknown(j, p, {"synthetic", "n_train_per_class", "n_test_per_class", "train", "test", "aux"});
  read_count(j, p, "n_train_per_class", d.n_train_per_class, 1);
  read_count(j, p, "n_test_per_class", d.n_test_per_class, 1);
  read(j, p, "train", d.train_path);
  read(j, p, "test", d.test_path);
  read(j, p, "aux", d.aux_path);
  const int given = !d.train_path.empty() + !d.test_path.empty() + !d.aux_path.empty();
  if (given != 0 && given != 3) {
    throw ConfigError(join(p, "train"), "train, test and aux paths must be given together");
  }
  if (j.contains("synthetic")) {
    const std::string sp = join(p, "synthetic");
    const auto& s = j.at("synthetic");
    reject_unknown(s, sp, {"n_classes", "n_per_class", "height", "width", "channels",
                           "margin", "spread", "contrast"});
    auto& spec = d.synthetic;
    read_count(s, sp, "n_classes", spec.n_classes, 2);
    read_count(s, sp, "n_per_class", spec.n_per_class, 1);
    read_count(s, sp, "height", spec.shape.height, 1);
    read_count(s, sp, "width", spec.shape.width, 1);
    read_count(s, sp, "channels", spec.shape.channels, 1);
    read_count(s, sp, "margin", spec.margin, 0);
    if (2 * spec.margin >= spec.shape.height || 2 * spec.margin >= spec.shape.width) {
      throw ConfigError(join(sp, "margin"), "must leave a non-empty interior");
    }
    read(s, sp, "spread", spec.cluster_spread);
    if (!(spec.cluster_spread > 0.0)) throw ConfigError(join(sp, "spread"), "must be > 0");
    if (s.contains("contrast")) {
      std::vector<double> range;
      read(s, sp, "contrast", range);
      if (range.size() != 2 || !(range[0] > 0.0) || range[1] < range[0]) {
        throw ConfigError(join(sp, "contrast"), "must be [min, max] with 0 < min <= max");
      }
      spec.contrast_min = range[0];
      spec.contrast_max = range[1];
    }
  }
}

void parse_model(const json& j, ModelConfig& m, const std::string& p) {
  reject_unknown(j, p, {"path", "hidden", "epochs", "batch_size", "learning_rate"});
  read(j, p, "path", m.path);
  read(j, p, "hidden", m.train.hidden);
  for (std::size_t w : m.train.hidden) {
    if (w == 0) throw ConfigError(join(p, "hidden"), "widths must be >= 1");
  }
  read_count(j, p, "epochs", m.train.epochs, 1);
  read_count(j, p, "batch_size", m.train.batch_size, 1);
  read(j, p, "learning_rate", m.train.learning_rate);
  if (!(m.train.learning_rate > 0.0)) throw ConfigError(join(p, "learning_rate"), "must be > 0");
}

void parse_attack(const json& j, AttackConfig& a, const std::string& p) {
  reject_unknown(j, p, {"kind", "T", "T_f", "r", "theta", "B0", "Bmax", "init_attempts",
                        "max_queries"});
  if (j.contains("kind")) {
    std::string kind;
    read(j, p, "kind", kind);
    try {
      a.kind = attack_kind_from_string(kind);
    } catch (const Error& e) {
      throw ConfigError(join(p, "kind"), e.what());
    }
  }
  read_count(j, p, "T", a.params.iterations, 1);
  a.multi.iterations = a.params.iterations;
  read_count(j, p, "T_f", a.multi.filter_period, 1);
  if (a.multi.filter_period > a.multi.iterations) {
    throw ConfigError(join(p, "T_f"), "must be in [1, T]");
  }
  read(j, p, "r", a.multi.keep_fraction);
  if (!(a.multi.keep_fraction > 0.0 && a.multi.keep_fraction < 1.0)) {
    throw ConfigError(join(p, "r"), "r must be in (0,1)");
  }
  read(j, p, "theta", a.params.theta);
  if (!(a.params.theta > 0.0 && a.params.theta < 1.0)) {
    throw ConfigError(join(p, "theta"), "theta must be in (0,1)");
  }
  read_count(j, p, "B0", a.params.probes_base, 4);
  read_count(j, p, "Bmax", a.params.probes_max, 4);
  if (a.params.probes_max < a.params.probes_base) {
    throw ConfigError(join(p, "Bmax"), "must be >= B0");
  }
  read_count(j, p, "init_attempts", a.params.init_attempts, 1);
  read_seed(j, p, "max_queries", a.params.max_queries);
}

template <typename Fn>
auto as_config_error(const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  reject_unknown(root, "", {"seed", "workers", "out_dir", "data", "model", "attack", "score",
                            "eval", "stability", "oracle"});
  ExperimentConfig c;
  read_seed(root, "", "seed", c.seed);
  read_count(root, "", "workers", c.workers, 1);
  read(root, "", "out_dir", c.out_dir);
  if (root.contains("data")) parse_data(root.at("data"), c.data, "data");
  if (root.contains("model")) parse_model(root.at("model"), c.model, "model");
  if (root.contains("attack")) parse_attack(root.at("attack"), c.attack, "attack");
  if (root.contains("score")) {
    const auto& s = root.at("score");
    reject_unknown(s, "score", {"kind"});
    std::string kind = to_string(c.score);
    read(s, "score", "kind", kind);
    c.score = as_config_error("score.kind", [&] { return score_kind_from_string(kind); });
  }
  if (root.contains("eval")) {
    const auto& e = root.at("eval");
    reject_unknown(e, "eval", {"kind", "n_per_side"});
    std::string kind = to_string(c.eval);
    read(e, "eval", "kind", kind);
    c.eval = as_config_error("eval.kind", [&] { return eval_kind_from_string(kind); });
    read_count(e, "eval", "n_per_side", c.n_per_side, 1);
  }
  if (root.contains("stability")) {
    const auto& s = root.at("stability");
    reject_unknown(s, "stability", {"repeats", "reference"});
    read_count(s, "stability", "repeats", c.stability_repeats, 1);
    read(s, "stability", "reference", c.stability_reference);
  }
  if (root.contains("oracle")) {
    const auto& o = root.at("oracle");
    reject_unknown(o, "oracle", {"url"});
    read(o, "oracle", "url", c.oracle_url);
  }
  return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["out_dir"] = c.out_dir;
  auto& d = j["data"];
  const auto& s = c.data.synthetic;
  d["synthetic"] = {{"n_classes", s.n_classes},
                    {"n_per_class", s.n_per_class},
                    {"height", s.shape.height},
                    {"width", s.shape.width},
                    {"channels", s.shape.channels},
                    {"margin", s.margin},
                    {"spread", s.cluster_spread},
                    {"contrast", {s.contrast_min, s.contrast_max}}};
  d["n_train_per_class"] = c.data.n_train_per_class;
  d["n_test_per_class"] = c.data.n_test_per_class;
  if (c.data.from_files()) {
    d["train"] = c.data.train_path;
    d["test"] = c.data.test_path;
    d["aux"] = c.data.aux_path;
  }
  auto& m = j["model"];
  if (!c.model.path.empty()) m["path"] = c.model.path;
  m["hidden"] = c.model.train.hidden;
  m["epochs"] = c.model.train.epochs;
  m["batch_size"] = c.model.train.batch_size;
  m["learning_rate"] = c.model.train.learning_rate;
  const auto& a = c.attack;
  j["attack"] = {{"kind", to_string(a.kind)},
                 {"T", a.params.iterations},
                 {"T_f", a.multi.filter_period},
                 {"r", a.multi.keep_fraction},
                 {"theta", a.params.theta},
                 {"B0", a.params.probes_base},
                 {"Bmax", a.params.probes_max},
                 {"init_attempts", a.params.init_attempts},
                 {"max_queries", a.params.max_queries}};
  j["score"] = {{"kind", to_string(c.score)}};
  j["eval"] = {{"kind", to_string(c.eval)}, {"n_per_side", c.n_per_side}};
  j["stability"] = {{"repeats", c.stability_repeats}, {"reference", c.stability_reference}};
  if (!c.oracle_url.empty()) j["oracle"] = {{"url", c.oracle_url}};
  return j.dump(2);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose, std::uint64_t index) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char ch : purpose) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return detail::splitmix64(detail::splitmix64(master ^ h) + index);
}

}  // namespace mia
