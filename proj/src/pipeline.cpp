#include "mia/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <cmath>

#include <json.hpp>

#include "mia/error.hpp"

namespace mia {

namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  return out;
}

// Reads a CSV with the expected header; returns the data rows.
std::vector<std::vector<std::string>> read_csv(const fs::path& path,
                                               const std::string& header) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw Error(ErrorCode::kIoError, path.string() + ": expected header '" + header + "'");
  }
  const std::size_t columns = split_csv_line(header).size();
  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != columns) {
      throw Error(ErrorCode::kIoError,
                  path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(columns) + " columns");
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

template <typename T>
T parse_number(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    T v;
    if constexpr (std::is_same_v<T, double>) {
      v = std::stod(s, &used);
    } else {
      v = static_cast<T>(std::stoull(s, &used));
    }
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kIoError, path.string() + ": bad number '" + s + "'");
  }
}

bool parse_bool(const std::string& s, const fs::path& path) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw Error(ErrorCode::kIoError, path.string() + ": bad flag '" + s + "'");
}

constexpr PointKind kNeighborPoints[] = {PointKind::kUp, PointKind::kDown,
                                         PointKind::kLeft, PointKind::kRight};

}  // namespace

const char* to_string(PointKind p) {
  switch (p) {
    case PointKind::kSample: return "sample";
    case PointKind::kUp: return "up";
    case PointKind::kDown: return "down";
    case PointKind::kLeft: return "left";
    case PointKind::kRight: return "right";
  }
  return "unknown";
}

PointKind point_kind_from_string(const std::string& text) {
  for (PointKind p : {PointKind::kSample, PointKind::kUp, PointKind::kDown,
                      PointKind::kLeft, PointKind::kRight}) {
    if (text == to_string(p)) return p;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown point kind '" + text + "'");
}

void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

DatasetSplit load_or_generate_data(const ExperimentConfig& config) {
  const auto& d = config.data;
  if (d.from_files()) {
    return {read_dataset(d.train_path, DatasetRole::kTrain),
            read_dataset(d.test_path, DatasetRole::kTest),
            read_dataset(d.aux_path, DatasetRole::kAux)};
  }
  SyntheticSpec spec = d.synthetic;
  spec.seed = derive_seed(config.seed, "data");
  if (spec.n_per_class <= d.n_train_per_class + d.n_test_per_class) {
    throw ConfigError("data.synthetic.n_per_class",
                      "must exceed n_train_per_class + n_test_per_class so that "
                      "auxiliary samples remain");
  }
  const Dataset all = make_synthetic_dataset(spec);
  return split_dataset(all, d.n_train_per_class, d.n_test_per_class,
                       derive_seed(config.seed, "split"));
}

void write_split(const DatasetSplit& split, const fs::path& dir) {
  write_dataset(split.train, dir / artifact::kTrain);
  write_dataset(split.test, dir / artifact::kTest);
  write_dataset(split.aux, dir / artifact::kAux);
}

DatasetSplit read_split(const fs::path& dir) {
  return {read_dataset(dir / artifact::kTrain, DatasetRole::kTrain),
          read_dataset(dir / artifact::kTest, DatasetRole::kTest),
          read_dataset(dir / artifact::kAux, DatasetRole::kAux)};
}

MlpModel load_or_train_model(const ExperimentConfig& config, const Dataset& train) {
  if (!config.model.path.empty()) return load_model(config.model.path);
  TrainConfig tc = config.model.train;
  tc.seed = derive_seed(config.seed, "model");
  return train_mlp(train, tc);
}

std::unique_ptr<HardLabelOracle> make_oracle(const ExperimentConfig& config,
                                             const MlpModel* model, std::size_t n_classes) {
  if (!config.oracle_url.empty()) {
    return std::make_unique<RemoteOracle>(config.oracle_url, n_classes);
  }
  if (model == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "in-process oracle needs a model");
  }
  return std::make_unique<ModelOracle>(*model);
}

EvalSet build_eval_set(const ExperimentConfig& config, const DatasetSplit& split,
                       const HardLabelOracle& oracle) {
  const auto seed = derive_seed(config.seed, "eval");
  if (config.eval == EvalKind::kBalanced) {
    try {
      return build_balanced_set(split.train, split.test, config.n_per_side, seed);
    } catch (const Error& e) {
      throw Error(ErrorCode::kInsufficientCorrect, e.what());
    }
  }
  return build_cbalanced_set(split.train, split.test, oracle, config.n_per_side, seed);
}

AttackSetup attack_setup(const ExperimentConfig& config, const Dataset* aux,
                         std::size_t sample_id) {
  AttackSetup setup;
  setup.kind = config.attack.kind;
  setup.params = config.attack.params;
  setup.params.seed = derive_seed(config.seed, "attack", sample_id);
  setup.multi = config.attack.multi;
  // One fixed initial image per class, shared by every sample.
  setup.multi.seed = derive_seed(config.seed, "aux");
  setup.aux = aux;
  return setup;
}

AttackTable attack_stage(const ExperimentConfig& config, const EvalSet& set,
                         const Dataset& aux, const HardLabelOracle& oracle) {
  const std::size_t n = set.entries.size();
  std::vector<std::vector<AttackRow>> rows(n);
  std::vector<std::vector<TraceExportRow>> traces(n);
  const bool attack = config.score != ScoreKind::kBaselineGap;
  const bool neighbors = config.score == ScoreKind::kRelativeDistance;

  parallel_for(n, config.workers, [&](std::size_t i) {
    const auto& entry = set.entries[i];
    const AttackSetup setup = attack_setup(config, &aux, i);
    auto run_point = [&](const Sample& x, PointKind point, std::string_view phase) {
      AttackRow row;
      row.sample_id = i;
      row.is_member = entry.is_member;
      row.point = point;
      row.label = entry.item.label;
      row.oracle_label = oracle.query(x, phase);
      row.queries = 1;
      if (attack && row.oracle_label == entry.item.label) {
        auto result = run_boundary_attack(x, entry.item.label, oracle, setup);
        row.attacked = true;
        row.distance = result.distance;
        row.queries += result.queries;
        row.target_class = result.target_class;
        if (point == PointKind::kSample) {
          for (const auto& t : result.trace.rows) traces[i].push_back({i, t});
        }
      }
      rows[i].push_back(row);
    };
    run_point(entry.item.sample, PointKind::kSample, "label");
    if (neighbors) {
      const auto set_n = neighboring_points(entry.item.sample);
      for (std::size_t k = 0; k < 4; ++k) {
        run_point(set_n.neighbors[k], kNeighborPoints[k], "neighbor");
      }
    }
  });

  AttackTable table;
  for (std::size_t i = 0; i < n; ++i) {
    table.rows.insert(table.rows.end(), rows[i].begin(), rows[i].end());
    table.trace.insert(table.trace.end(), traces[i].begin(), traces[i].end());
  }
  return table;
}

std::vector<ScoreRecord> score_stage(ScoreKind kind, const std::vector<AttackRow>& rows) {
  std::vector<ScoreRecord> out;
  std::size_t i = 0;
  while (i < rows.size()) {
    const std::size_t id = rows[i].sample_id;
    const AttackRow* sample = nullptr;
    std::vector<double> neighbor_d;
    std::uint64_t queries = 0;
    bool is_member = rows[i].is_member;
    for (; i < rows.size() && rows[i].sample_id == id; ++i) {
      queries += rows[i].queries;
      if (rows[i].point == PointKind::kSample) {
        sample = &rows[i];
      } else {
        neighbor_d.push_back(rows[i].distance);
      }
    }
    if (sample == nullptr) {
      throw Error(ErrorCode::kInvalidArgument,
                  "attack table has no sample row for id " + std::to_string(id));
    }
    ScoreRecord rec{id, is_member, 0.0, kind, queries};
    switch (kind) {
      case ScoreKind::kSingleDistance:
        rec.score = sample->distance;
        break;
      case ScoreKind::kRelativeDistance:
        if (neighbor_d.size() != 4) {
          throw Error(ErrorCode::kInvalidArgument,
                      "relative score needs four neighbor rows for id " + std::to_string(id));
        }
        rec.score = relative_score(sample->distance, neighbor_d);
        break;
      case ScoreKind::kBaselineGap:
        rec.score = sample->oracle_label == sample->label ? 1.0 : 0.0;
        break;
    }
    out.push_back(rec);
  }
  return out;
}

std::vector<StabilityRecord> stability_stage(const ExperimentConfig& config,
                                             const EvalSet& set, const Dataset& aux,
                                             const HardLabelOracle& oracle) {
  std::vector<StabilityRecord> out(set.entries.size());
  parallel_for(set.entries.size(), config.workers, [&](std::size_t i) {
    const auto& entry = set.entries[i];
    const Sample& x = entry.item.sample;
    const Label y = entry.item.label;
    std::vector<double> distances;
    std::vector<Label> targets;
    if (oracle.query(x, "label") != y) {
      distances.assign(config.stability_repeats, 0.0);
      targets.assign(config.stability_repeats, y);
      out[i] = summarize_repeats(i, entry.is_member, distances, targets, INFINITY);
      return;
    }
    const std::uint64_t base = derive_seed(config.seed, "stability", i);
    for (std::size_t r = 0; r < config.stability_repeats; ++r) {
      HsjaParams params = config.attack.params;
      params.seed = derive_seed(base, "repeat", r);
      const auto result = untargeted_hsja(x, y, oracle, params);
      distances.push_back(result.distance);
      targets.push_back(result.adversarial_label);
    }
    double reference = INFINITY;
    if (config.stability_reference) {
      AttackSetup setup = attack_setup(config, &aux, i);
      setup.kind = AttackKind::kMultiTargeted;
      reference = run_boundary_attack(x, y, oracle, setup).distance;
    }
    out[i] = summarize_repeats(i, entry.is_member, distances, targets, reference);
  });
  return out;
}

void write_attack_csv(const std::vector<AttackRow>& rows, const fs::path& path) {
  auto out = open_out(path);
  out << "sample_id,is_member,point,label,oracle_label,attacked,distance,queries,target_class\n";
  for (const auto& r : rows) {
    out << r.sample_id << ',' << (r.is_member ? 1 : 0) << ',' << to_string(r.point) << ','
        << r.label << ',' << r.oracle_label << ',' << (r.attacked ? 1 : 0) << ','
        << fmt_double(r.distance) << ',' << r.queries << ','
        << (r.target_class ? std::to_string(*r.target_class) : std::string("-1")) << '\n';
  }
}

std::vector<AttackRow> read_attack_csv(const fs::path& path) {
  const auto cells = read_csv(
      path, "sample_id,is_member,point,label,oracle_label,attacked,distance,queries,target_class");
  std::vector<AttackRow> rows;
  for (const auto& c : cells) {
    AttackRow r;
    r.sample_id = parse_number<std::size_t>(c[0], path);
    r.is_member = parse_bool(c[1], path);
    r.point = point_kind_from_string(c[2]);
    r.label = parse_number<Label>(c[3], path);
    r.oracle_label = parse_number<Label>(c[4], path);
    r.attacked = parse_bool(c[5], path);
    r.distance = parse_number<double>(c[6], path);
    r.queries = parse_number<std::uint64_t>(c[7], path);
    if (c[8] != "-1") r.target_class = parse_number<Label>(c[8], path);
    rows.push_back(r);
  }
  return rows;
}

void write_trace_csv(const std::vector<TraceExportRow>& rows, const fs::path& path) {
  auto out = open_out(path);
  out << "sample_id,iteration,candidate_class,distance,cumulative_queries\n";
  for (const auto& r : rows) {
    out << r.sample_id << ',' << r.row.iteration << ','
        << (r.row.candidate_class ? std::to_string(*r.row.candidate_class) : std::string("-1"))
        << ',' << fmt_double(r.row.distance) << ',' << r.row.cumulative_queries << '\n';
  }
}

void write_score_csv(const std::vector<ScoreRecord>& records, const fs::path& path) {
  auto out = open_out(path);
  out << "sample_id,is_member,kind,score,queries\n";
  for (const auto& r : records) {
    out << r.sample_id << ',' << (r.is_member ? 1 : 0) << ',' << to_string(r.kind) << ','
        << fmt_double(r.score) << ',' << r.queries << '\n';
  }
}

std::vector<ScoreRecord> read_score_csv(const fs::path& path) {
  const auto cells = read_csv(path, "sample_id,is_member,kind,score,queries");
  std::vector<ScoreRecord> out;
  for (const auto& c : cells) {
    ScoreRecord r;
    r.sample_id = parse_number<std::size_t>(c[0], path);
    r.is_member = parse_bool(c[1], path);
    r.kind = score_kind_from_string(c[2]);
    r.score = parse_number<double>(c[3], path);
    r.queries = parse_number<std::uint64_t>(c[4], path);
    out.push_back(r);
  }
  return out;
}

void write_roc_csv(const RocCurve& curve, const fs::path& path) {
  auto out = open_out(path);
  out << "threshold,fpr,tpr\n";
  for (const auto& p : curve.points) {
    out << (std::isinf(p.threshold) ? std::string("inf") : fmt_double(p.threshold)) << ','
        << fmt_double(p.fpr) << ',' << fmt_double(p.tpr) << '\n';
  }
}

void write_text(const std::string& text, const fs::path& path) {
  auto out = open_out(path);
  out << text << '\n';
}

void write_stability_csv(const std::vector<StabilityRecord>& records, const fs::path& path) {
  auto out = open_out(path);
  out << "sample_id,is_member,mean,std,status,same_target,reached_count,reached_min_region,"
         "target_classes\n";
  for (const auto& r : records) {
    std::string targets;
    for (std::size_t k = 0; k < r.target_classes.size(); ++k) {
      targets += (k ? ";" : "") + std::to_string(r.target_classes[k]);
    }
    out << r.sample_id << ',' << (r.is_member ? 1 : 0) << ',' << fmt_double(r.mean) << ','
        << fmt_double(r.std_dev) << ','
        << (r.stability == Stability::kStable ? "stable" : "bias") << ','
        << (r.same_target ? 1 : 0) << ',' << r.reached_count << ','
        << (r.reached_min_region ? 1 : 0) << ',' << targets << '\n';
  }
}

std::string stability_summary_json(const std::vector<StabilityRecord>& records) {
  // Contingency of target-class agreement against stability; both coded
  // 1 = (same target / stable), 0 otherwise.
  std::size_t table[2][2] = {{0, 0}, {0, 0}};
  std::vector<double> same, stable;
  for (const auto& r : records) {
    const int s = r.same_target ? 1 : 0;
    const int st = r.stability == Stability::kStable ? 1 : 0;
    ++table[s][st];
    same.push_back(s);
    stable.push_back(st);
  }
  nlohmann::ordered_json doc;
  doc["n"] = records.size();
  doc["same_target"] = {{"stable", table[1][1]}, {"bias", table[1][0]}};
  doc["different_target"] = {{"stable", table[0][1]}, {"bias", table[0][0]}};
  try {
    doc["spearman_same_target_vs_stable"] = spearman(same, stable);
  } catch (const Error&) {
    doc["spearman_same_target_vs_stable"] = nullptr;
  }
  return doc.dump(2);
}

EvaluationOutput evaluate_stage(const std::vector<ScoreRecord>& scores, const fs::path& out_dir) {
  EvaluationOutput out{roc_curve(scores), compute_metrics(scores)};
  write_roc_csv(out.curve, out_dir / artifact::kRoc);
  write_text(metrics_to_json(out.metrics), out_dir / artifact::kMetrics);
  return out;
}

RunOutcome run_experiment(const ExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir = config.out_dir;
  fs::create_directories(dir);
  std::string stage = "data";
  std::shared_ptr<QueryLedger> ledger;
  auto write_manifest = [&](const char* status, const std::string& error) {
    nlohmann::ordered_json m;
    m["status"] = status;
    if (!error.empty()) {
      m["failed_stage"] = stage;
      m["error"] = error;
    }
    m["config"] = nlohmann::ordered_json::parse(config_to_json(config));
    m["total_queries"] = ledger ? ledger->total() : 0;
    nlohmann::ordered_json phases = nlohmann::ordered_json::object();
    if (ledger) {
      for (const auto& [name, count] : ledger->phases()) phases[name] = count;
    }
    m["queries_by_phase"] = phases;
    m["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_text(m.dump(2), dir / artifact::kManifest);
  };
  try {
    const DatasetSplit split = load_or_generate_data(config);
    write_split(split, dir);

    stage = "train";
    std::optional<MlpModel> model;
    if (config.oracle_url.empty()) {
      model = load_or_train_model(config, split.train);
      save_model(*model, dir / artifact::kModel);
    }

    stage = "eval-set";
    auto oracle = make_oracle(config, model ? &*model : nullptr, split.aux.n_classes());
    ledger = oracle->shared_ledger();
    const EvalSet set = build_eval_set(config, split, *oracle);

    stage = "attack";
    const AttackTable table = attack_stage(config, set, split.aux, *oracle);
    write_attack_csv(table.rows, dir / artifact::kAttacks);
    write_trace_csv(table.trace, dir / artifact::kTrace);

    stage = "score";
    const auto scores = score_stage(config.score, table.rows);
    write_score_csv(scores, dir / artifact::kScores);

    stage = "evaluate";
    const auto evaluation = evaluate_stage(scores, dir);

    RunOutcome outcome{evaluation.metrics, ledger->total(),
                       std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                           .count()};
    write_manifest("ok", "");
    return outcome;
  } catch (const std::exception& e) {
    write_manifest("failed", e.what());
    throw;
  }
}

}  // namespace mia
