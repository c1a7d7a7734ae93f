#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "mia/model.hpp"
#include "mia/sample.hpp"

namespace mia {

// Thread-safe query counter. total() always equals the sum of the per-phase
// counters once concurrent increments have settled.
class QueryLedger {
 public:
  void record(std::string_view phase, std::uint64_t n = 1);
  std::uint64_t total() const { return total_.load(); }
  std::uint64_t phase(std::string_view name) const;
  std::map<std::string, std::uint64_t, std::less<>> phases() const;
  void merge(const QueryLedger& other);

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::uint64_t, std::less<>> phases_;
  std::atomic<std::uint64_t> total_{0};
};

// The only channel to the target model: a sample in, a hard label out.
// Every successful query is recorded in the attached ledger.
class HardLabelOracle {
 public:
  explicit HardLabelOracle(std::shared_ptr<QueryLedger> ledger = nullptr);
  virtual ~HardLabelOracle() = default;

  HardLabelOracle(const HardLabelOracle&) = delete;
  HardLabelOracle& operator=(const HardLabelOracle&) = delete;

  Label query(const Sample& x, std::string_view phase) const;
  virtual std::size_t n_classes() const = 0;

  QueryLedger& ledger() const { return *ledger_; }
  const std::shared_ptr<QueryLedger>& shared_ledger() const { return ledger_; }

 protected:
  virtual Label classify(const Sample& x) const = 0;

 private:
  std::shared_ptr<QueryLedger> ledger_;
};

inline Label oracle_query(const HardLabelOracle& oracle, const Sample& x,
                          std::string_view phase) {
  return oracle.query(x, phase);
}

class ModelOracle final : public HardLabelOracle {
 public:
  explicit ModelOracle(MlpModel model,
                       std::shared_ptr<QueryLedger> ledger = nullptr)
      : HardLabelOracle(std::move(ledger)), model_(std::move(model)) {}
  std::size_t n_classes() const override { return model_.n_classes(); }
  const MlpModel& model() const { return model_; }

 protected:
  Label classify(const Sample& x) const override;

 private:
  MlpModel model_;
};

// Two-class oracle: label 1 iff w.x + b > 0, else 0.
class HalfPlaneOracle final : public HardLabelOracle {
 public:
  HalfPlaneOracle(std::vector<double> w, double b,
                  std::shared_ptr<QueryLedger> ledger = nullptr);
  std::size_t n_classes() const override { return 2; }
  // Unsigned Euclidean distance from x to the hyperplane w.x + b = 0.
  double distance_to_boundary(const Sample& x) const;

 protected:
  Label classify(const Sample& x) const override;

 private:
  std::vector<double> w_;
  double b_;
};

// Multi-class nearest-center classifier (Voronoi cells, lowest index wins
// ties). Class boundaries are perpendicular bisectors of center pairs.
class NearestCenterOracle final : public HardLabelOracle {
 public:
  explicit NearestCenterOracle(std::vector<std::vector<double>> centers,
                               std::shared_ptr<QueryLedger> ledger = nullptr);
  std::size_t n_classes() const override { return centers_.size(); }
  // Distance from x to the bisector between classes a and b.
  double bisector_distance(const Sample& x, Label a, Label b) const;

 protected:
  Label classify(const Sample& x) const override;

 private:
  std::vector<std::vector<double>> centers_;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{50};
};

// HTTP client for POST /predict {"x":[...]} -> {"label": int}. Transport
// errors and non-200 responses are retried with doubling backoff; after the
// last attempt a QueryFailure carrying the attempt count is thrown.
class RemoteOracle final : public HardLabelOracle {
 public:
  RemoteOracle(std::string url, std::size_t n_classes,
               RetryPolicy retry = {},
               std::shared_ptr<QueryLedger> ledger = nullptr);
  std::size_t n_classes() const override { return n_classes_; }

 protected:
  Label classify(const Sample& x) const override;

 private:
  std::string base_url_;
  std::size_t n_classes_;
  RetryPolicy retry_;
};

// Serves a model over the /predict protocol until stop() is called.
class ModelServer {
 public:
  explicit ModelServer(MlpModel model);
  ~ModelServer();
  ModelServer(const ModelServer&) = delete;
  ModelServer& operator=(const ModelServer&) = delete;

  // Binds host:port (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mia
