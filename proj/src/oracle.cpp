#include "mia/oracle.hpp"

#include <cmath>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "mia/error.hpp"

namespace mia {

void QueryLedger::record(std::string_view phase, std::uint64_t n) {
  std::lock_guard lock(mu_);
  auto it = phases_.find(phase);
  if (it == phases_.end()) it = phases_.emplace(std::string(phase), 0).first;
  it->second += n;
  total_ += n;
}

std::uint64_t QueryLedger::phase(std::string_view name) const {
  std::lock_guard lock(mu_);
  const auto it = phases_.find(name);
  return it == phases_.end() ? 0 : it->second;
}

std::map<std::string, std::uint64_t, std::less<>> QueryLedger::phases() const {
  std::lock_guard lock(mu_);
  return phases_;
}

void QueryLedger::merge(const QueryLedger& other) {
  for (const auto& [name, n] : other.phases()) record(name, n);
}

HardLabelOracle::HardLabelOracle(std::shared_ptr<QueryLedger> ledger)
    : ledger_(ledger ? std::move(ledger) : std::make_shared<QueryLedger>()) {}

Label HardLabelOracle::query(const Sample& x, std::string_view phase) const {
  const Label label = classify(x);
  ledger_->record(phase);
  return label;
}

Label ModelOracle::classify(const Sample& x) const {
  return predict_label(model_, x);
}

HalfPlaneOracle::HalfPlaneOracle(std::vector<double> w, double b,
                                 std::shared_ptr<QueryLedger> ledger)
    : HardLabelOracle(std::move(ledger)), w_(std::move(w)), b_(b) {
  double norm = 0.0;
  for (double v : w_) norm += v * v;
  if (w_.empty() || norm == 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "half-plane normal must be nonzero");
  }
}

Label HalfPlaneOracle::classify(const Sample& x) const {
  if (x.size() != w_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "half-plane input size mismatch");
  }
  double s = b_;
  for (std::size_t i = 0; i < w_.size(); ++i) s += w_[i] * x.data()[i];
  return s > 0.0 ? 1 : 0;
}

double HalfPlaneOracle::distance_to_boundary(const Sample& x) const {
  double s = b_, norm = 0.0;
  for (std::size_t i = 0; i < w_.size(); ++i) {
    s += w_[i] * x.data()[i];
    norm += w_[i] * w_[i];
  }
  return std::abs(s) / std::sqrt(norm);
}

NearestCenterOracle::NearestCenterOracle(std::vector<std::vector<double>> centers,
                                         std::shared_ptr<QueryLedger> ledger)
    : HardLabelOracle(std::move(ledger)), centers_(std::move(centers)) {
  if (centers_.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "need at least two centers");
  }
  for (const auto& c : centers_) {
    if (c.size() != centers_.front().size()) {
      throw Error(ErrorCode::kInvalidArgument, "center dims differ");
    }
  }
}

Label NearestCenterOracle::classify(const Sample& x) const {
  if (x.size() != centers_.front().size()) {
    throw Error(ErrorCode::kInvalidArgument, "nearest-center input size mismatch");
  }
  Label best = 0;
  double best_d = INFINITY;
  for (std::size_t c = 0; c < centers_.size(); ++c) {
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double diff = x.data()[i] - centers_[c][i];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = static_cast<Label>(c);
    }
  }
  return best;
}

double NearestCenterOracle::bisector_distance(const Sample& x, Label a,
                                              Label b) const {
  // |x - m|^2 comparison is linear: 2(cb - ca).x + |ca|^2 - |cb|^2.
  const auto& ca = centers_.at(a);
  const auto& cb = centers_.at(b);
  double s = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < ca.size(); ++i) {
    const double w = 2.0 * (cb[i] - ca[i]);
    s += w * x.data()[i] + ca[i] * ca[i] - cb[i] * cb[i];
    norm += w * w;
  }
  return std::abs(s) / std::sqrt(norm);
}

RemoteOracle::RemoteOracle(std::string url, std::size_t n_classes,
                           RetryPolicy retry, std::shared_ptr<QueryLedger> ledger)
    : HardLabelOracle(std::move(ledger)),
      base_url_(std::move(url)),
      n_classes_(n_classes),
      retry_(retry) {
  if (retry_.attempts < 1) {
    throw Error(ErrorCode::kInvalidArgument, "retry attempts must be >= 1");
  }
}

Label RemoteOracle::classify(const Sample& x) const {
  const std::string body = nlohmann::json{{"x", x.data()}}.dump();
  auto backoff = retry_.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= retry_.attempts; ++attempt) {
    httplib::Client client(base_url_);
    client.set_connection_timeout(2, 0);
    client.set_read_timeout(10, 0);
    auto res = client.Post("/predict", body, "application/json");
    if (res && res->status == 200) {
      try {
        const auto doc = nlohmann::json::parse(res->body);
        const auto label = doc.at("label").get<std::int64_t>();
        if (label < 0 || static_cast<std::size_t>(label) >= n_classes_) {
          throw QueryFailure("remote oracle returned out-of-range label " +
                                 std::to_string(label),
                             attempt);
        }
        return static_cast<Label>(label);
      } catch (const nlohmann::json::exception& e) {
        last_error = std::string("malformed response: ") + e.what();
      }
    } else if (res) {
      last_error = "HTTP status " + std::to_string(res->status);
    } else {
      last_error = httplib::to_string(res.error());
    }
    if (attempt < retry_.attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw QueryFailure("remote oracle " + base_url_ + " failed after " +
                         std::to_string(retry_.attempts) +
                         " attempts: " + last_error,
                     retry_.attempts);
}

namespace {

// httplib only releases the listening socket of a running server.
struct ClosableServer : httplib::Server {
  void close() {
    if (is_running()) {
      stop();
      return;
    }
    const auto sock = svr_sock_.exchange(INVALID_SOCKET);
    if (sock != INVALID_SOCKET) httplib::detail::close_socket(sock);
  }
};

}  // namespace

struct ModelServer::Impl {
  MlpModel model;
  ClosableServer server;
};

ModelServer::ModelServer(MlpModel model) : impl_(std::make_unique<Impl>()) {
  impl_->model = std::move(model);
  impl_->server.Post("/predict", [this](const httplib::Request& req,
                                        httplib::Response& res) {
    try {
      const auto doc = nlohmann::json::parse(req.body);
      auto values = doc.at("x").get<std::vector<float>>();
      const auto z = impl_->model.logits(values);
      res.set_content(nlohmann::json{{"label", argmax(z)}}.dump(),
                      "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(),
                      "application/json");
    }
  });
}

ModelServer::~ModelServer() { stop(); }

int ModelServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorCode::kIoError, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void ModelServer::listen() { impl_->server.listen_after_bind(); }

void ModelServer::stop() {
  if (impl_) impl_->server.close();
}

}  // namespace mia
