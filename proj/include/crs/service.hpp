#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "crs/classifier.hpp"
#include "crs/dataset.hpp"
#include "crs/json_eigen.hpp"
#include "crs/label_store.hpp"
#include "crs/schema.hpp"

namespace httplib {
class Server;
}

namespace crs {

/// Named fitted models, the active one, and the decision threshold.
class ModelRegistry {
 public:
  void add(const std::string& name, std::shared_ptr<const Classifier> model);
  /// Throws InvalidArgument for an unregistered name.
  void activate(const std::string& name);
  std::shared_ptr<const Classifier> active() const;  // nullptr when none
  std::string active_name() const;
  std::vector<std::string> names() const;

  double threshold() const;
  /// Throws InvalidArgument unless 0 < tau <= 1.
  void set_threshold(double tau);

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<const Classifier>> models_;
  std::string active_;
  double threshold_ = 0.5;
};

struct ServiceConfig {
  std::map<std::string, std::string> raterTokens;  // bearer token -> rater id
  std::set<std::string> adminTokens;
  std::vector<std::string> guidance;  // shown with every case in GET /cases
  int shapBudget = 2048;
  std::uint64_t seed = 0;
  std::function<std::string()> clock;  // UTC timestamps; defaults to the system clock
};

struct HttpResponse {
  int status = 200;
  Json body;
};

/// UTC now as 2026-01-31T12:34:56Z.
std::string utc_timestamp();

/// Request handling for the JSON endpoints. `handle` routes and authenticates;
/// the transport (serve) only forwards to it.
///
///   POST /predict           {"record": {...}}
///   POST /whatif            {"record": {...}, "overrides": {...}, "threshold": t}
///   POST /explain           {"record": {...}}
///   GET  /cases
///   GET  /labels[?case=ID]  rater token
///   POST /labels            rater token, {"caseId", "call", "confidence"}
///   GET  /sessions/{rater}  rater token
///   PUT  /sessions/{rater}  rater token, {"cursor"}
///   PUT  /admin/threshold   admin token, {"threshold"}
///   GET  /health
class Service {
 public:
  Service(Schema schema, ModelRegistry& registry, LabelStore& store, ServiceConfig config,
          LabeledDataset cases, Eigen::MatrixXd background, Json globalImportance = Json::array());
  ~Service();

  HttpResponse handle(const std::string& method, const std::string& target,
                      const std::string& authorization, const std::string& body);

  HttpResponse predict(const Json& request) const;
  HttpResponse whatif(const Json& request) const;
  HttpResponse explain(const Json& request) const;
  HttpResponse cases() const;
  HttpResponse get_labels(const std::string& rater, const std::string& caseId) const;
  HttpResponse post_label(const std::string& rater, const Json& request);
  HttpResponse get_session(const std::string& rater) const;
  HttpResponse put_session(const std::string& rater, const Json& request);
  HttpResponse put_threshold(const Json& request);

  /// Blocks serving HTTP until stop() is called. Returns false if the bind fails.
  bool serve(const std::string& host, int port);
  void stop();

  /// Encodes a JSON record (numbers, or category labels as text) into a
  /// feature row; violations are collected instead of thrown.
  Eigen::RowVectorXd encode_record(const Json& record, std::vector<Violation>& violations) const;

 private:
  struct Scored {
    std::shared_ptr<const Classifier> model;
    double probability = 0.0;
    int decision = 0;
  };
  Scored score(const Eigen::RowVectorXd& row, double threshold) const;

  Schema schema_;
  ModelRegistry& registry_;
  LabelStore& store_;
  ServiceConfig config_;
  LabeledDataset cases_;
  Eigen::MatrixXd background_;
  Json globalImportance_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace crs
