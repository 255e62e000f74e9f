#include "crs/service.hpp"

#include <httplib.h>

#include <chrono>
#include <ctime>

#include "crs/error.hpp"
#include "crs/explain.hpp"

namespace crs {

namespace {

HttpResponse error_response(int status, std::string_view code, const std::string& message) {
  return {status, Json{{"error", std::string(code)}, {"message", message}}};
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownCase:
      return 404;
    case ErrorCode::UnknownRater:
      return 403;
    case ErrorCode::MalformedConfidence:
    case ErrorCode::UnknownLabel:
    case ErrorCode::UnknownFeature:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::NonFinite:
      return 422;
    case ErrorCode::ParseError:
    case ErrorCode::InvalidArgument:
      return 400;
    default:
      return 500;
  }
}

Json violations_json(const std::vector<Violation>& vs) {
  Json arr = Json::array();
  for (const auto& v : vs) arr.push_back(Json{{"feature", v.feature}, {"message", v.message}});
  return arr;
}

Json label_json(const ExpertLabel& l) {
  return Json{{"rater", l.rater},           {"caseId", l.caseId},       {"call", l.call},
              {"confidence", l.confidence}, {"timestamp", l.timestamp}, {"revision", l.revision}};
}

std::string bearer_token(const std::string& authorization) {
  constexpr std::string_view prefix = "Bearer ";
  if (authorization.size() <= prefix.size() || authorization.compare(0, prefix.size(), prefix) != 0) return {};
  return authorization.substr(prefix.size());
}

std::string query_param(const std::string& query, const std::string& key) {
  std::size_t pos = 0;
  while (pos <= query.size()) {
    const std::size_t amp = query.find('&', pos);
    const std::string part = query.substr(pos, amp == std::string::npos ? std::string::npos : amp - pos);
    const std::size_t eq = part.find('=');
    if (eq != std::string::npos && part.substr(0, eq) == key) return part.substr(eq + 1);
    if (amp == std::string::npos) break;
    pos = amp + 1;
  }
  return {};
}

const Json& require_object(const Json& request, const char* key) {
  if (!request.is_object() || !request.contains(key) || !request.at(key).is_object()) {
    throw Error(ErrorCode::InvalidArgument, std::string("request needs an object field '") + key + "'");
  }
  return request.at(key);
}

}  // namespace

void ModelRegistry::add(const std::string& name, std::shared_ptr<const Classifier> model) {
  if (!model || !model->fitted()) throw Error(ErrorCode::InvalidArgument, "registry accepts fitted models only");
  std::lock_guard lock(mu_);
  models_[name] = std::move(model);
  if (active_.empty()) active_ = name;
}

void ModelRegistry::activate(const std::string& name) {
  std::lock_guard lock(mu_);
  if (!models_.contains(name)) throw Error(ErrorCode::InvalidArgument, "no model named '" + name + "'");
  active_ = name;
}

std::shared_ptr<const Classifier> ModelRegistry::active() const {
  std::lock_guard lock(mu_);
  const auto it = models_.find(active_);
  return it == models_.end() ? nullptr : it->second;
}

std::string ModelRegistry::active_name() const {
  std::lock_guard lock(mu_);
  return active_;
}

std::vector<std::string> ModelRegistry::names() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [name, m] : models_) out.push_back(name);
  return out;
}

double ModelRegistry::threshold() const {
  std::lock_guard lock(mu_);
  return threshold_;
}

void ModelRegistry::set_threshold(double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "threshold must lie in (0, 1], got " + format_number(tau));
  }
  std::lock_guard lock(mu_);
  threshold_ = tau;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Service::Service(Schema schema, ModelRegistry& registry, LabelStore& store, ServiceConfig config,
                 LabeledDataset cases, Eigen::MatrixXd background, Json globalImportance)
    : schema_(std::move(schema)),
      registry_(registry),
      store_(store),
      config_(std::move(config)),
      cases_(std::move(cases)),
      background_(std::move(background)),
      globalImportance_(std::move(globalImportance)) {
  if (!config_.clock) config_.clock = utc_timestamp;
}

Service::~Service() = default;

Eigen::RowVectorXd Service::encode_record(const Json& record, std::vector<Violation>& violations) const {
  PatientRecord r;
  for (const auto& [name, value] : record.items()) {
    if (name == kIdColumn) continue;
    if (value.is_number()) {
      r.values[name] = value.get<double>();
    } else if (value.is_string()) {
      const auto idx = schema_.index_of(name);
      if (!idx) {
        violations.push_back({name, "unknown feature"});
        continue;
      }
      const auto& f = schema_[*idx];
      if (!f.is_categorical()) {
        violations.push_back({name, "expected a number"});
        continue;
      }
      try {
        r.values[name] = f.encode(value.get<std::string>());
      } catch (const Error&) {
        violations.push_back({name, "code not in dictionary"});
      }
    } else {
      violations.push_back({name, "expected a number or label"});
    }
  }
  if (const auto it = r.values.find(std::string(kBaselineColumn)); it != r.values.end()) {
    r.snot22Baseline = it->second;
  }
  for (auto& v : validate_record(r, schema_)) {
    const bool dup = std::any_of(violations.begin(), violations.end(),
                                 [&](const Violation& w) { return w.feature == v.feature; });
    if (!dup) violations.push_back(std::move(v));
  }
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(static_cast<Index>(schema_.size()));
  if (!violations.empty()) return row;
  for (std::size_t j = 0; j < schema_.size(); ++j) row(static_cast<Index>(j)) = r.values.at(schema_[j].name);
  return row;
}

Service::Scored Service::score(const Eigen::RowVectorXd& row, double threshold) const {
  Scored s;
  s.model = registry_.active();
  if (!s.model) return s;
  const Eigen::MatrixXd X = row;
  s.probability = s.model->predict_proba(X)(0);
  s.decision = s.model->predict(X, threshold)(0);
  return s;
}

HttpResponse Service::predict(const Json& request) const {
  std::vector<Violation> violations;
  const auto row = encode_record(require_object(request, "record"), violations);
  if (!violations.empty()) return {422, Json{{"error", "ValidationFailed"}, {"violations", violations_json(violations)}}};
  const double tau = registry_.threshold();
  const auto s = score(row, tau);
  if (!s.model) return error_response(409, "NoActiveModel", "no active model");
  return {200, Json{{"probability", s.probability},
                    {"decision", s.decision},
                    {"threshold", tau},
                    {"model", registry_.active_name()}}};
}

HttpResponse Service::whatif(const Json& request) const {
  std::vector<Violation> violations;
  const Json& record = require_object(request, "record");
  const auto base = encode_record(record, violations);
  Json modified = record;
  if (request.contains("overrides")) {
    const Json& overrides = require_object(request, "overrides");
    for (const auto& [name, value] : overrides.items()) modified[name] = value;
  }
  const auto changed = encode_record(modified, violations);
  if (!violations.empty()) return {422, Json{{"error", "ValidationFailed"}, {"violations", violations_json(violations)}}};

  const double tau = registry_.threshold();
  double tauPrime = tau;
  if (request.contains("threshold")) {
    const Json& t = request.at("threshold");
    if (!t.is_number()) throw Error(ErrorCode::InvalidArgument, "threshold must be a number");
    tauPrime = t.get<double>();
    if (!(tauPrime > 0.0 && tauPrime <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "threshold must lie in (0, 1], got " + format_number(tauPrime));
    }
  }
  const auto a = score(base, tau);
  if (!a.model) return error_response(409, "NoActiveModel", "no active model");
  const auto b = score(changed, tauPrime);
  return {200, Json{{"baseline", {{"probability", a.probability}, {"decision", a.decision}, {"threshold", tau}}},
                    {"modified", {{"probability", b.probability}, {"decision", b.decision}, {"threshold", tauPrime}}},
                    {"flip", a.decision != b.decision},
                    {"model", registry_.active_name()}}};
}

HttpResponse Service::explain(const Json& request) const {
  std::vector<Violation> violations;
  const auto row = encode_record(require_object(request, "record"), violations);
  if (!violations.empty()) return {422, Json{{"error", "ValidationFailed"}, {"violations", violations_json(violations)}}};
  const auto model = registry_.active();
  if (!model) return error_response(409, "NoActiveModel", "no active model");
  if (background_.rows() == 0) return error_response(409, "NoBackground", "no SHAP background loaded");
  const auto shap = shap_values(*model, row, background_, config_.shapBudget, config_.seed);
  Json attributions = Json::array();
  for (std::size_t j = 0; j < schema_.size(); ++j) {
    const auto& f = schema_[j];
    const double v = row(static_cast<Index>(j));
    Json display = v;
    if (f.is_categorical()) display = f.decode(static_cast<int>(v));
    attributions.push_back(Json{{"feature", f.name}, {"value", display}, {"phi", shap.phi(static_cast<Index>(j))}});
  }
  return {200, Json{{"probability", shap.fx},
                    {"baseValue", shap.baseValue},
                    {"attributions", attributions},
                    {"exact", shap.exact},
                    {"efficiencyResidual", shap.efficiency_residual()},
                    {"globalImportance", globalImportance_},
                    {"model", registry_.active_name()}}};
}

HttpResponse Service::cases() const {
  Json list = Json::array();
  for (Index i = 0; i < cases_.rows(); ++i) {
    Json fields = Json::object();
    for (std::size_t j = 0; j < schema_.size(); ++j) {
      const auto& f = schema_[j];
      const double v = cases_.X(i, static_cast<Index>(j));
      if (f.is_categorical()) {
        fields[f.name] = f.decode(static_cast<int>(v));
      } else {
        fields[f.name] = v;
      }
    }
    list.push_back(Json{{"id", cases_.ids[static_cast<std::size_t>(i)]}, {"fields", fields}});
  }
  return {200, Json{{"cases", list}, {"guidance", config_.guidance}}};
}

HttpResponse Service::get_labels(const std::string& rater, const std::string& caseId) const {
  Json out = Json::array();
  if (!caseId.empty()) {
    for (const auto& l : store_.history(rater, caseId)) out.push_back(label_json(l));
    return {200, Json{{"rater", rater}, {"caseId", caseId}, {"history", out}}};
  }
  for (const auto& l : store_.latest(rater)) {
    Json entry = label_json(l);
    entry["historyLength"] = l.revision + 1;
    out.push_back(std::move(entry));
  }
  return {200, Json{{"rater", rater}, {"labels", out}}};
}

HttpResponse Service::post_label(const std::string& rater, const Json& request) {
  if (!request.is_object() || !request.contains("caseId") || !request.contains("call") ||
      !request.contains("confidence")) {
    throw Error(ErrorCode::InvalidArgument, "label needs caseId, call and confidence");
  }
  const Json& call = request.at("call");
  const Json& conf = request.at("confidence");
  if (!call.is_number_integer() || !conf.is_number_integer() || !request.at("caseId").is_string()) {
    throw Error(ErrorCode::InvalidArgument, "caseId must be text, call and confidence integers");
  }
  const auto label = store_.submit(rater, request.at("caseId").get<std::string>(), call.get<int>(),
                                   conf.get<int>(), config_.clock());
  return {201, Json{{"label", label_json(label)}, {"historyLength", label.revision + 1}}};
}

HttpResponse Service::get_session(const std::string& rater) const {
  const auto s = store_.session(rater);
  if (!s) return error_response(404, "NoSession", "no session for rater '" + rater + "'");
  return {200, Json{{"rater", s->rater}, {"cursor", s->cursor}, {"updated", s->updated}}};
}

HttpResponse Service::put_session(const std::string& rater, const Json& request) {
  if (!request.is_object() || !request.contains("cursor") || !request.at("cursor").is_string()) {
    throw Error(ErrorCode::InvalidArgument, "session needs a text cursor");
  }
  const auto s = store_.put_session(rater, request.at("cursor").get<std::string>(), config_.clock());
  return {200, Json{{"rater", s.rater}, {"cursor", s.cursor}, {"updated", s.updated}}};
}

HttpResponse Service::put_threshold(const Json& request) {
  if (!request.is_object() || !request.contains("threshold") || !request.at("threshold").is_number()) {
    throw Error(ErrorCode::InvalidArgument, "request needs a numeric threshold");
  }
  registry_.set_threshold(request.at("threshold").get<double>());
  return {200, Json{{"threshold", registry_.threshold()}}};
}

HttpResponse Service::handle(const std::string& method, const std::string& target,
                             const std::string& authorization, const std::string& body) {
  const std::size_t q = target.find('?');
  const std::string path = target.substr(0, q);
  const std::string query = q == std::string::npos ? std::string{} : target.substr(q + 1);
  const std::string token = bearer_token(authorization);

  auto rater_for_token = [&]() -> std::optional<std::string> {
    const auto it = config_.raterTokens.find(token);
    if (token.empty() || it == config_.raterTokens.end()) return std::nullopt;
    return it->second;
  };

  try {
    Json request = Json::object();
    if (!body.empty()) {
      try {
        request = Json::parse(body);
      } catch (const Json::exception& e) {
        return error_response(400, "ParseError", std::string("malformed JSON body: ") + e.what());
      }
    }

    if (method == "GET" && path == "/health") {
      return {200, Json{{"status", "ok"}, {"model", registry_.active_name()}, {"threshold", registry_.threshold()}}};
    }
    if (method == "POST" && path == "/predict") return predict(request);
    if (method == "POST" && path == "/whatif") return whatif(request);
    if (method == "POST" && path == "/explain") return explain(request);
    if (method == "GET" && path == "/cases") return cases();

    if (path == "/labels" && (method == "GET" || method == "POST")) {
      const auto rater = rater_for_token();
      if (!rater) return error_response(401, "Unauthorized", "a rater token is required");
      if (method == "GET") return get_labels(*rater, query_param(query, "case"));
      return post_label(*rater, request);
    }

    constexpr std::string_view sessions = "/sessions/";
    if (path.size() > sessions.size() && path.compare(0, sessions.size(), sessions) == 0 &&
        (method == "GET" || method == "PUT")) {
      const std::string who = path.substr(sessions.size());
      const auto rater = rater_for_token();
      if (!rater) return error_response(401, "Unauthorized", "a rater token is required");
      if (*rater != who) return error_response(403, "Forbidden", "token does not belong to rater '" + who + "'");
      if (method == "GET") return get_session(who);
      return put_session(who, request);
    }

    if (method == "PUT" && path == "/admin/threshold") {
      if (token.empty() || !config_.adminTokens.contains(token)) {
        return error_response(401, "Unauthorized", "an admin token is required");
      }
      return put_threshold(request);
    }
    return error_response(404, "NotFound", method + " " + path);
  } catch (const Error& e) {
    return error_response(status_for(e.code()), to_string(e.code()), e.what());
  } catch (const Json::exception& e) {
    return error_response(400, "ParseError", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "Internal", e.what());
  }
}

bool Service::serve(const std::string& host, int port) {
  server_ = std::make_unique<httplib::Server>();
  auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    std::string target = req.path;
    if (!req.params.empty()) {
      std::string query;
      for (const auto& [k, v] : req.params) query += (query.empty() ? "" : "&") + k + "=" + v;
      target += "?" + query;
    }
    const auto out = handle(req.method, target, req.get_header_value("Authorization"), req.body);
    res.status = out.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(out.body.dump(), "application/json");
  };
  server_->Get(".*", forward);
  server_->Post(".*", forward);
  server_->Put(".*", forward);
  server_->Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Headers", "Authorization, Content-Type");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS");
    res.status = 204;
  });
  return server_->listen(host, port);
}

void Service::stop() {
  if (server_) server_->stop();
}

}  // namespace crs
