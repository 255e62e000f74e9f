#include "crs/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crs/error.hpp"
#include "crs/eval.hpp"

namespace crs {

int hard_vote(std::span<const int> votes, std::span<const std::string> names,
              const std::string& tieBreak) {
  if (votes.empty()) throw Error(ErrorCode::InvalidArgument, "empty vote panel");
  if (votes.size() != names.size()) {
    throw Error(ErrorCode::InvalidArgument, "votes and member names differ in length");
  }
  const auto tieIt = std::find(names.begin(), names.end(), tieBreak);
  if (tieIt == names.end()) {
    throw Error(ErrorCode::InvalidArgument, "tie-break member '" + tieBreak + "' is not in the panel");
  }
  const auto ones = std::count(votes.begin(), votes.end(), 1);
  const auto zeros = static_cast<std::ptrdiff_t>(votes.size()) - ones;
  if (ones != zeros) return ones > zeros ? 1 : 0;
  return votes[static_cast<std::size_t>(tieIt - names.begin())];
}

SoftVote soft_vote(std::span<const double> weights, std::span<const double> memberP1) {
  if (weights.size() != memberP1.size() || weights.empty()) {
    throw Error(ErrorCode::WeightMismatch, "expected one weight per member");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::WeightMismatch, "weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::WeightMismatch, "weights sum to zero");
  SoftVote out;
  for (std::size_t m = 0; m < weights.size(); ++m) {
    out.p1 += weights[m] / total * memberP1[m];
    out.p0 += weights[m] / total * (1.0 - memberP1[m]);
  }
  out.label = out.p1 >= out.p0 ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------

StackTrace out_of_fold_predictions(const LabeledDataset& train,
                                   const std::vector<const Classifier*>& members, int k,
                                   std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::DegenerateFold, "stacking needs at least 2 folds");
  StackTrace trace;
  trace.folds = stratified_folds(train.y, k, seed);
  trace.meta = Eigen::MatrixXd::Zero(train.rows(), static_cast<Index>(members.size()));
  trace.foldTrainRows.resize(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    std::vector<Index> held;
    auto& fit = trace.foldTrainRows[static_cast<std::size_t>(f)];
    for (Index i = 0; i < train.rows(); ++i) {
      (trace.folds[static_cast<std::size_t>(i)] == f ? held : fit).push_back(i);
    }
    const LabeledDataset foldTrain = train.subset(fit);
    const Eigen::MatrixXd heldX = train.X(held, Eigen::all);
    for (std::size_t m = 0; m < members.size(); ++m) {
      auto model = members[m]->clone_unfitted();
      model->fit(foldTrain);
      const Eigen::VectorXd p = model->predict_proba(heldX);
      for (std::size_t h = 0; h < held.size(); ++h) {
        trace.meta(held[h], static_cast<Index>(m)) = p(static_cast<Index>(h));
      }
    }
  }
  return trace;
}

bool stacking_leakage_free(const StackTrace& trace) {
  for (std::size_t i = 0; i < trace.folds.size(); ++i) {
    const auto f = trace.folds[i];
    if (f < 0 || static_cast<std::size_t>(f) >= trace.foldTrainRows.size()) return false;
    const auto& seen = trace.foldTrainRows[static_cast<std::size_t>(f)];
    if (std::find(seen.begin(), seen.end(), static_cast<Index>(i)) != seen.end()) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

double adaboost_stage_weight(double eps) { return 0.5 * std::log((1.0 - eps) / eps); }

double AdaBoostModel::margin(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  double f = 0.0;
  for (const auto& s : stages) f += s.alpha * (s.tree.predict(row) >= 0.5 ? 1.0 : -1.0);
  return f;
}

AdaBoostModel adaboost_fit(const Eigen::MatrixXd& X, const Eigen::VectorXi& y, int stages,
                           int weakDepth, AdaBoostTrace* trace) {
  if (stages < 1) throw Error(ErrorCode::InvalidArgument, "AdaBoost needs at least one stage");
  if (X.rows() != y.size()) throw Error(ErrorCode::LengthMismatch, "rows and labels differ");
  if (y.size() == 0) throw Error(ErrorCode::InvalidArgument, "AdaBoost needs training rows");
  // Keeps alpha finite when a stage is perfect.
  constexpr double kMinError = 1e-10;

  AdaBoostTrace local;
  AdaBoostTrace& tr = trace ? *trace : local;
  tr = AdaBoostTrace{};
  tr.stopReason = "max-stages";

  const Index n = y.size();
  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  std::mt19937_64 rng(0);
  const TreeSettings ts{weakDepth, 1, 0};

  AdaBoostModel model;
  for (int m = 0; m < stages; ++m) {
    DecisionTree tree = tree_fit(X, y, w, rows, ts, rng);
    Eigen::VectorXi pred(n);
    double eps = 0.0;
    for (Index i = 0; i < n; ++i) {
      pred(i) = tree.predict(X.row(i)) >= 0.5 ? 1 : 0;
      if (pred(i) != y(i)) eps += w(i);
    }
    if (eps >= 0.5) {
      tr.stopReason = "weak-stage";
      break;
    }
    const bool perfect = eps <= 0.0;
    const double alpha = adaboost_stage_weight(std::max(eps, kMinError));
    model.stages.push_back({std::move(tree), alpha, eps});
    for (Index i = 0; i < n; ++i) w(i) *= std::exp(pred(i) == y(i) ? -alpha : alpha);
    w /= w.sum();
    tr.weightSums.push_back(w.sum());
    if (perfect) {
      tr.stopReason = "perfect-stage";
      break;
    }
  }
  return model;
}

int adaboost_predict(const AdaBoostModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  return model.margin(row) >= 0.0 ? 1 : 0;
}

double adaboost_predict_proba(const AdaBoostModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  return sigmoid(2.0 * model.margin(row));
}

Json AdaBoostModel::to_json() const {
  Json arr = Json::array();
  for (const auto& s : stages) {
    arr.push_back(Json{{"alpha", s.alpha}, {"error", s.error}, {"tree", s.tree.to_json()}});
  }
  return Json{{"stages", arr}};
}

AdaBoostModel AdaBoostModel::from_json(const Json& j) {
  AdaBoostModel m;
  for (const auto& s : j.at("stages")) {
    m.stages.push_back({DecisionTree::from_json(s.at("tree")), s.at("alpha").get<double>(),
                        s.at("error").get<double>()});
  }
  return m;
}

// ---------------------------------------------------------------------------

namespace {

Json members_to_json(const Members& members) {
  Json arr = Json::array();
  for (const auto& m : members) arr.push_back(m->to_json());
  return arr;
}

Members members_from_json(const Json& arr) {
  Members out;
  for (const auto& j : arr) out.push_back(classifier_from_json(j));
  return out;
}

Members clone_all(const Members& members) {
  Members out;
  for (const auto& m : members) out.push_back(m->clone_unfitted());
  return out;
}

void fit_all(Members& members, const LabeledDataset& train) {
  for (auto& m : members) m->fit(train);
}

Json member_roster(const Members& members) {
  Json arr = Json::array();
  for (const auto& m : members) arr.push_back(Json{{"kind", m->kind()}, {"config", m->config()}});
  return arr;
}

FeatureInfo common_features(const Members& members) {
  if (members.empty()) throw Error(ErrorCode::InvalidArgument, "ensemble needs at least one member");
  const FeatureInfo& f = members.front()->features();
  for (const auto& m : members) {
    if (!m->fitted()) throw Error(ErrorCode::InvalidArgument, m->kind() + " member is not fitted");
    if (!(m->features() == f)) throw Error(ErrorCode::SchemaMismatch, "members disagree on feature columns");
  }
  return f;
}

}  // namespace

Members members_from_config(const Json& config) {
  Members out;
  if (config.contains("members")) {
    for (const auto& m : config.at("members")) {
      out.push_back(make_classifier(m.at("kind").get<std::string>(),
                                    m.contains("config") ? m.at("config") : Json::object()));
    }
  } else {
    for (const auto& kind : base_model_kinds()) out.push_back(make_classifier(kind));
  }
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "ensemble needs at least one member");
  return out;
}

// --- hard vote --------------------------------------------------------------

VoteClassifier::VoteClassifier(Json config)
    : Classifier(std::move(config)),
      members_(members_from_config(config_)),
      tieBreak_(config_.value("tieBreak", std::string("mlp"))) {}

VoteClassifier::VoteClassifier(Members fitted, std::string tieBreak)
    : Classifier(Json::object()), members_(std::move(fitted)), tieBreak_(std::move(tieBreak)) {
  config_ = Json{{"members", member_roster(members_)}, {"tieBreak", tieBreak_}};
  features_ = common_features(members_);
  fitted_ = true;
}

std::vector<std::string> VoteClassifier::member_names() const {
  std::vector<std::string> names;
  for (const auto& m : members_) names.push_back(m->kind());
  return names;
}

void VoteClassifier::fit(const LabeledDataset& train) {
  begin_fit(train);
  fit_all(members_, train);
  fitted_ = true;
}

Eigen::VectorXd VoteClassifier::predict_proba(const Eigen::MatrixXd& X) const {
  check_width(X);
  Eigen::VectorXd share = Eigen::VectorXd::Zero(X.rows());
  for (const auto& m : members_) share += m->predict(X).cast<double>();
  return share / static_cast<double>(members_.size());
}

Eigen::VectorXi VoteClassifier::predict(const Eigen::MatrixXd& X, double threshold) const {
  check_width(X);
  const auto names = member_names();
  std::vector<Eigen::VectorXi> calls;
  for (const auto& m : members_) calls.push_back(m->predict(X, threshold));
  Eigen::VectorXi out(X.rows());
  std::vector<int> votes(members_.size());
  for (Index i = 0; i < X.rows(); ++i) {
    for (std::size_t m = 0; m < members_.size(); ++m) votes[m] = calls[m](i);
    out(i) = hard_vote(votes, names, tieBreak_);
  }
  return out;
}

std::unique_ptr<Classifier> VoteClassifier::clone_unfitted() const {
  return std::make_unique<VoteClassifier>(Json{{"members", member_roster(members_)}, {"tieBreak", tieBreak_}});
}

Json VoteClassifier::state_json() const { return Json{{"members", members_to_json(members_)}}; }

void VoteClassifier::load_state(const Json& state) {
  members_ = members_from_json(state.at("members"));
}

// --- soft vote --------------------------------------------------------------

SoftVoteClassifier::SoftVoteClassifier(Json config)
    : Classifier(std::move(config)), members_(members_from_config(config_)) {
  weights_ = config_.value("weights", std::vector<double>(members_.size(), 1.0));
  if (weights_.size() != members_.size()) {
    throw Error(ErrorCode::WeightMismatch, "expected one weight per member");
  }
}

SoftVoteClassifier::SoftVoteClassifier(Members fitted, std::vector<double> weights)
    : Classifier(Json::object()), members_(std::move(fitted)), weights_(std::move(weights)) {
  if (weights_.size() != members_.size()) {
    throw Error(ErrorCode::WeightMismatch, "expected one weight per member");
  }
  config_ = Json{{"members", member_roster(members_)}, {"weights", weights_}};
  features_ = common_features(members_);
  fitted_ = true;
}

void SoftVoteClassifier::fit(const LabeledDataset& train) {
  begin_fit(train);
  fit_all(members_, train);
  fitted_ = true;
}

Eigen::VectorXd SoftVoteClassifier::predict_proba(const Eigen::MatrixXd& X) const {
  check_width(X);
  Eigen::MatrixXd P(X.rows(), static_cast<Index>(members_.size()));
  for (std::size_t m = 0; m < members_.size(); ++m) P.col(static_cast<Index>(m)) = members_[m]->predict_proba(X);
  Eigen::VectorXd out(X.rows());
  std::vector<double> row(members_.size());
  for (Index i = 0; i < X.rows(); ++i) {
    for (std::size_t m = 0; m < members_.size(); ++m) row[m] = P(i, static_cast<Index>(m));
    out(i) = soft_vote(weights_, row).p1;
  }
  return out;
}

std::unique_ptr<Classifier> SoftVoteClassifier::clone_unfitted() const {
  return std::make_unique<SoftVoteClassifier>(Json{{"members", member_roster(members_)}, {"weights", weights_}});
}

Json SoftVoteClassifier::state_json() const {
  return Json{{"members", members_to_json(members_)}, {"weights", weights_}};
}

void SoftVoteClassifier::load_state(const Json& state) {
  members_ = members_from_json(state.at("members"));
  weights_ = state.at("weights").get<std::vector<double>>();
}

// --- stacking ---------------------------------------------------------------

StackClassifier::StackClassifier(Json config)
    : Classifier(std::move(config)),
      members_(members_from_config(config_)),
      folds_(config_.value("folds", 5)),
      seed_(config_.value("seed", std::uint64_t{0})),
      metaLambda_(config_.value("metaLambda", 1.0)) {}

StackClassifier::StackClassifier(Members prototypes, int folds, std::uint64_t seed, double metaLambda)
    : Classifier(Json::object()),
      members_(std::move(prototypes)),
      folds_(folds),
      seed_(seed),
      metaLambda_(metaLambda) {
  config_ = Json{{"members", member_roster(members_)}, {"folds", folds_}, {"seed", seed_},
                 {"metaLambda", metaLambda_}};
}

void StackClassifier::fit(const LabeledDataset& train) {
  begin_fit(train);
  std::vector<const Classifier*> protos;
  for (const auto& m : members_) protos.push_back(m.get());
  trace_ = out_of_fold_predictions(train, protos, folds_, seed_);
  LogisticSettings s;
  s.penalty = Penalty::L2;
  s.lambda = metaLambda_;
  meta_ = logreg_fit(trace_.meta, train.y, s);
  fit_all(members_, train);
  fitted_ = true;
}

Eigen::VectorXd StackClassifier::predict_proba(const Eigen::MatrixXd& X) const {
  check_width(X);
  Eigen::MatrixXd Z(X.rows(), static_cast<Index>(members_.size()));
  for (std::size_t m = 0; m < members_.size(); ++m) Z.col(static_cast<Index>(m)) = members_[m]->predict_proba(X);
  return logreg_predict_proba_batch(meta_, Z);
}

std::unique_ptr<Classifier> StackClassifier::clone_unfitted() const {
  return std::make_unique<StackClassifier>(clone_all(members_), folds_, seed_, metaLambda_);
}

Json StackClassifier::state_json() const {
  return Json{{"members", members_to_json(members_)}, {"meta", meta_.to_json()}};
}

void StackClassifier::load_state(const Json& state) {
  members_ = members_from_json(state.at("members"));
  meta_ = LogisticModel::from_json(state.at("meta"));
}

// --- AdaBoost ---------------------------------------------------------------

void AdaBoostClassifier::fit(const LabeledDataset& train) {
  begin_fit(train);
  model_ = adaboost_fit(train.X, train.y, config_.value("stages", 50), config_.value("weakDepth", 1));
  fitted_ = true;
}

Eigen::VectorXd AdaBoostClassifier::predict_proba(const Eigen::MatrixXd& X) const {
  check_width(X);
  Eigen::VectorXd p(X.rows());
  for (Index i = 0; i < X.rows(); ++i) p(i) = adaboost_predict_proba(model_, X.row(i));
  return p;
}

std::unique_ptr<Classifier> AdaBoostClassifier::clone_unfitted() const {
  return std::make_unique<AdaBoostClassifier>(config_);
}

std::unique_ptr<Classifier> make_ensemble(const std::string& kind, const Json& config) {
  if (kind == "vote") return std::make_unique<VoteClassifier>(config);
  if (kind == "soft") return std::make_unique<SoftVoteClassifier>(config);
  if (kind == "stack") return std::make_unique<StackClassifier>(config);
  if (kind == "ada") return std::make_unique<AdaBoostClassifier>(config);
  throw Error(ErrorCode::InvalidArgument, "unknown ensemble kind '" + kind + "'");
}

}  // namespace crs
