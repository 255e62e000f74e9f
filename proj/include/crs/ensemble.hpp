#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "crs/classifier.hpp"
#include "crs/linear.hpp"
#include "crs/tree.hpp"

namespace crs {

// ---------------------------------------------------------------------------
// Pure aggregation rules

/// Majority of 0/1 votes; an exact tie returns the vote of the member named
/// tieBreak. Throws InvalidArgument when names and votes differ in length,
/// the panel is empty, or tieBreak is not a member.
int hard_vote(std::span<const int> votes, std::span<const std::string> names,
              const std::string& tieBreak = "mlp");

struct SoftVote {
  int label = 0;
  double p0 = 0.0;
  double p1 = 0.0;
};

/// Convex combination of member class-1 posteriors; label 1 iff p1 >= p0.
/// Weights are normalized; throws WeightMismatch on a size mismatch,
/// negative weight, or zero total.
SoftVote soft_vote(std::span<const double> weights, std::span<const double> memberP1);

// ---------------------------------------------------------------------------
// Stacking

/// Out-of-fold bookkeeping: meta(i, m) came from member m trained on the
/// rows in foldTrainRows[folds[i]].
struct StackTrace {
  Eigen::MatrixXd meta;
  std::vector<int> folds;
  std::vector<std::vector<Index>> foldTrainRows;
};

/// Fits a fresh copy of every member on each k-1 fold union and fills the
/// held-out rows' meta features. Throws DegenerateFold when k < 2 or a class
/// has fewer than k rows.
StackTrace out_of_fold_predictions(const LabeledDataset& train,
                                   const std::vector<const Classifier*>& members, int k,
                                   std::uint64_t seed);

/// True iff no row's meta features were produced by a model that saw the row.
bool stacking_leakage_free(const StackTrace& trace);

// ---------------------------------------------------------------------------
// AdaBoost with depth-limited weighted trees

struct AdaBoostStage {
  DecisionTree tree;
  double alpha = 0.0;
  double error = 0.0;
};

struct AdaBoostModel {
  std::vector<AdaBoostStage> stages;

  /// sum_m alpha_m h_m(x), h in {-1, +1}
  double margin(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  Json to_json() const;
  static AdaBoostModel from_json(const Json& j);
};

/// 1/2 ln((1 - eps) / eps)
double adaboost_stage_weight(double eps);

struct AdaBoostTrace {
  std::vector<double> weightSums;  // after each renormalization
  std::string stopReason;          // "max-stages" | "perfect-stage" | "weak-stage"
};

/// Stops after a stage with zero weighted error (kept) or error >= 0.5 (dropped).
AdaBoostModel adaboost_fit(const Eigen::MatrixXd& X, const Eigen::VectorXi& y, int stages,
                           int weakDepth = 1, AdaBoostTrace* trace = nullptr);
/// Class 1 iff margin >= 0.
int adaboost_predict(const AdaBoostModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row);
/// sigmoid(2 * margin)
double adaboost_predict_proba(const AdaBoostModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row);

// ---------------------------------------------------------------------------
// Ensemble classifiers

using Members = std::vector<std::unique_ptr<Classifier>>;

/// Members built from config["members"] = [{"kind", "config"}...]; the six
/// base learners with defaults when absent.
Members members_from_config(const Json& config);

class VoteClassifier final : public Classifier {
 public:
  explicit VoteClassifier(Json config);
  /// Wraps already-fitted members.
  VoteClassifier(Members fitted, std::string tieBreak);

  std::string kind() const override { return "vote"; }
  void fit(const LabeledDataset& train) override;
  /// Share of members voting 1 at threshold 0.5.
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& X) const override;
  /// Members decide at `threshold`, then the hard-vote rule applies.
  Eigen::VectorXi predict(const Eigen::MatrixXd& X, double threshold = 0.5) const override;
  std::unique_ptr<Classifier> clone_unfitted() const override;

  const Members& members() const { return members_; }
  std::vector<std::string> member_names() const;

 protected:
  Json state_json() const override;
  void load_state(const Json& state) override;

 private:
  Members members_;
  std::string tieBreak_;
};

class SoftVoteClassifier final : public Classifier {
 public:
  explicit SoftVoteClassifier(Json config);
  SoftVoteClassifier(Members fitted, std::vector<double> weights);

  std::string kind() const override { return "soft"; }
  void fit(const LabeledDataset& train) override;
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& X) const override;
  std::unique_ptr<Classifier> clone_unfitted() const override;

 protected:
  Json state_json() const override;
  void load_state(const Json& state) override;

 private:
  Members members_;
  std::vector<double> weights_;
};

class StackClassifier final : public Classifier {
 public:
  explicit StackClassifier(Json config);
  /// Unfitted members supplied directly (not serializable if they are not).
  StackClassifier(Members prototypes, int folds, std::uint64_t seed, double metaLambda = 1.0);

  std::string kind() const override { return "stack"; }
  void fit(const LabeledDataset& train) override;
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& X) const override;
  std::unique_ptr<Classifier> clone_unfitted() const override;

  const StackTrace& trace() const { return trace_; }
  const LogisticModel& meta() const { return meta_; }

 protected:
  Json state_json() const override;
  void load_state(const Json& state) override;

 private:
  Members members_;
  int folds_ = 5;
  std::uint64_t seed_ = 0;
  double metaLambda_ = 1.0;
  LogisticModel meta_;
  StackTrace trace_;
};

class AdaBoostClassifier final : public Classifier {
 public:
  explicit AdaBoostClassifier(Json config) : Classifier(std::move(config)) {}

  std::string kind() const override { return "ada"; }
  void fit(const LabeledDataset& train) override;
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& X) const override;
  std::unique_ptr<Classifier> clone_unfitted() const override;

 protected:
  Json state_json() const override { return model_.to_json(); }
  void load_state(const Json& state) override { model_ = AdaBoostModel::from_json(state); }

 private:
  AdaBoostModel model_;
};

std::unique_ptr<Classifier> make_ensemble(const std::string& kind, const Json& config);

}  // namespace crs
