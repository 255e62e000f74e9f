#include "crs/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "crs/error.hpp"
#include "json.hpp"

namespace crs {

namespace {

std::vector<Index> rows_of(const Eigen::VectorXi& y, int label) {
  std::vector<Index> out;
  for (Index i = 0; i < y.size(); ++i) {
    if (y(i) == label) out.push_back(i);
  }
  return out;
}

Index round_half_up(double v) { return static_cast<Index>(std::floor(v + 0.5)); }

double safe_div(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

SplitAssignment stratified_split(const Eigen::VectorXi& y, double testFraction,
                                 std::uint64_t seed) {
  if (!(testFraction > 0.0 && testFraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "test fraction must lie in (0,1)");
  }
  std::array<std::vector<Index>, 2> byClass{rows_of(y, 0), rows_of(y, 1)};
  if (static_cast<Index>(byClass[0].size() + byClass[1].size()) != y.size()) {
    throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
  }
  std::array<Index, 2> testCount{};
  for (int c = 0; c < 2; ++c) {
    testCount[c] = round_half_up(testFraction * static_cast<double>(byClass[c].size()));
  }
  const Index wanted = round_half_up(testFraction * static_cast<double>(y.size()));
  const int majority = byClass[1].size() >= byClass[0].size() ? 1 : 0;
  testCount[majority] += wanted - (testCount[0] + testCount[1]);
  for (int c = 0; c < 2; ++c) {
    const auto n = static_cast<Index>(byClass[c].size());
    if (testCount[c] < 1 || testCount[c] > n - 1) {
      throw Error(ErrorCode::DegenerateClass,
                  "class " + std::to_string(c) + " with " + std::to_string(n) +
                      " rows cannot fill both train and test sides");
    }
  }

  SplitAssignment out;
  out.fraction = testFraction;
  out.seed = seed;
  std::mt19937_64 rng(seed);
  std::vector<bool> isTest(static_cast<std::size_t>(y.size()), false);
  for (int c = 0; c < 2; ++c) {
    auto rows = byClass[c];
    std::shuffle(rows.begin(), rows.end(), rng);
    for (Index i = 0; i < testCount[c]; ++i) isTest[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])] = true;
  }
  for (Index i = 0; i < y.size(); ++i) {
    (isTest[static_cast<std::size_t>(i)] ? out.testRows : out.trainRows).push_back(i);
  }
  return out;
}

SplitAssignment stratified_split(const LabeledDataset& data, double testFraction,
                                 std::uint64_t seed) {
  SplitAssignment out = stratified_split(data.y, testFraction, seed);
  for (auto r : out.trainRows) out.trainIds.push_back(data.ids[static_cast<std::size_t>(r)]);
  for (auto r : out.testRows) out.testIds.push_back(data.ids[static_cast<std::size_t>(r)]);
  return out;
}

std::vector<int> stratified_folds(const Eigen::VectorXi& y, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::DegenerateFold, "need at least two folds");
  std::vector<int> fold(static_cast<std::size_t>(y.size()), -1);
  std::mt19937_64 rng(seed);
  for (int c = 0; c < 2; ++c) {
    auto rows = rows_of(y, c);
    if (static_cast<int>(rows.size()) < k) {
      throw Error(ErrorCode::DegenerateFold, "class " + std::to_string(c) + " has only " +
                                                 std::to_string(rows.size()) + " rows for " +
                                                 std::to_string(k) + " folds");
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      fold[static_cast<std::size_t>(rows[i])] = static_cast<int>(i % static_cast<std::size_t>(k));
    }
  }
  return fold;
}

ConfusionMatrix ConfusionMatrix::from_rows(std::int64_t tn, std::int64_t fp, std::int64_t fn,
                                           std::int64_t tp) {
  ConfusionMatrix cm;
  cm.counts << tn, fp, fn, tp;
  return cm;
}

ConfusionMatrix confusion(const Eigen::VectorXi& yTrue, const Eigen::VectorXi& yPred) {
  if (yTrue.size() != yPred.size()) {
    throw Error(ErrorCode::LengthMismatch, "label vectors differ in length");
  }
  if (yTrue.size() == 0) throw Error(ErrorCode::LengthMismatch, "no rows to evaluate");
  ConfusionMatrix cm;
  for (Index i = 0; i < yTrue.size(); ++i) {
    const int t = yTrue(i);
    const int p = yPred(i);
    if ((t != 0 && t != 1) || (p != 0 && p != 1)) {
      throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
    }
    ++cm.counts(t, p);
  }
  return cm;
}

EvalReport report(const ConfusionMatrix& cm) {
  EvalReport r;
  r.cm = cm;
  const double total = static_cast<double>(cm.total());
  if (total <= 0.0) throw Error(ErrorCode::InvalidArgument, "empty confusion matrix");
  for (int c = 0; c < 2; ++c) {
    const double tp = static_cast<double>(cm.counts(c, c));
    const double predicted = static_cast<double>(cm.counts.col(c).sum());
    const double actual = static_cast<double>(cm.counts.row(c).sum());
    auto& m = r.perClass[static_cast<std::size_t>(c)];
    m.precision = safe_div(tp, predicted);
    m.recall = safe_div(tp, actual);
    m.f1 = safe_div(2.0 * m.precision * m.recall, m.precision + m.recall);
    m.support = cm.counts.row(c).sum();
  }
  const auto& c0 = r.perClass[0];
  const auto& c1 = r.perClass[1];
  const double w0 = static_cast<double>(c0.support) / total;
  const double w1 = static_cast<double>(c1.support) / total;
  r.accuracy = static_cast<double>(cm.counts.trace()) / total;
  r.macroPrecision = 0.5 * (c0.precision + c1.precision);
  r.macroRecall = 0.5 * (c0.recall + c1.recall);
  r.macroF1 = 0.5 * (c0.f1 + c1.f1);
  r.weightedPrecision = w0 * c0.precision + w1 * c1.precision;
  r.weightedRecall = w0 * c0.recall + w1 * c1.recall;
  r.weightedF1 = w0 * c0.f1 + w1 * c1.f1;
  r.balancedAccuracy = r.macroRecall;
  return r;
}

double balanced_accuracy(const Eigen::VectorXi& yTrue, const Eigen::VectorXi& yPred) {
  return report(confusion(yTrue, yPred)).balancedAccuracy;
}

Eigen::VectorXi threshold_labels(const Eigen::VectorXd& probabilities, double threshold) {
  return (probabilities.array() >= threshold).cast<int>();
}

std::string EvalReport::to_jsonl(const std::string& model) const {
  using nlohmann::json;
  std::string out;
  out += json{{"record", "confusion"},
              {"model", model},
              {"counts", {{cm.counts(0, 0), cm.counts(0, 1)}, {cm.counts(1, 0), cm.counts(1, 1)}}}}
             .dump() +
         "\n";
  for (int c = 0; c < 2; ++c) {
    const auto& m = perClass[static_cast<std::size_t>(c)];
    out += json{{"record", "class"},     {"model", model},        {"class", c},
                {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
                {"support", m.support}}
               .dump() +
           "\n";
  }
  out += json{{"record", "summary"},
              {"model", model},
              {"accuracy", accuracy},
              {"balancedAccuracy", balancedAccuracy},
              {"macroPrecision", macroPrecision},
              {"macroRecall", macroRecall},
              {"macroF1", macroF1},
              {"weightedPrecision", weightedPrecision},
              {"weightedRecall", weightedRecall},
              {"weightedF1", weightedF1}}
             .dump() +
         "\n";
  return out;
}

std::string EvalReport::to_text(const std::string& model) const {
  std::string out = model + "\n";
  char line[160];
  const auto total = cm.total();
  std::snprintf(line, sizeof line, "%14s %10s %10s %10s %10s\n", "", "precision", "recall",
                "f1-score", "support");
  out += line;
  out += "\n";
  for (int c = 0; c < 2; ++c) {
    const auto& m = perClass[static_cast<std::size_t>(c)];
    std::snprintf(line, sizeof line, "%14d %10.2f %10.2f %10.2f %10lld\n", c, m.precision,
                  m.recall, m.f1, static_cast<long long>(m.support));
    out += line;
  }
  out += "\n";
  std::snprintf(line, sizeof line, "%14s %10s %10s %10.2f %10lld\n", "accuracy", "", "",
                accuracy, static_cast<long long>(total));
  out += line;
  std::snprintf(line, sizeof line, "%14s %10.2f %10.2f %10.2f %10lld\n", "macro avg",
                macroPrecision, macroRecall, macroF1, static_cast<long long>(total));
  out += line;
  std::snprintf(line, sizeof line, "%14s %10.2f %10.2f %10.2f %10lld\n", "weighted avg",
                weightedPrecision, weightedRecall, weightedF1, static_cast<long long>(total));
  out += line;
  out += "\nconfusion matrix (rows = true class, columns = predicted)\n";
  std::snprintf(line, sizeof line, "%14s %8s %8s\n", "", "pred 0", "pred 1");
  out += line;
  for (int t = 0; t < 2; ++t) {
    std::snprintf(line, sizeof line, "%14s %8lld %8lld\n", t == 0 ? "true 0" : "true 1",
                  static_cast<long long>(cm.counts(t, 0)), static_cast<long long>(cm.counts(t, 1)));
    out += line;
  }
  return out;
}

}  // namespace crs
