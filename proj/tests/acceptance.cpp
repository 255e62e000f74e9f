#include <signal.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "crs/bench.hpp"
#include "crs/classifier.hpp"
#include "crs/ensemble.hpp"
#include "crs/error.hpp"
#include "crs/eval.hpp"
#include "crs/explain.hpp"
#include "crs/ingest.hpp"
#include "crs/label_store.hpp"
#include "crs/linear.hpp"
#include "crs/mlp.hpp"
#include "crs/svm.hpp"
#include "crs/tree.hpp"
#include "harness.hpp"
// After Eigen: the resolver header defines a macro that collides with Eigen internals.
#include <httplib.h>
#include "oracles.hpp"

namespace fs = std::filesystem;
using crs::Index;
using crs::Json;

namespace {

const fs::path kDataDir = CRS_DATA_DIR;
const std::string kCli = CRS_CLI_PATH;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

crs::ConfusionMatrix cm_of(std::int64_t tn, std::int64_t fp, std::int64_t fn, std::int64_t tp) {
  crs::ConfusionMatrix cm;
  cm.counts << tn, fp, fn, tp;
  return cm;
}

struct Cohort {
  crs::LabeledDataset all, train, test;
};

Cohort checked_in_cohort() {
  const auto schema = crs::Schema::load(kDataDir / "schema.txt");
  const auto raw = crs::RawCohort::from_csv(crs::read_csv(kDataDir / "synthetic_cohort.csv"), "synthetic");
  Cohort c;
  c.all = crs::clean_cohort(raw, schema, {}).first;
  const auto split = crs::stratified_split(c.all, 0.2, 7);
  c.train = c.all.subset(split.trainRows);
  c.test = c.all.subset(split.testRows);
  return c;
}

// ---------------------------------------------------------------------------

Outcome report_arithmetic() {
  struct Reference {
    const char* model;
    crs::ConfusionMatrix cm;
    double accuracy;
    std::vector<std::pair<std::string, double>> values;  // "P0", "R1", ...
  };
  // Printed two-decimal values accompanying each matrix.
  const std::vector<Reference> refs{
      {"lr", cm_of(6, 14, 2, 83), 0.85, {{"P0", 0.75}, {"R0", 0.30}, {"F0", 0.43}, {"P1", 0.86}, {"R1", 0.98}, {"F1", 0.91}}},
      {"svm", cm_of(2, 18, 4, 81), 0.79, {{"R0", 0.10}, {"F0", 0.15}, {"P1", 0.82}, {"R1", 0.95}, {"F1", 0.88}}},
      {"nb", cm_of(20, 0, 74, 11), 0.30, {{"P0", 0.21}, {"R0", 1.00}, {"F0", 0.35}, {"R1", 0.13}, {"F1", 0.23}}},
      {"mlp", cm_of(9, 11, 5, 80), 0.85, {{"R0", 0.45}, {"F0", 0.53}, {"P1", 0.88}, {"R1", 0.94}, {"F1", 0.91}}},
      {"rf", cm_of(5, 15, 4, 81), 0.82, {{"R0", 0.25}, {"F0", 0.34}, {"P1", 0.84}, {"R1", 0.95}, {"F1", 0.90}}},
      {"xgb", cm_of(5, 15, 3, 82), 0.83, {{"P0", 0.62}, {"R0", 0.25}, {"F0", 0.36}, {"P1", 0.85}, {"R1", 0.96}, {"F1", 0.90}}},
  };
  int checked = 0;
  double worst = 0.0;
  std::string worstAt;
  for (const auto& ref : refs) {
    const auto r = crs::report(ref.cm);
    auto check = [&](const std::string& what, double got, double want) {
      ++checked;
      const double diff = std::fabs(got - want);
      if (diff > worst) {
        worst = diff;
        worstAt = std::string(ref.model) + "." + what;
      }
    };
    check("accuracy", r.accuracy, ref.accuracy);
    for (const auto& [key, want] : ref.values) {
      const auto& c = r.perClass[key[1] == '0' ? 0 : 1];
      const double got = key[0] == 'P' ? c.precision : key[0] == 'R' ? c.recall : c.f1;
      check(key, got, want);
    }
  }
  // Two-decimal rounding of an exact half lands at 0.005 in binary; allow the representation slack.
  return {worst <= 0.005 + 1e-12, std::to_string(checked) + " values, max |diff| " + fmt(worst, 4) + " at " + worstAt};
}

Outcome split_exactness() {
  Eigen::VectorXi y(524);
  y.head(423).setOnes();
  y.tail(101).setZero();
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {1ULL, 7ULL, 42ULL, 2024ULL}) {
    const auto s = crs::stratified_split(y, 0.2, seed);
    int train1 = 0, test1 = 0;
    for (Index i : s.trainRows) train1 += y(i);
    for (Index i : s.testRows) test1 += y(i);
    const int train0 = static_cast<int>(s.trainRows.size()) - train1;
    const int test0 = static_cast<int>(s.testRows.size()) - test1;
    ok = ok && train1 == 338 && train0 == 81 && test1 == 85 && test0 == 20;
    detail = "train " + std::to_string(train1) + "/" + std::to_string(train0) + ", test " + std::to_string(test1) +
             "/" + std::to_string(test0);
  }
  const auto c = checked_in_cohort();
  ok = ok && c.train.count(1) == 338 && c.train.count(0) == 81 && c.test.count(1) == 85 && c.test.count(0) == 20;
  return {ok, detail + " (4 seeds + checked-in cohort)"};
}

Outcome mcid_labeling() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> tenths(0, 1100);
  std::uniform_real_distribution<double> scale(0.0, 110.0);
  int mismatches = 0, boundary = 0;
  for (int i = 0; i < 10000; ++i) {
    int a10, b10;
    if (i % 4 == 0) {
      // Pairs exactly on the 8.9-point boundary.
      a10 = std::uniform_int_distribution<int>(89, 1100)(rng);
      b10 = a10 - 89;
      ++boundary;
    } else {
      a10 = tenths(rng);
      b10 = tenths(rng);
    }
    const double a = a10 / 10.0, b = b10 / 10.0;
    const int expected = (a10 - b10) >= 89 ? 1 : 0;
    if (crs::label_outcome(a, b).value != expected) ++mismatches;
  }
  for (int i = 0; i < 10000; ++i) {
    const double a = scale(rng), b = scale(rng);
    if (std::fabs((a - b) - 8.9) < 1e-6) continue;
    if (crs::label_outcome(a, b).value != ((a - b) > 8.9 ? 1 : 0)) ++mismatches;
  }
  return {mismatches == 0, "20000 pairs (" + std::to_string(boundary) + " on the boundary), " +
                               std::to_string(mismatches) + " mismatches"};
}

Outcome gradient_fidelity() {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto random_matrix = [&](Index r, Index c) {
    Eigen::MatrixXd M(r, c);
    for (Index i = 0; i < M.size(); ++i) M.data()[i] = normal(rng);
    return M;
  };
  auto random_labels = [&](Index n) {
    Eigen::VectorXi y(n);
    for (Index i = 0; i < n; ++i) y(i) = i < 2 ? static_cast<int>(i) : uni(0, 1);
    return y;
  };

  double worstLr = 0.0, worstMlp = 0.0;
  int lrConfigs = 0, mlpConfigs = 0;
  for (int t = 0; t < 25; ++t) {
    const Index n = uni(5, 30), d = uni(1, 6);
    const Eigen::MatrixXd X = random_matrix(n, d);
    const Eigen::VectorXi y = random_labels(n);
    crs::LogisticModel m;
    m.w = random_matrix(d, 1);
    m.b = normal(rng);
    m.penalty = t % 3 == 0 ? crs::Penalty::L1 : crs::Penalty::L2;
    m.lambda = std::exp(normal(rng));
    Eigen::VectorXd sw = t % 2 ? crs::inverse_prevalence_weights(y) : Eigen::VectorXd::Ones(n);
    Eigen::VectorXd gw;
    double gb = 0.0;
    crs::logreg_gradient(m, X, y, sw, gw, gb);
    Eigen::VectorXd analytic(d + 1);
    analytic << gw, gb;
    const auto numeric = oracle::numeric_gradient(
        [&](const Eigen::VectorXd& p) { return crs::logreg_objective(oracle::logreg_from_params(m, p), X, y, sw); },
        oracle::logreg_params(m));
    worstLr = std::max(worstLr, oracle::relative_error(analytic, numeric));
    ++lrConfigs;
  }
  for (int t = 0; mlpConfigs < 25 && t < 200; ++t) {
    const Index n = uni(3, 20), d = uni(1, 5), k = uni(1, 6);
    const Eigen::MatrixXd X = random_matrix(n, d);
    const Eigen::VectorXi y = random_labels(n);
    crs::MlpModel m = crs::mlp_init(d, k, static_cast<std::uint64_t>(t));
    m.b1 = 0.5 * random_matrix(k, 1);
    m.b2 = normal(rng);
    m.lambda = t % 2 ? 0.0 : std::exp(normal(rng)) * 1e-2;
    m.classWeights = {std::exp(normal(rng)), std::exp(normal(rng))};
    // Rectifier kinks are not differentiable; keep configurations whose
    // pre-activations stay clear of zero by more than the difference step.
    if (oracle::mlp_min_abs_preactivation(m, X) < 1e-3) continue;
    const auto analytic = oracle::mlp_gradient_flat(crs::mlp_gradient(m, X, y));
    const auto numeric = oracle::numeric_gradient(
        [&](const Eigen::VectorXd& p) { return crs::mlp_loss(oracle::mlp_from_params(m, p), X, y); },
        oracle::mlp_params(m));
    worstMlp = std::max(worstMlp, oracle::relative_error(analytic, numeric));
    ++mlpConfigs;
  }
  const bool ok = lrConfigs >= 20 && mlpConfigs >= 20 && worstLr < 1e-4 && worstMlp < 1e-4;
  return {ok, "LR " + std::to_string(lrConfigs) + " configs max rel err " + fmt(worstLr, 3) + "; MLP " +
                  std::to_string(mlpConfigs) + " configs max rel err " + fmt(worstMlp, 3)};
}

Outcome boost_gain_oracle() {
  std::mt19937_64 rng(11);
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  int exact = 0, none = 0;
  for (int t = 0; t < 200; ++t) {
    const Index n = uni(2, 20), d = uni(1, 3);
    Eigen::MatrixXd X(n, d);
    Eigen::VectorXd g(n), h(n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < d; ++j) X(i, j) = t % 3 == 0 ? uni(0, 4) : uni(-1000, 1000) / 100.0;
      // Dyadic gradients and hessians keep every partial sum exact.
      g(i) = uni(-8, 8) / 8.0;
      h(i) = uni(1, 8) / 32.0;
    }
    std::vector<Index> rows(static_cast<std::size_t>(n)), feats(static_cast<std::size_t>(d));
    for (Index i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = i;
    for (Index j = 0; j < d; ++j) feats[static_cast<std::size_t>(j)] = j;
    const auto got = crs::best_split_boost(X, g, h, rows, feats, 1, 1.0, 0.0);
    const auto want = oracle::brute_force_boost_split(X, g, h, 1.0, 0.0);
    if (!got && !want) {
      ++exact;
      ++none;
    } else if (got && want && got->feature == want->feature && got->threshold == want->threshold &&
               got->gain == want->gain) {
      ++exact;
    }
  }

  Eigen::MatrixXd X(3, 1);
  X << 0.0, 0.2, 1.0;
  Eigen::VectorXd g(3), h(3);
  g << -0.5, -0.5, 0.5;  // p = 0.5, labels 1, 1, 0
  h << 0.25, 0.25, 0.25;
  const std::vector<Index> rows{0, 1, 2}, feats{0};
  const auto s = crs::best_split_boost(X, g, h, rows, feats, 1, 1.0, 0.0);
  crs::BoostSettings bs;
  bs.maxDepth = 1;
  bs.lambda = 1.0;
  const auto tree = crs::boost_tree_fit(X, g, h, rows, feats, bs);
  const double left = tree.predict(X.row(0)), right = tree.predict(X.row(2));
  const bool worked = s && std::fabs(s->gain - 0.361905) < 1e-6 && s->threshold > 0.2 && s->threshold < 1.0 &&
                      std::fabs(left - 2.0 / 3.0) < 1e-6 && std::fabs(right + 0.4) < 1e-6;
  return {exact == 200 && worked, std::to_string(exact) + "/200 exact (" + std::to_string(none) +
                                      " with no split); 3-row gain " + (s ? fmt(s->gain) : "none") + ", leaves " +
                                      fmt(left, 5) + " / " + fmt(right, 5)};
}

Outcome svm_optimality() {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal(0.0, 1.0);
  int datasets = 0, kktOk = 0, beaten = 0, feasible = 0;
  double worstKkt = 0.0;
  const double tol = 1e-3;
  while (datasets < 50) {
    const Index n = std::uniform_int_distribution<Index>(4, 12)(rng);
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXi y(n);
    for (Index i = 0; i < n; ++i) {
      y(i) = i < 2 ? static_cast<int>(i) : static_cast<int>(rng() % 2);
      X(i, 0) = normal(rng) + (y(i) ? 0.8 : -0.8);
      X(i, 1) = normal(rng);
    }
    crs::SvmSettings s;
    s.kernel = datasets % 2 ? crs::Kernel::linear() : crs::Kernel::rbf(0.5);
    s.C = std::exp(std::uniform_real_distribution<double>(std::log(0.1), std::log(10.0))(rng));
    s.tol = tol;
    s.seed = static_cast<std::uint64_t>(datasets) + 1;
    crs::SvmSolution sol;
    crs::svm_fit(X, y, s, &sol);
    ++datasets;

    const Eigen::MatrixXd K = crs::gram_matrix(s.kernel, X);
    const double v = oracle::kkt_violation(sol.alpha, sol.signedLabels, K, sol.b, s.C);
    worstKkt = std::max(worstKkt, v);
    if (v <= tol) ++kktOk;
    const bool box = (sol.alpha.array() >= 0.0).all() && (sol.alpha.array() <= s.C).all();
    if (box && std::fabs(sol.alpha.dot(sol.signedLabels)) < 1e-9) ++feasible;
    const double best = oracle::dual_objective(sol.alpha, sol.signedLabels, K);
    bool wins = true;
    for (int r = 0; r < 1000; ++r) {
      const auto a = oracle::random_feasible_alpha(sol.signedLabels, s.C, rng);
      if (oracle::dual_objective(a, sol.signedLabels, K) > best + 1e-12) wins = false;
    }
    if (wins) ++beaten;
  }
  return {kktOk == 50 && beaten == 50 && feasible == 50,
          "KKT within tol on " + std::to_string(kktOk) + "/50 (max violation " + fmt(worstKkt, 3) +
              "), feasible " + std::to_string(feasible) + "/50, beats 1000 random feasible points on " +
              std::to_string(beaten) + "/50"};
}

Outcome shapley_exactness() {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> normal(0.0, 1.0);

  // A smooth model with pairwise interactions so attributions are non-trivial.
  auto make_model = [&](Index d) {
    Eigen::VectorXd w(d);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
    for (Index j = 0; j < d; ++j) w(j) = normal(rng);
    for (Index j = 0; j + 1 < d; ++j) A(j, j + 1) = 0.5 * normal(rng);
    return crs::BatchFn([w, A](const Eigen::MatrixXd& Z) {
      Eigen::VectorXd out(Z.rows());
      for (Index i = 0; i < Z.rows(); ++i) {
        const Eigen::VectorXd z = Z.row(i).transpose();
        out(i) = 1.0 / (1.0 + std::exp(-(w.dot(z) + z.dot(A * z)) / 3.0));
      }
      return out;
    });
  };
  auto random_matrix = [&](Index r, Index c) {
    Eigen::MatrixXd M(r, c);
    for (Index i = 0; i < M.size(); ++i) M.data()[i] = normal(rng);
    return M;
  };

  std::ostringstream detail;
  bool ok = true;
  for (Index d : {6, 9, 12}) {
    const auto f = make_model(d);
    const Eigen::MatrixXd bg = random_matrix(20, d);
    const Eigen::RowVectorXd x = random_matrix(1, d);
    const auto exact = crs::shap_exact(f, x, bg);
    detail << "d=" << d << " err";
    double last = INFINITY;
    for (int budget : {64, 256, 1024, 4096}) {
      if (budget < 2 * d + 2) continue;
      const auto approx = crs::shap_kernel(f, x, bg, budget, 7);
      last = (approx.phi - exact.phi).cwiseAbs().maxCoeff();
      detail << " " << budget << ":" << fmt(last, 2);
    }
    detail << "; ";
    ok = ok && last < 0.01;
  }

  double worstEfficiency = 0.0, worstOracle = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Index d = 2 + t % 5;
    const auto f = make_model(d);
    const Eigen::MatrixXd bg = random_matrix(8, d);
    const Eigen::RowVectorXd x = random_matrix(1, d);
    const auto r = crs::shap_exact(f, x, bg);
    worstEfficiency = std::max(worstEfficiency, std::fabs(r.efficiency_residual()));
    worstOracle = std::max(worstOracle, (r.phi - oracle::shapley_by_permutations(f, x, bg)).cwiseAbs().maxCoeff());
  }
  ok = ok && worstEfficiency < 1e-6 && worstOracle < 1e-9;

  double worstLinear = 0.0;
  for (Index d : {3, 7, 12}) {
    const Eigen::VectorXd w = random_matrix(d, 1);
    const crs::BatchFn f = [w](const Eigen::MatrixXd& Z) { return Eigen::VectorXd(Z * w); };
    const Eigen::MatrixXd bg = random_matrix(30, d);
    const Eigen::RowVectorXd x = random_matrix(1, d);
    const Eigen::VectorXd closed = w.cwiseProduct((x - bg.colwise().mean()).transpose());
    worstLinear = std::max(worstLinear, (crs::shap_exact(f, x, bg).phi - closed).cwiseAbs().maxCoeff());
    worstLinear = std::max(worstLinear, (crs::shap_kernel(f, x, bg, 512, 3).phi - closed).cwiseAbs().maxCoeff());
  }
  ok = ok && worstLinear < 1e-8;
  detail << "efficiency residual " << fmt(worstEfficiency, 2) << "; vs permutation oracle " << fmt(worstOracle, 2)
         << "; linear closed form " << fmt(worstLinear, 2);
  return {ok, detail.str()};
}

Outcome ensemble_tie_rule() {
  std::mt19937_64 rng(41);
  const std::vector<std::string> roster{"lr", "svm", "nb", "rf", "xgb", "mlp"};
  int agree = 0;
  Eigen::MatrixXd votes(1000, 6);
  Eigen::VectorXi mlpVote(1000);
  for (int t = 0; t < 1000; ++t) {
    std::vector<int> v{1, 1, 1, 0, 0, 0};
    std::shuffle(v.begin(), v.end(), rng);
    auto names = roster;
    std::vector<std::size_t> order{0, 1, 2, 3, 4, 5};
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::string> shuffledNames;
    std::vector<int> shuffledVotes;
    for (auto k : order) {
      shuffledNames.push_back(names[k]);
      shuffledVotes.push_back(v[k]);
    }
    if (crs::hard_vote(shuffledVotes, shuffledNames, "mlp") == v[5]) ++agree;
    for (int j = 0; j < 6; ++j) votes(t, j) = v[static_cast<std::size_t>(j)];
    mlpVote(t) = v[5];
  }
  // Same ties routed through a fitted vote ensemble whose member j reads column j.
  crs::Members members;
  for (std::size_t j = 0; j < roster.size(); ++j) {
    const auto col = static_cast<Index>(j);
    members.push_back(std::make_unique<crs::FunctionClassifier>(
        roster[j], [col](const Eigen::Ref<const Eigen::RowVectorXd>& r) { return r(col); }));
    members.back()->fit(crs::make_dataset(votes.topRows(2), Eigen::Vector2i(0, 1)));
  }
  crs::VoteClassifier vote(std::move(members), "mlp");
  const int ensembleAgree = static_cast<int>((vote.predict(votes).array() == mlpVote.array()).count());

  const auto cohort = checked_in_cohort();
  std::vector<std::unique_ptr<crs::Classifier>> owned;
  for (const char* kind : {"lr", "nb"}) owned.push_back(crs::make_classifier(kind));
  const std::vector<const crs::Classifier*> bases{owned[0].get(), owned[1].get()};
  int audits = 0, clean = 0;
  for (int k : {2, 3, 5, 10}) {
    for (std::uint64_t seed : {1ULL, 2ULL}) {
      const auto trace = crs::out_of_fold_predictions(cohort.train, bases, k, seed);
      ++audits;
      bool independent = crs::stacking_leakage_free(trace);
      for (std::size_t i = 0; i < trace.folds.size(); ++i) {
        const auto& tr = trace.foldTrainRows[static_cast<std::size_t>(trace.folds[i])];
        independent = independent && std::find(tr.begin(), tr.end(), static_cast<Index>(i)) == tr.end();
      }
      if (independent) ++clean;
    }
  }
  // The auditor must catch a planted leak.
  auto leaky = crs::out_of_fold_predictions(cohort.train, bases, 5, 1);
  leaky.foldTrainRows[static_cast<std::size_t>(leaky.folds[0])].push_back(0);
  const bool caught = !crs::stacking_leakage_free(leaky);

  return {agree == 1000 && ensembleAgree == 1000 && clean == audits && caught,
          "hard_vote " + std::to_string(agree) + "/1000, vote ensemble " + std::to_string(ensembleAgree) +
              "/1000; leakage audit clean on " + std::to_string(clean) + "/" + std::to_string(audits) +
              " fold assignments, planted leak " + (caught ? "caught" : "missed")};
}

Outcome end_to_end() {
  const auto start = std::chrono::steady_clock::now();
  const auto schema = crs::Schema::load(kDataDir / "schema.txt");
  crs::SyntheticSpec spec;  // n=524, 423/101, signal 1.0, seed 7
  const auto regenerated = crs::format_csv(crs::generate_synthetic(spec, schema).to_csv());
  const bool checkedInMatches = regenerated == crs::read_text(kDataDir / "synthetic_cohort.csv");

  const auto c = checked_in_cohort();
  const Json config = Json::parse(crs::read_text(kDataDir / "config.json"));
  crs::Members members;
  std::map<std::string, crs::EvalReport> reports;
  for (const auto& kind : crs::base_model_kinds()) {
    Json cfg = config.at("models").value(kind, Json::object());
    if (!cfg.contains("seed")) cfg["seed"] = config.at("seed");
    auto model = crs::make_classifier(kind, cfg);
    model->fit(c.train);
    reports[kind] = crs::report(crs::confusion(c.test.y, model->predict(c.test.X)));
    members.push_back(std::move(model));
  }
  crs::VoteClassifier vote(std::move(members), "mlp");
  reports["vote"] = crs::report(crs::confusion(c.test.y, vote.predict(c.test.X)));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto& mlp = reports["mlp"];
  const auto& v = reports["vote"];
  const bool ok = c.all.rows() == 524 && c.all.count(1) == 423 && checkedInMatches && mlp.accuracy >= 0.85 &&
                  mlp.perClass[0].f1 >= 0.45 && v.accuracy >= 0.85 && v.perClass[0].f1 >= 0.45 && seconds < 300.0;
  return {ok, "tuned mlp acc " + fmt(mlp.accuracy, 4) + " F1_0 " + fmt(mlp.perClass[0].f1, 4) + "; vote acc " +
                  fmt(v.accuracy, 4) + " F1_0 " + fmt(v.perClass[0].f1, 4) + "; " + fmt(seconds, 3) + " s" +
                  (checkedInMatches ? "" : "; checked-in cohort differs from regeneration")};
}

Outcome benchmark_protocol() {
  const auto c = checked_in_cohort();
  auto lr = crs::make_classifier("lr");
  lr->fit(c.train);
  const Eigen::VectorXd p = lr->predict_proba(c.test.X);
  std::vector<std::pair<std::string, double>> probs;
  for (Index i = 0; i < c.test.rows(); ++i) probs.emplace_back(c.test.ids[static_cast<std::size_t>(i)], p(i));
  const auto subset = crs::stratify_by_uncertainty(probs, 10);

  // Rank oracle: sort by (|p - 0.5|, id) and slice.
  auto ranked = probs;
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return std::make_pair(std::fabs(a.second - 0.5), a.first) < std::make_pair(std::fabs(b.second - 0.5), b.first);
  });
  auto slice = [&](std::size_t from) {
    std::vector<std::string> ids;
    for (std::size_t i = from; i < from + 10; ++i) ids.push_back(ranked[i].first);
    return ids;
  };
  const std::size_t mid = 10 + (105 - 20 - 10) / 2;
  std::set<std::string> distinct;
  for (const auto& bc : subset.cases) distinct.insert(bc.id);
  const bool tiers = subset.cases.size() == 30 && distinct.size() == 30 && subset.ids(crs::Tier::Hard) == slice(0) &&
                     subset.ids(crs::Tier::Medium) == slice(mid) && subset.ids(crs::Tier::Easy) == slice(95);

  std::vector<crs::ExpertLabel> tie;
  for (int conf : {5, 4, 3}) tie.push_back({"r" + std::to_string(tie.size()), "case", 1, conf, "", 0});
  for (int conf : {5, 5, 3}) tie.push_back({"r" + std::to_string(tie.size()), "case", 0, conf, "", 0});
  const auto d = crs::panel_decide(tie);
  const bool panel = d.decision == 0 && d.method == crs::PanelMethod::ConfidenceTieBreak &&
                     d.confidence[1] == 12 && d.confidence[0] == 13;

  std::map<std::string, int> truth;
  for (Index i = 0; i < c.test.rows(); ++i) truth[c.test.ids[static_cast<std::size_t>(i)]] = c.test.y(i);
  const auto single = crs::tier_accuracy(oracle::rater_matrix(subset, truth, {{6, 8, 10}}), truth, subset);
  const auto& s = single.perRater.begin()->second;
  const bool gradient = s[0] == 0.6 && s[1] == 0.8 && s[2] == 1.0;

  const auto six = crs::tier_accuracy(
      oracle::rater_matrix(subset, truth, {{5, 8, 9}, {6, 8, 10}, {5, 8, 9}, {6, 8, 9}, {5, 8, 10}, {6, 7, 9}}), truth,
      subset);
  const auto& q = six.pooled;
  const bool pooled = std::fabs(q[0] - 33.0 / 60) < 1e-12 && std::fabs(q[1] - 47.0 / 60) < 1e-12 &&
                      std::fabs(q[2] - 56.0 / 60) < 1e-12 && std::fabs(q[0] - 0.55) < 5e-4 &&
                      std::fabs(q[1] - 0.783) < 5e-4 && std::fabs(q[2] - 0.933) < 5e-4;

  // A rater whose calls reproduce the confusion structure [[3,4],[1,22]].
  crs::RaterCalls doctor;
  std::map<std::string, int> t30;
  for (int i = 0; i < 30; ++i) {
    const std::string id = "c" + std::to_string(i);
    const int truthLabel = i < 7 ? 0 : 1;
    t30[id] = truthLabel;
    doctor["doctor4"][id] = i < 3 ? 0 : i < 7 ? 1 : i < 8 ? 0 : 1;
  }
  const auto row = crs::rater_report(doctor, t30).front().report;
  const bool table = std::fabs(row.accuracy - 0.833) < 5e-4 && std::fabs(row.perClass[0].precision - 0.750) < 5e-4 &&
                     std::fabs(row.perClass[0].recall - 0.429) < 5e-4;

  return {tiers && panel && gradient && pooled && table,
          std::string("30-case partition ") + (tiers ? "ok" : "WRONG") + "; 12 vs 13 -> " +
              std::to_string(d.decision) + "; tiers (" + fmt(s[0]) + ", " + fmt(s[1]) + ", " + fmt(s[2]) +
              "); pooled (" + fmt(q[0], 4) + ", " + fmt(q[1], 4) + ", " + fmt(q[2], 4) + "); 4th rater acc " +
              fmt(row.accuracy, 3) + " P0 " + fmt(row.perClass[0].precision, 3) + " R0 " +
              fmt(row.perClass[0].recall, 3)};
}

// ---------------------------------------------------------------------------

struct Server {
  pid_t pid = -1;
  int port = 0;
};

Server start_server(const fs::path& dir) {
  Server s;
  s.port = harness::free_port();
  s.pid = harness::spawn(kCli,
                         {"--config", (dir / "config.json").string(), "--data-dir", (dir / "run").string(), "--port",
                          std::to_string(s.port), "serve"},
                         dir / "server.log");
  if (!harness::wait_healthy(s.port, 20.0)) throw std::runtime_error("service did not come up");
  return s;
}

Outcome service_durability() {
  const auto dir = harness::temp_dir("durability");
  Json config = Json::parse(crs::read_text(kDataDir / "config.json"));
  config["schema"] = (kDataDir / "schema.txt").string();
  config["ingest"]["input"] = (kDataDir / "synthetic_cohort.csv").string();
  config["serve"]["raterTokens"] = {{"tok-a", "alice"}, {"tok-b", "bob"}, {"tok-c", "carol"}};
  crs::write_text(dir / "config.json", config.dump(2));
  for (const char* step : {"ingest", "split"}) {
    const int rc = harness::run(kCli, {"--config", (dir / "config.json").string(), "--data-dir",
                                       (dir / "run").string(), step},
                                dir / "cli.log");
    if (rc != 0) return {false, std::string("pipeline step ") + step + " failed"};
  }

  auto server = start_server(dir);
  std::vector<std::string> cases;
  {
    httplib::Client client("127.0.0.1", server.port);
    const auto res = client.Get("/cases");
    if (!res || res->status != 200) return {false, "GET /cases failed"};
    const Json listing = Json::parse(res->body);
    for (const auto& cs : listing.at("cases")) cases.push_back(cs.at("id").get<std::string>());
    if (cases.size() < 20) return {false, "too few cases served"};
  }
  const std::map<std::string, std::string> tokens{{"alice", "tok-a"}, {"bob", "tok-b"}, {"carol", "tok-c"}};

  // Acknowledged writes, in order, per (rater, case).
  std::map<std::pair<std::string, std::string>, std::vector<std::pair<int, int>>> acked;
  std::map<std::string, std::string> cursors;
  std::mutex ackMu;
  std::atomic<int> ackCount{0};

  auto post_label = [&](httplib::Client& client, const std::string& rater, const std::string& id, int call,
                        int conf) {
    const Json body{{"caseId", id}, {"call", call}, {"confidence", conf}};
    const httplib::Headers h{{"Authorization", "Bearer " + tokens.at(rater)}};
    const auto res = client.Post("/labels", h, body.dump(), "application/json");
    if (res && res->status == 201) {
      std::lock_guard lock(ackMu);
      acked[{rater, id}].emplace_back(call, conf);
      ++ackCount;
      return true;
    }
    return false;
  };

  {
    httplib::Client client("127.0.0.1", server.port);
    int k = 0;
    for (const auto& [rater, tok] : tokens) {
      for (int i = 0; i < 12; ++i) post_label(client, rater, cases[static_cast<std::size_t>(i)], (i + k) % 2, 1 + i % 5);
      for (int i = 0; i < 4; ++i) post_label(client, rater, cases[static_cast<std::size_t>(i)], (i + k + 1) % 2, 5);
      const std::string cursor = cases[static_cast<std::size_t>(12 + k)];
      const httplib::Headers h{{"Authorization", "Bearer " + tok}};
      const auto res = client.Put("/sessions/" + rater, h, Json{{"cursor", cursor}}.dump(), "application/json");
      if (res && res->status == 200) cursors[rater] = cursor;
      ++k;
    }
  }

  // Burst of writes, SIGKILLed mid-stream.
  const int before = ackCount.load();
  std::atomic<bool> stop{false};
  std::thread writer([&] {
    httplib::Client client("127.0.0.1", server.port);
    client.set_read_timeout(1, 0);
    const std::vector<std::string> raters{"alice", "bob", "carol"};
    for (int i = 0; !stop; ++i) {
      if (!post_label(client, raters[static_cast<std::size_t>(i % 3)], cases[static_cast<std::size_t>(i % 20)],
                      i % 2, 1 + i % 5)) {
        break;
      }
    }
  });
  while (ackCount.load() < before + 60) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  harness::kill_and_wait(server.pid, SIGKILL);
  stop = true;
  writer.join();
  const int total = ackCount.load();

  server = start_server(dir);
  int intactKeys = 0, extras = 0;
  bool labelsOk = true;
  {
    httplib::Client client("127.0.0.1", server.port);
    for (const auto& [key, want] : acked) {
      const httplib::Headers h{{"Authorization", "Bearer " + tokens.at(key.first)}};
      const auto res = client.Get("/labels?case=" + key.second, h);
      const auto history = Json::parse(res->body).at("history");
      bool prefix = history.size() >= want.size();
      for (std::size_t i = 0; prefix && i < want.size(); ++i) {
        prefix = history[i].at("call").get<int>() == want[i].first &&
                 history[i].at("confidence").get<int>() == want[i].second &&
                 history[i].at("revision").get<int>() == static_cast<int>(i);
      }
      extras += static_cast<int>(history.size() - std::min(history.size(), want.size()));
      if (prefix) ++intactKeys;
      labelsOk = labelsOk && prefix;
    }
    for (const auto& [rater, cursor] : cursors) {
      const httplib::Headers h{{"Authorization", "Bearer " + tokens.at(rater)}};
      const auto res = client.Get("/sessions/" + rater, h);
      labelsOk = labelsOk && res && res->status == 200 && Json::parse(res->body).at("cursor") == cursor;
    }
  }
  harness::kill_and_wait(server.pid, SIGTERM);

  const auto labelsDir = dir / "run" / "labels";
  const auto replayed = crs::LabelStore::replay(crs::LabelStore::read_log(labelsDir / "events.jsonl"));
  const crs::LabelStore reopened(labelsDir, {});
  const bool replayOk = replayed.state_json() == reopened.state_json();
  const bool snapshotUsed = fs::exists(labelsDir / "snapshot.json");
  fs::remove_all(dir);

  return {labelsOk && replayOk && extras <= 1 && cursors.size() == 3,
          std::to_string(total) + " acknowledged writes (" + std::to_string(total - before) +
              " in the killed burst); " + std::to_string(intactKeys) + "/" + std::to_string(acked.size()) +
              " histories intact, " + std::to_string(extras) + " unacknowledged extra; " +
              std::to_string(cursors.size()) + " session cursors restored; replay " +
              (replayOk ? "equals" : "DIFFERS FROM") + " reopened store" +
              (snapshotUsed ? " (snapshot + tail)" : "")};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional criterion names restrict the run.
  const std::set<std::string> only(argv + 1, argv + argc);
  ::signal(SIGPIPE, SIG_IGN);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"report-arithmetic", report_arithmetic},
      {"split-exactness", split_exactness},
      {"mcid-labeling", mcid_labeling},
      {"gradient-fidelity", gradient_fidelity},
      {"boost-gain-oracle", boost_gain_oracle},
      {"svm-optimality", svm_optimality},
      {"shapley-exactness", shapley_exactness},
      {"ensemble-tie-rule", ensemble_tie_rule},
      {"end-to-end", end_to_end},
      {"benchmark-protocol", benchmark_protocol},
      {"service-durability", service_durability},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
