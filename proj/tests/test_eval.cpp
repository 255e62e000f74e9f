#include <doctest.h>

#include <random>
#include <set>

#include "crs/error.hpp"
#include "crs/eval.hpp"
#include "unit_common.hpp"

using crs::ErrorCode;
using doctest::Approx;

TEST_CASE("stratified_split: rounding rule and determinism") {
  Eigen::VectorXi y(524);
  y.head(423).setOnes();
  y.tail(101).setZero();
  const auto a = crs::stratified_split(y, 0.2, 3);
  const auto b = crs::stratified_split(y, 0.2, 3);
  CHECK(a.trainRows == b.trainRows);
  CHECK(a.testRows == b.testRows);
  CHECK(a.testRows.size() == 105);
  std::set<crs::Index> all(a.trainRows.begin(), a.trainRows.end());
  all.insert(a.testRows.begin(), a.testRows.end());
  CHECK(all.size() == 524);

  Eigen::VectorXi ten(10);
  ten << 0, 0, 0, 0, 0, 1, 1, 1, 1, 1;
  const auto s = crs::stratified_split(ten, 0.2, 1);
  REQUIRE(s.testRows.size() == 2);
  CHECK(ten(s.testRows[0]) + ten(s.testRows[1]) == 1);

  Eigen::VectorXi lonely(5);
  lonely << 0, 1, 1, 1, 1;
  CHECK_THROWS_CODE(crs::stratified_split(lonely, 0.2, 1), ErrorCode::DegenerateClass);
}

TEST_CASE("stratified_split: prevalence preserved on random label vectors") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    const int n = std::uniform_int_distribution<int>(20, 300)(rng);
    Eigen::VectorXi y(n);
    const double p = std::uniform_real_distribution<double>(0.2, 0.8)(rng);
    for (int i = 0; i < n; ++i) y(i) = i < 2 ? i : std::bernoulli_distribution(p)(rng);
    if (y.sum() < 3 || n - y.sum() < 3) continue;
    const auto s = crs::stratified_split(y, 0.2, static_cast<std::uint64_t>(t));
    double testOnes = 0;
    for (auto i : s.testRows) testOnes += y(i);
    const double testCount = static_cast<double>(s.testRows.size());
    CHECK(std::fabs(testOnes / testCount - y.cast<double>().mean()) <= 1.0 / testCount + 1e-12);
  }
}

TEST_CASE("stratified_folds: every class spread over k folds") {
  Eigen::VectorXi y(23);
  y.head(15).setOnes();
  y.tail(8).setZero();
  const auto folds = crs::stratified_folds(y, 4, 9);
  std::array<std::array<int, 2>, 4> counts{};
  for (int i = 0; i < 23; ++i) counts[static_cast<std::size_t>(folds[static_cast<std::size_t>(i)])][static_cast<std::size_t>(y(i))]++;
  for (const auto& c : counts) {
    CHECK(c[0] >= 2);
    CHECK(c[1] >= 3);
  }
  CHECK_THROWS_CODE(crs::stratified_folds(y, 9, 1), ErrorCode::DegenerateFold);
}

TEST_CASE("confusion: counting identity") {
  Eigen::VectorXi y(105);
  y.head(20).setZero();
  y.tail(85).setOnes();
  auto cm = crs::confusion(y, y);
  CHECK(cm.counts(0, 0) == 20);
  CHECK(cm.counts(1, 1) == 85);
  CHECK(cm.total() == 105);
  cm = crs::confusion(y, Eigen::VectorXi::Ones(105));
  CHECK(cm.counts(0, 1) == 20);
  CHECK(cm.counts(1, 1) == 85);
  CHECK(cm.counts(0, 0) == 0);
  CHECK_THROWS_CODE(crs::confusion(y, Eigen::VectorXi::Ones(3)), ErrorCode::LengthMismatch);
}

TEST_CASE("report: reference matrices") {
  const auto lr = crs::report(crs::ConfusionMatrix::from_rows(6, 14, 2, 83));
  CHECK(lr.accuracy == Approx(0.8476).epsilon(1e-4));
  CHECK(lr.perClass[0].precision == Approx(0.75));
  CHECK(lr.perClass[0].recall == Approx(0.30));
  CHECK(lr.perClass[0].f1 == Approx(0.4286).epsilon(1e-4));
  CHECK(lr.perClass[1].precision == Approx(0.8557).epsilon(1e-4));
  CHECK(lr.perClass[1].recall == Approx(0.9765).epsilon(1e-4));
  CHECK(lr.perClass[1].f1 == Approx(0.9121).epsilon(1e-4));

  const auto nb = crs::report(crs::ConfusionMatrix::from_rows(20, 0, 74, 11));
  CHECK(nb.accuracy == Approx(0.2952).epsilon(1e-4));
  CHECK(nb.perClass[0].precision == Approx(0.2128).epsilon(1e-4));
  CHECK(nb.perClass[0].recall == 1.0);
  CHECK(nb.perClass[0].f1 == Approx(0.3509).epsilon(1e-4));
  CHECK(nb.perClass[1].recall == Approx(0.1294).epsilon(1e-4));

  const auto mlp = crs::report(crs::ConfusionMatrix::from_rows(9, 11, 5, 80));
  CHECK(mlp.balancedAccuracy == Approx(0.6956).epsilon(1e-4));
  CHECK(mlp.macroF1 == Approx((mlp.perClass[0].f1 + mlp.perClass[1].f1) / 2));
  CHECK(mlp.weightedF1 == Approx((20 * mlp.perClass[0].f1 + 85 * mlp.perClass[1].f1) / 105));
  CHECK(mlp.perClass[0].support + mlp.perClass[1].support == 105);
}

TEST_CASE("report: zero denominators are 0 and metrics stay in [0,1]") {
  const auto r = crs::report(crs::ConfusionMatrix::from_rows(0, 20, 0, 85));
  CHECK(r.perClass[0].precision == 0.0);
  CHECK(r.perClass[0].f1 == 0.0);
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    std::uniform_int_distribution<int> u(0, 30);
    const auto m = crs::report(crs::ConfusionMatrix::from_rows(u(rng), u(rng), u(rng), u(rng) + 1));
    for (double v : {m.accuracy, m.macroF1, m.weightedF1, m.balancedAccuracy, m.perClass[0].f1, m.perClass[1].f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("report: perfect and constant predictors") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXi y(30);
    for (int i = 0; i < 30; ++i) y(i) = i < 2 ? i : static_cast<int>(rng() % 2);
    const auto r = crs::report(crs::confusion(y, y));
    CHECK(r.accuracy == 1.0);
    CHECK(r.perClass[0].f1 == 1.0);
    CHECK(r.perClass[1].f1 == 1.0);
    CHECK(crs::balanced_accuracy(y, Eigen::VectorXi::Zero(30)) == 0.5);
    CHECK(crs::balanced_accuracy(y, Eigen::VectorXi::Ones(30)) == 0.5);
  }
}

TEST_CASE("report: text and record renderings") {
  const auto r = crs::report(crs::ConfusionMatrix::from_rows(6, 14, 2, 83));
  const auto text = r.to_text("lr");
  CHECK(text.find("precision") != std::string::npos);
  CHECK(text.find("83") != std::string::npos);
  const auto line = r.to_jsonl("lr");
  CHECK(line.find("\"model\":\"lr\"") != std::string::npos);
}

TEST_CASE("threshold_labels: inclusive at tau") {
  Eigen::VectorXd p(3);
  p << 0.49, 0.5, 1.0;
  const Eigen::VectorXi at = crs::threshold_labels(p, 0.5);
  CHECK(at(0) == 0);
  CHECK(at(1) == 1);
  CHECK(crs::threshold_labels(p, 1.0)(1) == 0);
  CHECK(crs::threshold_labels(p, 1.0)(2) == 1);
}
