#include <doctest.h>

#include <random>

#include "crs/classifier.hpp"
#include "crs/error.hpp"
#include "crs/svm.hpp"
#include "oracles.hpp"
#include "unit_common.hpp"

using crs::ErrorCode;
using doctest::Approx;

TEST_CASE("kernel_eval: reference values") {
  CHECK(crs::kernel_eval(crs::Kernel::linear(), Eigen::RowVector2d(1, 2), Eigen::RowVector2d(3, 4)) == 11.0);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const Eigen::RowVectorXd a = testdata::gaussian(1, 4, rng), b = testdata::gaussian(1, 4, rng);
    const auto k = crs::Kernel::rbf(0.3);
    CHECK(crs::kernel_eval(k, a, a) == 1.0);
    CHECK(crs::kernel_eval(k, a, b) == crs::kernel_eval(k, b, a));
    CHECK(crs::kernel_eval(k, a, b) > 0.0);
    CHECK(crs::kernel_eval(k, a, b) <= 1.0);
  }
  CHECK_THROWS_CODE(crs::kernel_eval(crs::Kernel::linear(), Eigen::RowVector2d(1, 2), Eigen::RowVector3d(1, 2, 3)),
                    ErrorCode::DimensionMismatch);
}

TEST_CASE("svm_fit: symmetric pair has the closed-form solution") {
  Eigen::MatrixXd X(2, 1);
  X << -1, 1;
  Eigen::VectorXi y(2);
  y << 0, 1;
  crs::SvmSettings s;
  s.kernel = crs::Kernel::linear();
  s.C = 100.0;
  crs::SvmSolution sol;
  const auto m = crs::svm_fit(X, y, s, &sol);
  CHECK(sol.alpha(0) == Approx(0.5).epsilon(1e-6));
  CHECK(sol.alpha(1) == Approx(0.5).epsilon(1e-6));
  CHECK(std::fabs(m.b) < 1e-9);
  CHECK(crs::svm_decision(m, Eigen::RowVectorXd::Constant(1, 0.7)) == Approx(0.7));
  // Midpoint: decision 0, tie goes to class 1.
  CHECK(std::fabs(crs::svm_decision(m, Eigen::RowVectorXd::Zero(1))) < 1e-12);
  CHECK(crs::svm_predict(m, Eigen::RowVectorXd::Zero(1)) == 1);

  Eigen::MatrixXd X3(6, 1);
  X3 << -1, 1, -1, 1, -1, 1;
  Eigen::VectorXi y3(6);
  y3 << 0, 1, 0, 1, 0, 1;
  const auto m3 = crs::svm_fit(X3, y3, s);
  for (double x : {-2.0, -0.3, 0.4, 3.0})
    CHECK(crs::svm_decision(m3, Eigen::RowVectorXd::Constant(1, x)) == Approx(x).epsilon(1e-6));
}

TEST_CASE("svm_fit: XOR needs a nonlinear kernel") {
  Eigen::MatrixXd X(4, 2);
  X << 0, 0, 1, 1, 0, 1, 1, 0;
  Eigen::VectorXi y(4);
  y << 0, 0, 1, 1;
  crs::SvmSettings s;
  s.kernel = crs::Kernel::rbf(2.0);
  s.C = 10.0;
  const auto rbf = crs::svm_fit(X, y, s);
  Eigen::VectorXi pred(4);
  for (int i = 0; i < 4; ++i) pred(i) = crs::svm_predict(rbf, X.row(i));
  CHECK(pred == y);

  s.kernel = crs::Kernel::linear();
  const auto lin = crs::svm_fit(X, y, s);
  for (int i = 0; i < 4; ++i) pred(i) = crs::svm_predict(lin, X.row(i));
  CHECK(testdata::accuracy(pred, y) <= 0.75);
}

TEST_CASE("svm_fit: KKT, box, equality on random data") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 20; ++t) {
    const auto d = testdata::blobs(6 + t % 5, 2, 0.5, static_cast<std::uint64_t>(t));
    crs::SvmSettings s;
    s.kernel = t % 2 ? crs::Kernel::linear() : crs::Kernel::rbf(0.7);
    s.C = 0.5 + t % 3;
    crs::SvmSolution sol;
    const auto m = crs::svm_fit(d.X, d.y, s, &sol);
    const auto K = crs::gram_matrix(s.kernel, d.X);
    CHECK(oracle::kkt_violation(sol.alpha, sol.signedLabels, K, sol.b, s.C) <= s.tol);
    CHECK((sol.alpha.array() >= 0).all());
    CHECK((sol.alpha.array() <= s.C).all());
    CHECK(std::fabs(sol.alpha.dot(sol.signedLabels)) < 1e-8);
    CHECK(m.supportVectors.rows() == (sol.alpha.array() > 0).count());
    CHECK(crs::svm_dual_objective(sol.alpha, sol.signedLabels, K) ==
          Approx(oracle::dual_objective(sol.alpha, sol.signedLabels, K)));
    // Free support vectors sit on the margin.
    for (crs::Index i = 0; i < sol.alpha.size(); ++i) {
      if (sol.alpha(i) > 1e-6 && sol.alpha(i) < s.C - 1e-6)
        CHECK(sol.signedLabels(i) * crs::svm_decision(m, d.X.row(i)) == Approx(1.0).epsilon(2e-3));
    }
  }
}

TEST_CASE("svm: C does not change predictions on a separable toy") {
  const auto d = testdata::blobs(10, 2, 3.0, 2);
  std::vector<Eigen::VectorXi> preds;
  for (double C : {1.0, 10.0, 100.0}) {
    crs::SvmSettings s;
    s.kernel = crs::Kernel::linear();
    s.C = C;
    const auto m = crs::svm_fit(d.X, d.y, s);
    Eigen::VectorXi p(d.X.rows());
    for (crs::Index i = 0; i < d.X.rows(); ++i) p(i) = crs::svm_predict(m, d.X.row(i));
    preds.push_back(p);
  }
  CHECK(preds[0] == preds[1]);
  CHECK(preds[1] == preds[2]);
}

TEST_CASE("svm classifier: squashed posterior agrees with the decision sign") {
  const auto d = testdata::blobs(30, 3, 0.6, 6);
  auto m = crs::make_classifier("svm");
  m->fit(d);
  const Eigen::VectorXd p = m->predict_proba(d.X);
  const Eigen::VectorXi labels = m->predict(d.X);
  for (crs::Index i = 0; i < p.size(); ++i) CHECK(labels(i) == (p(i) >= 0.5 ? 1 : 0));
  const auto back = crs::classifier_from_jsonl(crs::classifier_to_jsonl(*m));
  CHECK(back->predict_proba(d.X) == p);
}

TEST_CASE("default_rbf_gamma: inverse of d times variance") {
  Eigen::MatrixXd X(2, 2);
  X << 0, 0, 2, 2;
  // All entries: {0,0,2,2}, population variance 1.
  CHECK(crs::default_rbf_gamma(X) == Approx(0.5));
}
