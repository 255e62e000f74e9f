#include "crs/explain.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "crs/error.hpp"
#include "crs/eval.hpp"

namespace crs {

// ---------------------------------------------------------------------------
// Permutation importance

namespace {

void check_test_set(const LabeledDataset& test, int repeats) {
  if (repeats < 1) throw Error(ErrorCode::InvalidArgument, "repeats must be >= 1");
  if (test.rows() < 2 || test.count(0) == 0 || test.count(1) == 0) {
    throw Error(ErrorCode::DegenerateClass, "permutation importance needs both classes in the test set");
  }
}

FeatureImportance importance_of(const Classifier& model, const LabeledDataset& test, Index j,
                                double baseline, int repeats, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(j)};
  std::mt19937_64 rng(seq);
  std::vector<Index> perm(static_cast<std::size_t>(test.rows()));
  std::iota(perm.begin(), perm.end(), Index{0});
  Eigen::MatrixXd Xp = test.X;
  std::vector<double> drops;
  for (int r = 0; r < repeats; ++r) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Index i = 0; i < test.rows(); ++i) Xp(i, j) = test.X(perm[static_cast<std::size_t>(i)], j);
    drops.push_back(baseline - balanced_accuracy(test.y, model.predict(Xp)));
  }
  FeatureImportance out;
  out.index = j;
  out.feature = static_cast<std::size_t>(j) < test.features.names.size()
                    ? test.features.names[static_cast<std::size_t>(j)]
                    : "x" + std::to_string(j);
  out.mean = std::accumulate(drops.begin(), drops.end(), 0.0) / static_cast<double>(repeats);
  double ss = 0.0;
  for (double d : drops) ss += (d - out.mean) * (d - out.mean);
  out.stddev = repeats > 1 ? std::sqrt(ss / static_cast<double>(repeats - 1)) : 0.0;
  return out;
}

}  // namespace

FeatureImportance permutation_importance(const Classifier& model, const LabeledDataset& test,
                                         const std::string& feature, int repeats, std::uint64_t seed) {
  const auto& names = test.features.names;
  const auto it = std::find(names.begin(), names.end(), feature);
  if (it == names.end()) throw Error(ErrorCode::UnknownFeature, "unknown feature '" + feature + "'");
  check_test_set(test, repeats);
  const double baseline = balanced_accuracy(test.y, model.predict(test.X));
  return importance_of(model, test, static_cast<Index>(it - names.begin()), baseline, repeats, seed);
}

PermImportance permutation_importance(const Classifier& model, const LabeledDataset& test, int repeats,
                                      std::uint64_t seed) {
  check_test_set(test, repeats);
  PermImportance out;
  out.repeats = repeats;
  out.seed = seed;
  out.baseline = balanced_accuracy(test.y, model.predict(test.X));
  for (Index j = 0; j < test.cols(); ++j) {
    out.features.push_back(importance_of(model, test, j, out.baseline, repeats, seed));
  }
  std::stable_sort(out.features.begin(), out.features.end(),
                   [](const FeatureImportance& a, const FeatureImportance& b) { return a.mean > b.mean; });
  return out;
}

std::string PermImportance::to_csv() const {
  std::ostringstream out;
  out << "feature,mean_delta_balanced_accuracy,std\n";
  for (const auto& f : features) out << f.feature << ',' << f.mean << ',' << f.stddev << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Shapley values

namespace {

using Mask = std::uint64_t;

class ValueFunction {
 public:
  ValueFunction(const BatchFn& f, const Eigen::RowVectorXd& row, const Eigen::MatrixXd& background)
      : f_(f), row_(row), background_(background) {
    if (background.rows() == 0) throw Error(ErrorCode::InvalidArgument, "empty SHAP background");
    if (background.cols() != row.size()) {
      throw Error(ErrorCode::DimensionMismatch, "background and row differ in width");
    }
    if (row.size() > 63) throw Error(ErrorCode::InvalidArgument, "at most 63 features supported");
  }

  double operator()(Mask mask) {
    ++evaluations;
    Eigen::MatrixXd Z = background_;
    for (Index j = 0; j < row_.size(); ++j) {
      if (mask >> j & 1U) Z.col(j).setConstant(row_(j));
    }
    return f_(Z).mean();
  }

  double fx() const { return f_(row_)(0); }

  int evaluations = 0;

 private:
  const BatchFn& f_;
  const Eigen::RowVectorXd& row_;
  const Eigen::MatrixXd& background_;
};

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

/// Calls fn(mask) for every d-bit mask with exactly s bits set (Gosper's hack).
template <typename Fn>
void for_each_subset(int d, int s, Fn fn) {
  if (s == 0) {
    fn(Mask{0});
    return;
  }
  Mask m = (Mask{1} << s) - 1;
  const Mask limit = Mask{1} << d;
  while (m < limit) {
    fn(m);
    const Mask c = m & -m;
    const Mask r = m + c;
    m = (((r ^ m) >> 2) / c) | r;
  }
}

}  // namespace

ShapResult shap_exact(const BatchFn& f, const Eigen::RowVectorXd& row, const Eigen::MatrixXd& background) {
  const auto d = static_cast<int>(row.size());
  if (d > kExactShapMaxFeatures) {
    throw Error(ErrorCode::InvalidArgument, "exact Shapley enumeration limited to 12 features");
  }
  ValueFunction v(f, row, background);
  const Mask full = (Mask{1} << d) - 1;
  std::vector<double> value(static_cast<std::size_t>(full) + 1);
  for (Mask m = 0; m <= full; ++m) value[m] = v(m);

  // w[s] = s! (d - s - 1)! / d!
  std::vector<double> w(static_cast<std::size_t>(std::max(d, 1)));
  for (int s = 0; s < d; ++s) w[static_cast<std::size_t>(s)] = 1.0 / (static_cast<double>(d) * binomial(d - 1, s));

  ShapResult out;
  out.exact = true;
  out.phi = Eigen::VectorXd::Zero(d);
  for (int j = 0; j < d; ++j) {
    const Mask bit = Mask{1} << j;
    double phi = 0.0;
    for (Mask m = 0; m <= full; ++m) {
      if (m & bit) continue;
      phi += w[static_cast<std::size_t>(std::popcount(m))] * (value[m | bit] - value[m]);
    }
    out.phi(j) = phi;
  }
  out.baseValue = value[0];
  out.fx = v.fx();
  out.coalitions = v.evaluations;
  return out;
}

ShapResult shap_kernel(const BatchFn& f, const Eigen::RowVectorXd& row, const Eigen::MatrixXd& background,
                       int budget, std::uint64_t seed) {
  const auto d = static_cast<int>(row.size());
  if (budget < 2 * d + 2) {
    throw Error(ErrorCode::BudgetTooSmall, "sampling budget " + std::to_string(budget) +
                                               " is below 2d+2 = " + std::to_string(2 * d + 2));
  }
  ValueFunction v(f, row, background);
  ShapResult out;
  out.baseValue = v(0);
  out.fx = v.fx();
  const double delta = out.fx - out.baseValue;
  if (d == 1) {
    out.phi = Eigen::VectorXd::Constant(1, delta);
    out.coalitions = v.evaluations;
    return out;
  }

  // Shapley kernel mass per size class; size s is paired with d - s.
  const int sizeClasses = d / 2;  // s = 1 .. floor(d/2)
  auto paired = [&](int s) { return s != d - s; };
  std::vector<double> mass(static_cast<std::size_t>(sizeClasses + 1), 0.0);
  for (int s = 1; s <= sizeClasses; ++s) {
    mass[static_cast<std::size_t>(s)] =
        (d - 1.0) / (static_cast<double>(s) * (d - s)) * (paired(s) ? 2.0 : 1.0);
  }
  const double totalMass = std::accumulate(mass.begin(), mass.end(), 0.0);
  for (auto& m : mass) m /= totalMass;

  std::map<Mask, double> weights;
  const Mask full = (Mask{1} << d) - 1;
  double remaining = budget;
  int enumerated = 0;
  double usedMass = 0.0;
  for (int s = 1; s <= sizeClasses; ++s) {
    const double count = binomial(d, s) * (paired(s) ? 2.0 : 1.0);
    const double share = mass[static_cast<std::size_t>(s)] / (1.0 - usedMass);
    if (remaining * share / count < 1.0 - 1e-8) break;
    const double each = mass[static_cast<std::size_t>(s)] / count;
    for_each_subset(d, s, [&](Mask m) {
      weights[m] += each;
      if (paired(s)) weights[full ^ m] += each;
    });
    remaining -= count;
    usedMass += mass[static_cast<std::size_t>(s)];
    enumerated = s;
  }

  if (enumerated < sizeClasses && remaining >= 2.0) {
    std::vector<double> rest(mass.begin() + enumerated + 1, mass.end());
    std::discrete_distribution<int> pickSize(rest.begin(), rest.end());
    std::mt19937_64 rng(seed);
    std::map<Mask, double> counts;
    double drawn = 0.0;
    std::vector<int> idx(static_cast<std::size_t>(d));
    std::iota(idx.begin(), idx.end(), 0);
    int attempts = 0;
    while (remaining >= 2.0 && attempts < 64 * budget) {
      ++attempts;
      const int s = enumerated + 1 + pickSize(rng);
      std::shuffle(idx.begin(), idx.end(), rng);
      Mask m = 0;
      for (int k = 0; k < s; ++k) m |= Mask{1} << idx[static_cast<std::size_t>(k)];
      const bool fresh = !counts.contains(m);
      counts[m] += 1.0;
      counts[full ^ m] += 1.0;
      drawn += 2.0;
      if (fresh) remaining -= 2.0;
    }
    for (const auto& [m, c] : counts) weights[m] += (1.0 - usedMass) * c / drawn;
  }

  // Weighted least squares with sum(phi) = delta, eliminating the last coordinate.
  const auto k = static_cast<Index>(weights.size());
  Eigen::MatrixXd A(k, d - 1);
  Eigen::VectorXd b(k);
  Index r = 0;
  for (const auto& [m, w] : weights) {
    const double sw = std::sqrt(w);
    const double zLast = (m >> (d - 1)) & 1U ? 1.0 : 0.0;
    for (int j = 0; j + 1 < d; ++j) A(r, j) = sw * (((m >> j) & 1U ? 1.0 : 0.0) - zLast);
    b(r) = sw * (v(m) - out.baseValue - zLast * delta);
    ++r;
  }
  const Eigen::VectorXd head = A.completeOrthogonalDecomposition().solve(b);
  out.phi.resize(d);
  out.phi.head(d - 1) = head;
  out.phi(d - 1) = delta - head.sum();
  out.coalitions = v.evaluations;
  return out;
}

ShapResult shap_values(const BatchFn& f, const Eigen::RowVectorXd& row, const Eigen::MatrixXd& background,
                       int budget, std::uint64_t seed) {
  if (row.size() <= kExactShapMaxFeatures) return shap_exact(f, row, background);
  return shap_kernel(f, row, background, budget, seed);
}

ShapResult shap_values(const Classifier& model, const Eigen::RowVectorXd& row,
                       const Eigen::MatrixXd& background, int budget, std::uint64_t seed) {
  const BatchFn f = [&model](const Eigen::MatrixXd& X) { return model.predict_proba(X); };
  return shap_values(f, row, background, budget, seed);
}

Eigen::MatrixXd shap_background(const LabeledDataset& data, Index size, std::uint64_t seed) {
  if (data.rows() <= size || data.count(0) < 2 || data.count(1) < 2) return data.X;
  const double fraction = static_cast<double>(size) / static_cast<double>(data.rows());
  auto rows = stratified_split(data.y, fraction, seed).testRows;
  std::sort(rows.begin(), rows.end());
  return data.X(rows, Eigen::all);
}

// ---------------------------------------------------------------------------
// PCA

Index PcaResult::components_for(double fraction) const {
  for (Index k = 0; k < cumulativeRatio.size(); ++k) {
    if (cumulativeRatio(k) >= fraction - 1e-12) return k + 1;
  }
  return cumulativeRatio.size();
}

PcaResult pca(const Eigen::MatrixXd& X, bool standardize) {
  const Index n = X.rows(), d = X.cols();
  if (n < 2 || d < 1) throw Error(ErrorCode::DegenerateData, "PCA needs at least 2 rows");
  PcaResult out;
  out.mean = X.colwise().mean().transpose();
  Eigen::MatrixXd Z = X.rowwise() - out.mean.transpose();
  out.scale = Eigen::VectorXd::Ones(d);
  if (standardize) {
    for (Index j = 0; j < d; ++j) {
      const double sd = std::sqrt(Z.col(j).squaredNorm() / static_cast<double>(n - 1));
      if (sd > 1e-12) {
        out.scale(j) = sd;
        Z.col(j) /= sd;
      }
    }
  }
  const Eigen::MatrixXd cov = Z.transpose() * Z / static_cast<double>(n - 1);
  const double total = cov.trace();
  if (!(total > 1e-12)) throw Error(ErrorCode::DegenerateData, "data has zero total variance");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  out.eigenvalues = eig.eigenvalues().reverse().cwiseMax(0.0);
  out.loadings = eig.eigenvectors().rowwise().reverse();
  for (Index k = 0; k < d; ++k) {
    Index arg;
    out.loadings.col(k).cwiseAbs().maxCoeff(&arg);
    if (out.loadings(arg, k) < 0.0) out.loadings.col(k) *= -1.0;
  }
  out.explainedVarianceRatio = out.eigenvalues / out.eigenvalues.sum();
  out.cumulativeRatio.resize(d);
  double running = 0.0;
  for (Index k = 0; k < d; ++k) {
    running += out.explainedVarianceRatio(k);
    out.cumulativeRatio(k) = running;
  }
  out.scores = Z * out.loadings;
  return out;
}

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& X) {
  const Index d = X.cols();
  const Eigen::MatrixXd Z = X.rowwise() - X.colwise().mean();
  const Eigen::MatrixXd cov = Z.transpose() * Z;
  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(d, d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) {
      if (i == j) continue;
      const double den = std::sqrt(cov(i, i) * cov(j, j));
      corr(i, j) = den > 1e-300 ? cov(i, j) / den : 0.0;
    }
  }
  return corr;
}

}  // namespace crs
