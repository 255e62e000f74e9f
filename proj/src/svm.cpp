#include "crs/svm.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "crs/error.hpp"

namespace crs {

double kernel_eval(const Kernel& kernel, const Eigen::Ref<const Eigen::RowVectorXd>& a,
                   const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch, "kernel arguments differ in dimension");
  }
  return kernel(a, b);
}

Eigen::MatrixXd gram_matrix(const Kernel& kernel, const Eigen::MatrixXd& X) {
  const Index n = X.rows();
  Eigen::MatrixXd K(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      K(i, j) = K(j, i) = kernel(X.row(i), X.row(j));
    }
  }
  return K;
}

double default_rbf_gamma(const Eigen::MatrixXd& X) {
  const double mean = X.mean();
  const double var = (X.array() - mean).square().mean();
  const double d = static_cast<double>(std::max<Index>(X.cols(), 1));
  return var > 0.0 ? 1.0 / (d * var) : 1.0 / d;
}

double svm_dual_objective(const Eigen::VectorXd& alpha, const Eigen::VectorXd& signedLabels,
                          const Eigen::MatrixXd& gram) {
  const Eigen::VectorXd ay = alpha.cwiseProduct(signedLabels);
  return alpha.sum() - 0.5 * ay.dot(gram * ay);
}

namespace {

class SmoSolver {
 public:
  SmoSolver(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, double C, double tol,
            std::uint64_t seed)
      : K_(K), y_(y), C_(C), tol_(tol), rng_(seed) {
    const Index n = y.size();
    alpha_ = Eigen::VectorXd::Zero(n);
    f_ = Eigen::VectorXd::Zero(n);
  }

  bool violates(Index i) const {
    const double r = y_(i) * error(i);
    return (r < -tol_ && alpha_(i) < C_) || (r > tol_ && alpha_(i) > 0.0);
  }

  int sweep() {
    const Index n = y_.size();
    std::uniform_int_distribution<Index> pick(0, n - 2);
    int changed = 0;
    for (Index i = 0; i < n; ++i) {
      if (!violates(i)) continue;
      Index j = pick(rng_);
      if (j >= i) ++j;
      if (take_step(i, j)) {
        ++changed;
        continue;
      }
      // Random partner could not move; scan the rest from a random offset.
      const Index start = pick(rng_);
      for (Index k = 0; k < n; ++k) {
        const Index cand = (start + k) % n;
        if (cand != i && cand != j && take_step(i, cand)) {
          ++changed;
          break;
        }
      }
    }
    return changed;
  }

  /// Bias from the free support vectors, keeping the bound ones consistent.
  void refresh_bias() {
    double sum = 0.0;
    Index free = 0;
    for (Index k = 0; k < y_.size(); ++k) {
      if (alpha_(k) > 0.0 && alpha_(k) < C_) {
        sum += y_(k) - (f_(k) - b_);
        ++free;
      }
    }
    double nb = 0.0;
    if (free > 0) {
      nb = sum / static_cast<double>(free);
    } else {
      // No free vector pins b; take the middle of the interval the bound ones allow.
      double lower = -INFINITY, upper = INFINITY;
      for (Index k = 0; k < y_.size(); ++k) {
        const double v = y_(k) - (f_(k) - b_);
        const bool raises = (alpha_(k) == 0.0) == (y_(k) > 0.0);
        if (raises) {
          lower = std::max(lower, v);
        } else {
          upper = std::min(upper, v);
        }
      }
      if (std::isfinite(lower) && std::isfinite(upper)) {
        nb = 0.5 * (lower + upper);
      } else {
        nb = std::isfinite(lower) ? lower : upper;
      }
    }
    f_.array() += nb - b_;
    b_ = nb;
  }

  bool kkt_ok() const {
    for (Index i = 0; i < y_.size(); ++i) {
      if (violates(i)) return false;
    }
    return true;
  }

  const Eigen::VectorXd& alpha() const { return alpha_; }
  double bias() const { return b_; }

 private:
  double error(Index i) const { return f_(i) - y_(i); }

  bool take_step(Index i, Index j) {
    const double ai = alpha_(i), aj = alpha_(j);
    const double yi = y_(i), yj = y_(j);
    double lo, hi;
    if (yi != yj) {
      lo = std::max(0.0, aj - ai);
      hi = std::min(C_, C_ + aj - ai);
    } else {
      lo = std::max(0.0, ai + aj - C_);
      hi = std::min(C_, ai + aj);
    }
    if (hi - lo < 1e-12 * C_) return false;
    const double eta = 2.0 * K_(i, j) - K_(i, i) - K_(j, j);
    if (eta >= -1e-12) return false;
    const double ei = error(i), ej = error(j);
    double ajNew = aj - yj * (ei - ej) / eta;
    ajNew = std::clamp(ajNew, lo, hi);
    if (std::fabs(ajNew - aj) < 1e-10 * (ajNew + aj + 1e-10)) return false;
    double aiNew = ai + yi * yj * (aj - ajNew);
    const double snap = 1e-12 * C_;
    if (aiNew < snap) aiNew = 0.0;
    if (aiNew > C_ - snap) aiNew = C_;
    if (ajNew < snap) ajNew = 0.0;
    if (ajNew > C_ - snap) ajNew = C_;

    const double di = yi * (aiNew - ai);
    const double dj = yj * (ajNew - aj);
    const double b1 = b_ - ei - di * K_(i, i) - dj * K_(i, j);
    const double b2 = b_ - ej - di * K_(i, j) - dj * K_(j, j);
    double bNew;
    if (aiNew > 0.0 && aiNew < C_) {
      bNew = b1;
    } else if (ajNew > 0.0 && ajNew < C_) {
      bNew = b2;
    } else {
      bNew = 0.5 * (b1 + b2);
    }
    f_ += di * K_.col(i) + dj * K_.col(j);
    f_.array() += bNew - b_;
    b_ = bNew;
    alpha_(i) = aiNew;
    alpha_(j) = ajNew;
    return true;
  }

  const Eigen::MatrixXd& K_;
  const Eigen::VectorXd& y_;
  double C_;
  double tol_;
  std::mt19937_64 rng_;
  Eigen::VectorXd alpha_;
  Eigen::VectorXd f_;  // decision value at each training row
  double b_ = 0.0;
};

}  // namespace

SvmModel svm_fit(const Eigen::MatrixXd& X, const Eigen::VectorXi& y, const SvmSettings& settings,
                 SvmSolution* solution) {
  if (X.rows() != y.size()) throw Error(ErrorCode::LengthMismatch, "rows and labels differ");
  if (!(settings.C > 0.0)) throw Error(ErrorCode::InvalidArgument, "C must be positive");
  const Index ones = (y.array() == 1).count();
  const Index zeros = (y.array() == 0).count();
  if (ones == 0 || zeros == 0 || ones + zeros != y.size()) {
    throw Error(ErrorCode::DegenerateClass, "SVM needs both classes");
  }

  SvmModel model;
  model.kernel = settings.kernel;
  if (model.kernel.type == KernelType::Rbf && model.kernel.gamma <= 0.0) {
    model.kernel.gamma = default_rbf_gamma(X);
  }
  model.C = settings.C;

  const Eigen::VectorXd ypm = (2 * y.array() - 1).cast<double>().matrix();
  const Eigen::MatrixXd K = gram_matrix(model.kernel, X);
  SmoSolver smo(K, ypm, settings.C, settings.tol, settings.seed);

  const int maxPasses =
      settings.maxPasses > 0 ? settings.maxPasses : std::max<int>(200, 10 * static_cast<int>(y.size()));
  int pass = 0;
  bool converged = false;
  while (pass < maxPasses) {
    ++pass;
    if (smo.sweep() == 0) {
      smo.refresh_bias();
      if (smo.kkt_ok()) {
        converged = true;
        break;
      }
    }
  }
  if (!converged) {
    throw Error(ErrorCode::NoConvergence,
                "SMO did not satisfy KKT conditions within " + std::to_string(maxPasses) +
                    " passes; check tol and C");
  }

  const Eigen::VectorXd& alpha = smo.alpha();
  std::vector<Index> support;
  for (Index i = 0; i < alpha.size(); ++i) {
    if (alpha(i) > 0.0) support.push_back(i);
  }
  model.supportVectors.resize(static_cast<Index>(support.size()), X.cols());
  model.dualCoef.resize(static_cast<Index>(support.size()));
  for (std::size_t s = 0; s < support.size(); ++s) {
    model.supportVectors.row(static_cast<Index>(s)) = X.row(support[s]);
    model.dualCoef(static_cast<Index>(s)) = alpha(support[s]) * ypm(support[s]);
  }
  model.b = smo.bias();
  if (solution) {
    solution->alpha = alpha;
    solution->signedLabels = ypm;
    solution->b = model.b;
    solution->passes = pass;
  }
  return model;
}

double svm_decision(const SvmModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  if (row.size() != model.supportVectors.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "row width does not match SVM");
  }
  double f = model.b;
  for (Index s = 0; s < model.supportVectors.rows(); ++s) {
    f += model.dualCoef(s) * model.kernel(model.supportVectors.row(s), row);
  }
  return f;
}

Eigen::VectorXd svm_decision_batch(const SvmModel& model, const Eigen::MatrixXd& X) {
  Eigen::VectorXd out(X.rows());
  for (Index i = 0; i < X.rows(); ++i) out(i) = svm_decision(model, X.row(i));
  return out;
}

int svm_predict(const SvmModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  return svm_decision(model, row) >= 0.0 ? 1 : 0;
}

Json SvmModel::to_json() const {
  return Json{{"kernel", kernel.type == KernelType::Linear ? "linear" : "rbf"},
              {"gamma", kernel.gamma},
              {"C", C},
              {"b", b},
              {"dualCoef", to_json_array(dualCoef)},
              {"supportVectors", to_json_matrix(supportVectors)}};
}

SvmModel SvmModel::from_json(const Json& j) {
  SvmModel m;
  m.kernel.type = j.at("kernel").get<std::string>() == "linear" ? KernelType::Linear : KernelType::Rbf;
  m.kernel.gamma = j.at("gamma").get<double>();
  m.C = j.at("C").get<double>();
  m.b = j.at("b").get<double>();
  m.dualCoef = vector_from_json(j.at("dualCoef"));
  m.supportVectors = matrix_from_json(j.at("supportVectors"));
  return m;
}

}  // namespace crs
