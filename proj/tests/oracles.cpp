#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oracle {

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                 double h) {
  Eigen::VectorXd g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + h;
    const double up = f(x);
    x(i) = keep - h;
    const double down = f(x);
    x(i) = keep;
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

Eigen::VectorXd logreg_params(const crs::LogisticModel& m) {
  Eigen::VectorXd p(m.w.size() + 1);
  p << m.w, m.b;
  return p;
}

crs::LogisticModel logreg_from_params(const crs::LogisticModel& like, const Eigen::VectorXd& p) {
  crs::LogisticModel m = like;
  m.w = p.head(p.size() - 1);
  m.b = p(p.size() - 1);
  return m;
}

Eigen::VectorXd mlp_params(const crs::MlpModel& m) {
  const Index k = m.W1.rows(), d = m.W1.cols();
  Eigen::VectorXd p(k * d + 2 * k + 1);
  Index at = 0;
  for (Index r = 0; r < k; ++r)
    for (Index c = 0; c < d; ++c) p(at++) = m.W1(r, c);
  for (Index r = 0; r < k; ++r) p(at++) = m.b1(r);
  for (Index r = 0; r < k; ++r) p(at++) = m.w2(r);
  p(at) = m.b2;
  return p;
}

crs::MlpModel mlp_from_params(const crs::MlpModel& like, const Eigen::VectorXd& p) {
  crs::MlpModel m = like;
  const Index k = m.W1.rows(), d = m.W1.cols();
  Index at = 0;
  for (Index r = 0; r < k; ++r)
    for (Index c = 0; c < d; ++c) m.W1(r, c) = p(at++);
  for (Index r = 0; r < k; ++r) m.b1(r) = p(at++);
  for (Index r = 0; r < k; ++r) m.w2(r) = p(at++);
  m.b2 = p(at);
  return m;
}

Eigen::VectorXd mlp_gradient_flat(const crs::MlpGradient& g) {
  crs::MlpModel shell;
  shell.W1 = g.W1;
  shell.b1 = g.b1;
  shell.w2 = g.w2;
  shell.b2 = g.b2;
  return mlp_params(shell);
}

double mlp_min_abs_preactivation(const crs::MlpModel& m, const Eigen::MatrixXd& X) {
  double smallest = INFINITY;
  for (Index i = 0; i < X.rows(); ++i) {
    const Eigen::VectorXd z = m.W1 * X.row(i).transpose() + m.b1;
    smallest = std::min(smallest, z.cwiseAbs().minCoeff());
  }
  return smallest;
}

std::optional<BruteSplit> brute_force_boost_split(const Eigen::MatrixXd& X, const Eigen::VectorXd& g,
                                                  const Eigen::VectorXd& h, double lambda, double gamma) {
  std::optional<BruteSplit> best;
  for (Index j = 0; j < X.cols(); ++j) {
    std::vector<double> values(X.col(j).data(), X.col(j).data() + X.rows());
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t v = 0; v + 1 < values.size(); ++v) {
      const double t = 0.5 * (values[v] + values[v + 1]);
      double GL = 0, HL = 0, GR = 0, HR = 0;
      for (Index i = 0; i < X.rows(); ++i) {
        if (X(i, j) <= t) {
          GL += g(i);
          HL += h(i);
        } else {
          GR += g(i);
          HR += h(i);
        }
      }
      const double G = GL + GR, H = HL + HR;
      const double gain =
          0.5 * (GL * GL / (HL + lambda) + GR * GR / (HR + lambda) - G * G / (H + lambda)) - gamma;
      if (gain > 0.0 && (!best || gain > best->gain)) best = BruteSplit{j, t, gain};
    }
  }
  return best;
}

double dual_objective(const Eigen::VectorXd& alpha, const Eigen::VectorXd& y, const Eigen::MatrixXd& K) {
  double linear = 0.0, quad = 0.0;
  for (Index i = 0; i < alpha.size(); ++i) {
    linear += alpha(i);
    for (Index j = 0; j < alpha.size(); ++j) quad += alpha(i) * alpha(j) * y(i) * y(j) * K(i, j);
  }
  return linear - 0.5 * quad;
}

double kkt_violation(const Eigen::VectorXd& alpha, const Eigen::VectorXd& y, const Eigen::MatrixXd& K, double b,
                     double C, double boundEps) {
  double worst = 0.0;
  for (Index i = 0; i < alpha.size(); ++i) {
    double f = b;
    for (Index j = 0; j < alpha.size(); ++j) f += alpha(j) * y(j) * K(j, i);
    const double m = y(i) * f;
    double v = 0.0;
    if (alpha(i) <= boundEps) {
      v = std::max(0.0, 1.0 - m);
    } else if (alpha(i) >= C - boundEps) {
      v = std::max(0.0, m - 1.0);
    } else {
      v = std::fabs(m - 1.0);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

Eigen::VectorXd random_feasible_alpha(const Eigen::VectorXd& y, double C, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, C);
  std::bernoulli_distribution sparse(0.3);
  Eigen::VectorXd a(y.size());
  for (Index i = 0; i < y.size(); ++i) a(i) = sparse(rng) ? 0.0 : u(rng);
  double pos = 0.0, neg = 0.0;
  for (Index i = 0; i < y.size(); ++i) (y(i) > 0 ? pos : neg) += a(i);
  if (pos == 0.0 || neg == 0.0) return Eigen::VectorXd::Zero(y.size());
  const double target = std::min(pos, neg);
  for (Index i = 0; i < y.size(); ++i) a(i) *= target / (y(i) > 0 ? pos : neg);
  return a;
}

Eigen::VectorXd shapley_by_permutations(const Fn& f, const Eigen::RowVectorXd& row, const Eigen::MatrixXd& background) {
  const Index d = row.size();
  auto value = [&](const std::vector<bool>& present) {
    Eigen::MatrixXd Z = background;
    for (Index j = 0; j < d; ++j)
      if (present[static_cast<std::size_t>(j)]) Z.col(j).setConstant(row(j));
    return f(Z).mean();
  };
  std::vector<Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(d);
  double count = 0.0;
  do {
    std::vector<bool> present(static_cast<std::size_t>(d), false);
    double before = value(present);
    for (Index j : order) {
      present[static_cast<std::size_t>(j)] = true;
      const double after = value(present);
      phi(j) += after - before;
      before = after;
    }
    count += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  return phi / count;
}

crs::RaterCalls rater_matrix(const crs::BenchmarkSubset& subset, const std::map<std::string, int>& truth,
                             const std::vector<std::array<int, 3>>& correct) {
  crs::RaterCalls calls;
  for (std::size_t r = 0; r < correct.size(); ++r) {
    const std::string rater = "doctor" + std::to_string(r + 1);
    std::array<int, 3> given{0, 0, 0};
    for (const auto& c : subset.cases) {
      auto& n = given[static_cast<std::size_t>(c.tier)];
      const int t = truth.at(c.id);
      calls[rater][c.id] = n < correct[r][static_cast<std::size_t>(c.tier)] ? t : 1 - t;
      ++n;
    }
  }
  return calls;
}

}  // namespace oracle
