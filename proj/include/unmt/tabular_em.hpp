#pragma once

// Exact EM for marginal matching on enumerable spaces. A table theta holds
// P(y | x; theta), one simplex row per x. The objective is
//   L*(theta) = sum_y P(y) log sum_x P(x) P(y | x; theta),
// which differs from -KL(P_y || W_theta P_x) by the entropy of P_y.

#include <Eigen/Dense>
#include <cmath>

#include "unmt/common.hpp"
#include "unmt/rng.hpp"

namespace unmt {

struct TabularInstance {
  Eigen::VectorXd px, py;
};

using CondTable = Eigen::MatrixXd;  // rows x, columns y

inline void check_simplex(const Eigen::VectorXd& p, const char* what) {
  UNMT_CHECK(p.size() >= 1, what << " is empty");
  UNMT_CHECK((p.array() >= 0).all(), what << " has a negative entry");
  UNMT_CHECK(std::abs(p.sum() - 1.0) <= 1e-12, what << " sums to " << p.sum());
}

inline void check_instance(const TabularInstance& inst, const CondTable& theta) {
  check_simplex(inst.px, "P(x)");
  check_simplex(inst.py, "P(y)");
  UNMT_CHECK(theta.rows() == inst.px.size() && theta.cols() == inst.py.size(), "theta must be |X| x |Y|");
  for (Eigen::Index x = 0; x < theta.rows(); ++x) check_simplex(theta.row(x).transpose(), "theta row");
}

inline Eigen::VectorXd random_simplex(Eigen::Index n, Rng& rng) {
  Eigen::VectorXd v(n);
  // Exponential draws give a uniform point on the simplex.
  for (Eigen::Index i = 0; i < n; ++i) v(i) = -std::log(1.0 - rng.uniform()) + 1e-3;
  return v / v.sum();
}

inline TabularInstance random_instance(Eigen::Index nx, Eigen::Index ny, Rng& rng) {
  return {random_simplex(nx, rng), random_simplex(ny, rng)};
}

inline CondTable random_table(Eigen::Index nx, Eigen::Index ny, Rng& rng) {
  CondTable t(nx, ny);
  for (Eigen::Index x = 0; x < nx; ++x) t.row(x) = random_simplex(ny, rng).transpose();
  return t;
}

// W_theta P_x: the model's implied target marginal P(y; theta).
inline Eigen::VectorXd model_marginal(const TabularInstance& inst, const CondTable& theta) {
  return theta.transpose() * inst.px;
}

inline double objective(const TabularInstance& inst, const CondTable& theta) {
  Eigen::VectorXd m = model_marginal(inst, theta);
  double s = 0;
  for (Eigen::Index y = 0; y < m.size(); ++y)
    if (inst.py(y) > 0) s += inst.py(y) * std::log(m(y));
  return s;
}

// P(x | y; theta) by Bayes; column y is the posterior for that y.
inline Eigen::MatrixXd posterior(const TabularInstance& inst, const CondTable& theta) {
  Eigen::MatrixXd q = inst.px.asDiagonal() * theta;
  Eigen::VectorXd m = model_marginal(inst, theta);
  for (Eigen::Index y = 0; y < q.cols(); ++y)
    if (m(y) > 0) q.col(y) /= m(y);
  return q;
}

// ELBO(theta, theta_i) = sum_y P(y) sum_x q_i(x|y) log [P(y|x; theta) P(x) / q_i(x|y)].
inline double elbo(const TabularInstance& inst, const CondTable& theta, const CondTable& theta_i) {
  Eigen::MatrixXd q = posterior(inst, theta_i);
  double s = 0;
  for (Eigen::Index y = 0; y < q.cols(); ++y) {
    if (inst.py(y) == 0) continue;
    for (Eigen::Index x = 0; x < q.rows(); ++x) {
      double qq = q(x, y);
      if (qq == 0) continue;
      s += inst.py(y) * qq * std::log(theta(x, y) * inst.px(x) / qq);
    }
  }
  return s;
}

// E-step posterior, then the closed-form M-step: expected counts
// P(y) q(x | y) normalized over y within each row.
inline CondTable exact_em_step(const TabularInstance& inst, const CondTable& theta) {
  check_instance(inst, theta);
  Eigen::MatrixXd q = posterior(inst, theta);
  CondTable next = q * inst.py.asDiagonal();
  for (Eigen::Index x = 0; x < next.rows(); ++x) {
    double z = next.row(x).sum();
    if (z > 0) {
      next.row(x) /= z;
    } else {
      next.row(x) = theta.row(x);
    }
  }
  return next;
}

// KL(P_y || W_theta P_x).
inline double marginal_diagnostic(const TabularInstance& inst, const CondTable& theta) {
  Eigen::VectorXd m = model_marginal(inst, theta);
  double kl = 0;
  for (Eigen::Index y = 0; y < m.size(); ++y)
    if (inst.py(y) > 0) kl += inst.py(y) * std::log(inst.py(y) / m(y));
  return std::max(kl, 0.0);
}

struct EmTrace {
  std::vector<double> objective, kl;
  std::vector<CondTable> thetas;
};

inline EmTrace run_exact_em(const TabularInstance& inst, CondTable theta, int steps) {
  EmTrace t;
  for (int i = 0;; ++i) {
    t.objective.push_back(objective(inst, theta));
    t.kl.push_back(marginal_diagnostic(inst, theta));
    t.thetas.push_back(theta);
    if (i == steps) break;
    theta = exact_em_step(inst, theta);
  }
  return t;
}

}  // namespace unmt
