#pragma once

// Small dense Levenberg-Marquardt for sum-of-squares objectives with a
// central-difference Jacobian. Intended for a handful of parameters and up to
// a few thousand residuals.

#include <cmath>
#include <cstddef>
#include <limits>

#include <Eigen/Dense>

namespace fkm {

struct LmOptions {
  std::size_t max_iter = 200;
  double initial_damping = 1e-3;
  double fd_relative_step = 1e-6;
  // Stop once |grad| <= gradient_tol * (1 + objective).
  double gradient_tol = 1e-10;
  // Reported convergence threshold on the same scaled gradient.
  double converged_tol = 1e-6;
};

struct LmResult {
  Eigen::VectorXd x;
  double objective = 0.0;
  double gradient_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// residuals(x, r) fills r (its size is fixed by the first call).
template <class Residuals>
Eigen::MatrixXd finite_difference_jacobian(Residuals& residuals, const Eigen::VectorXd& x,
                                           Eigen::Index m, double relative_step) {
  Eigen::MatrixXd jac(m, x.size());
  Eigen::VectorXd xp = x, rp(m), rm(m);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = relative_step * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + h;
    residuals(xp, rp);
    xp[i] = x[i] - h;
    residuals(xp, rm);
    xp[i] = x[i];
    jac.col(i) = (rp - rm) / (2.0 * h);
  }
  return jac;
}

// Objective values never increase across accepted steps.
template <class Residuals>
LmResult levenberg_marquardt(Residuals residuals, Eigen::VectorXd x0, const LmOptions& opt = {}) {
  Eigen::VectorXd r;
  residuals(x0, r);
  const Eigen::Index m = r.size();

  LmResult res;
  res.x = std::move(x0);
  res.objective = r.squaredNorm();
  double damping = opt.initial_damping;
  Eigen::VectorXd r_trial(m);

  Eigen::MatrixXd jac = finite_difference_jacobian(residuals, res.x, m, opt.fd_relative_step);
  Eigen::VectorXd grad = 2.0 * jac.transpose() * r;

  for (; res.iterations < opt.max_iter; ++res.iterations) {
    if (!std::isfinite(res.objective)) break;
    if (grad.norm() <= opt.gradient_tol * (1.0 + res.objective)) break;

    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;
    bool accepted = false;
    while (damping < 1e20) {
      Eigen::MatrixXd a = jtj;
      for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, i) += damping * std::max(jtj(i, i), 1e-12);
      const Eigen::VectorXd step = a.ldlt().solve(-jtr);
      const Eigen::VectorXd x_trial = res.x + step;
      residuals(x_trial, r_trial);
      const double f_trial = r_trial.squaredNorm();
      if (std::isfinite(f_trial) && f_trial < res.objective) {
        const double decrease = res.objective - f_trial;
        res.x = x_trial;
        r = r_trial;
        res.objective = f_trial;
        damping = std::max(damping / 3.0, 1e-15);
        accepted = true;
        if (decrease <= 1e-15 * (1.0 + f_trial) && step.norm() <= 1e-12 * (1.0 + res.x.norm())) {
          // Stalled at machine precision.
          accepted = false;
        }
        break;
      }
      damping *= 4.0;
    }
    jac = finite_difference_jacobian(residuals, res.x, m, opt.fd_relative_step);
    grad = 2.0 * jac.transpose() * r;
    if (!accepted) break;
  }

  res.gradient_norm = grad.norm();
  res.converged = std::isfinite(res.objective) &&
                  res.gradient_norm <= opt.converged_tol * (1.0 + res.objective);
  return res;
}

}  // namespace fkm
