#pragma once

// Levenberg-Marquardt with Marquardt diagonal scaling. Internal to the
// estimation sources.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>

namespace stef::detail {

struct LmProblem {
  // Fills residuals (model - data) and, when jac is non-null, the Jacobian.
  std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& resid, Eigen::MatrixXd* jac)> eval;
  // Rejects parameter vectors outside the model's domain.
  std::function<bool(const Eigen::VectorXd& x)> admissible = [](const Eigen::VectorXd&) { return true; };
};

struct LmResult {
  Eigen::VectorXd x;
  double rss = 0.0;
  int iterations = 0;
  bool converged = false;
  Eigen::MatrixXd jtj;
  std::string trace;
};

inline LmResult levenberg_marquardt(const LmProblem& prob, Eigen::VectorXd x, int max_iter = 500) {
  LmResult out;
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  prob.eval(x, r, &J);
  double rss = r.squaredNorm();
  if (!std::isfinite(rss)) {
    out.x = x;
    out.rss = rss;
    out.trace = "non-finite residuals at the starting point";
    return out;
  }
  Eigen::MatrixXd jtj = J.transpose() * J;
  Eigen::VectorXd g = J.transpose() * r;
  double lambda = 1e-3;
  Eigen::VectorXd r_try;
  std::ostringstream trace;

  for (int it = 1; it <= max_iter; ++it) {
    out.iterations = it;
    Eigen::MatrixXd a = jtj;
    for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, i) += lambda * std::max(jtj(i, i), 1e-300);
    const Eigen::VectorXd step = a.ldlt().solve(-g);
    const Eigen::VectorXd x_try = x + step;
    double rss_try = std::numeric_limits<double>::infinity();
    if (step.allFinite() && prob.admissible(x_try)) {
      prob.eval(x_try, r_try, nullptr);
      rss_try = r_try.squaredNorm();
    }
    if (std::isfinite(rss_try) && rss_try <= rss) {
      const double drop = rss - rss_try;
      const double step_size = step.cwiseAbs().maxCoeff();
      x = x_try;
      rss = rss_try;
      prob.eval(x, r, &J);
      jtj = J.transpose() * J;
      g = J.transpose() * r;
      lambda = std::max(lambda / 10.0, 1e-12);
      if (drop <= 1e-14 * rss || step_size <= 1e-12 * (x.cwiseAbs().maxCoeff() + 1e-300) || rss == 0.0) {
        out.converged = true;
        break;
      }
    } else {
      lambda *= 10.0;
      // No downhill step even with a tiny trust region: stationary to
      // machine precision.
      if (lambda > 1e16) {
        out.converged = true;
        break;
      }
    }
    if (it % 50 == 0) trace << "iter " << it << ": rss=" << rss << " lambda=" << lambda << "\n";
  }
  trace << "final: rss=" << rss << " iterations=" << out.iterations << " lambda=" << lambda;
  out.x = x;
  out.rss = rss;
  out.jtj = jtj;
  out.trace = trace.str();
  return out;
}

}  // namespace stef::detail
