#pragma once

// Thin adapter over Eigen's Levenberg-Marquardt for small dense problems.

#include <functional>
#include <string>

#include <Eigen/Dense>
#include <unsupported/Eigen/LevenbergMarquardt>

namespace nvform::detail {

using ResidualFn = std::function<void(const Eigen::VectorXd& params, Eigen::VectorXd& residuals)>;
using JacobianFn = std::function<void(const Eigen::VectorXd& params, Eigen::MatrixXd& jacobian)>;

struct LsqResult {
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;  // s^2 (J^T J)^-1, s^2 = rss / (m - n)
    double rss = 0.0;
    int status = 0;
    Eigen::Index evaluations = 0;
    bool converged = false;

    std::string diagnostics() const;
};

struct LsqProblem {
    int n_params = 0;
    int n_residuals = 0;
    ResidualFn residuals;
    JacobianFn jacobian;
};

LsqResult levenberg_marquardt(const LsqProblem& problem, const Eigen::VectorXd& start, int max_evaluations = 4000);

}  // namespace nvform::detail
