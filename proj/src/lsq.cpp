#include "lsq.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace nvform::detail {

namespace {

struct Functor : Eigen::DenseFunctor<double> {
    const LsqProblem* problem;

    explicit Functor(const LsqProblem& p) : DenseFunctor(p.n_params, p.n_residuals), problem(&p) {}

    int operator()(const InputType& x, ValueType& fvec) const {
        problem->residuals(x, fvec);
        return 0;
    }
    int df(const InputType& x, JacobianType& fjac) const {
        problem->jacobian(x, fjac);
        return 0;
    }
};

}  // namespace

std::string LsqResult::diagnostics() const {
    return fmt::format("status={} evaluations={} rss={:.6g} params=[{}]", status, evaluations, rss,
                       fmt::join(params.data(), params.data() + params.size(), ", "));
}

LsqResult levenberg_marquardt(const LsqProblem& problem, const Eigen::VectorXd& start, int max_evaluations) {
    Functor f(problem);
    Eigen::LevenbergMarquardt<Functor> lm(f);
    lm.setMaxfev(max_evaluations);
    lm.setXtol(1e-14);
    lm.setFtol(1e-14);
    lm.setGtol(0.0);

    LsqResult r;
    r.params = start;
    const auto status = lm.minimize(r.params);
    r.status = static_cast<int>(status);
    r.evaluations = lm.nfev();

    Eigen::VectorXd res(problem.n_residuals);
    problem.residuals(r.params, res);
    r.rss = res.squaredNorm();

    using S = Eigen::LevenbergMarquardtSpace::Status;
    const bool stopped_ok = status == S::RelativeReductionTooSmall || status == S::RelativeErrorTooSmall ||
                            status == S::RelativeErrorAndReductionTooSmall || status == S::CosinusTooSmall ||
                            status == S::FtolTooSmall || status == S::XtolTooSmall || status == S::GtolTooSmall;
    r.converged = stopped_ok && r.params.allFinite() && std::isfinite(r.rss);

    Eigen::MatrixXd jac(problem.n_residuals, problem.n_params);
    problem.jacobian(r.params, jac);
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const int dof = problem.n_residuals - problem.n_params;
    const double s2 = dof > 0 ? r.rss / dof : std::numeric_limits<double>::quiet_NaN();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
    if (lu.isInvertible())
        r.covariance = s2 * lu.inverse();
    else
        r.covariance = Eigen::MatrixXd::Constant(problem.n_params, problem.n_params,
                                                 std::numeric_limits<double>::quiet_NaN());
    return r;
}

}  // namespace nvform::detail
