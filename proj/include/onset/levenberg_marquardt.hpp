#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "onset/units.hpp"

namespace onset::lm {

/// A fit did not converge; carries the residual sum of squares per iteration.
class FitError : public Error {
public:
    FitError(const std::string& what, std::vector<double> history)
        : Error(what), history_(std::move(history)) {}
    const std::vector<double>& history() const { return history_; }

private:
    std::vector<double> history_;
};

/// r(x) and, when J is non-null, the Jacobian dr/dx (m x n).
using Residual = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* J)>;

struct Options {
    int max_iterations = 5000;
    double ftol = 1e-12;   // relative decrease of the RSS
    double xtol = 1e-12;   // relative step size
    double gtol = 1e-14;   // max |J^T r| relative to the RSS
    double lambda0 = 1e-3;
    Eigen::VectorXd lower, upper;  // optional box, steps are projected onto it
};

struct Result {
    Eigen::VectorXd x;
    Eigen::VectorXd residual;
    Eigen::MatrixXd jacobian;  // at x
    double rss = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> history;  // RSS after each accepted step, starting with x0
};

/// Damped Gauss-Newton with Marquardt diagonal scaling, m residuals.
Result minimize(const Residual& f, Eigen::VectorXd x0, std::size_t m, const Options& opts = {});

/// Parameter covariance (J^T J)^-1 RSS / (m - n).
Eigen::MatrixXd covariance(const Result& r);

}  // namespace onset::lm
