#include "onset/levenberg_marquardt.hpp"

#include <algorithm>
#include <cmath>

namespace onset::lm {

namespace {
Eigen::VectorXd project(Eigen::VectorXd x, const Options& o) {
    if (o.lower.size() == x.size()) x = x.cwiseMax(o.lower);
    if (o.upper.size() == x.size()) x = x.cwiseMin(o.upper);
    return x;
}
}  // namespace

Result minimize(const Residual& f, Eigen::VectorXd x0, std::size_t m, const Options& opts) {
    const auto n = x0.size();
    if (n == 0) throw InvalidArgument("lm::minimize: no parameters");
    if (m < std::size_t(n)) throw InvalidArgument("lm::minimize: fewer residuals than parameters");
    Result out;
    out.x = project(std::move(x0), opts);
    out.residual.resize(Eigen::Index(m));
    out.jacobian.resize(Eigen::Index(m), n);
    f(out.x, out.residual, &out.jacobian);
    out.rss = out.residual.squaredNorm();
    if (!std::isfinite(out.rss)) throw FitError("lm::minimize: non-finite residual at the start", {out.rss});
    out.history.push_back(out.rss);

    double lambda = opts.lambda0;
    Eigen::VectorXd trial_r(static_cast<Eigen::Index>(m));
    Eigen::MatrixXd trial_j(Eigen::Index(m), n);
    for (out.iterations = 0; out.iterations < opts.max_iterations; ++out.iterations) {
        const Eigen::MatrixXd jtj = out.jacobian.transpose() * out.jacobian;
        const Eigen::VectorXd g = out.jacobian.transpose() * out.residual;
        if (g.cwiseAbs().maxCoeff() <= opts.gtol * std::max(out.rss, 1e-300)) {
            out.converged = true;
            break;
        }
        bool accepted = false;
        for (int tries = 0; tries < 30 && !accepted; ++tries) {
            Eigen::MatrixXd a = jtj;
            for (Eigen::Index i = 0; i < n; ++i) a(i, i) += lambda * std::max(jtj(i, i), 1e-300);
            const Eigen::VectorXd step = a.ldlt().solve(-g);
            const Eigen::VectorXd x = project(out.x + step, opts);
            f(x, trial_r, &trial_j);
            const double rss = trial_r.squaredNorm();
            if (std::isfinite(rss) && rss <= out.rss) {
                const double drop = out.rss - rss;
                const double dx = (x - out.x).norm();
                out.x = x;
                out.residual = trial_r;
                out.jacobian = trial_j;
                out.rss = rss;
                out.history.push_back(rss);
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
                if (drop <= opts.ftol * rss || dx <= opts.xtol * (out.x.norm() + opts.xtol)) out.converged = true;
            } else {
                lambda *= 10.0;
            }
        }
        if (!accepted) {
            // no downhill step left at any damping: a local minimum to working precision
            out.converged = true;
            break;
        }
        if (out.converged) {
            ++out.iterations;
            break;
        }
    }
    return out;
}

Eigen::MatrixXd covariance(const Result& r) {
    const auto m = r.jacobian.rows(), n = r.jacobian.cols();
    if (m <= n) throw InvalidArgument("lm::covariance: need more residuals than parameters");
    const Eigen::MatrixXd jtj = r.jacobian.transpose() * r.jacobian;
    const Eigen::MatrixXd inv = jtj.completeOrthogonalDecomposition().pseudoInverse();
    return inv * (r.rss / double(m - n));
}

}  // namespace onset::lm
