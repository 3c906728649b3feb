#include "onset/quadrature.hpp"

#include <cmath>

#include "onset/units.hpp"

namespace onset::quad {

GaussRule gauss_legendre(std::size_t n) {
    if (n == 0) throw InvalidArgument("gauss_legendre: n must be >= 1");
    GaussRule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    const std::size_t half = (n + 1) / 2;
    for (std::size_t i = 0; i < half; ++i) {
        double x = std::cos(constants::pi * (double(i) + 0.75) / (double(n) + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (std::size_t j = 2; j <= n; ++j) {
                const double p2 = ((2.0 * double(j) - 1.0) * x * p1 - (double(j) - 1.0) * p0) / double(j);
                p0 = p1;
                p1 = p2;
            }
            dp = double(n) * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        double p0 = 1.0, p1 = x;
        for (std::size_t j = 2; j <= n; ++j) {
            const double p2 = ((2.0 * double(j) - 1.0) * x * p1 - (double(j) - 1.0) * p0) / double(j);
            p0 = p1;
            p1 = p2;
        }
        dp = double(n) * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.nodes[i] = -x;
        r.nodes[n - 1 - i] = x;
        r.weights[i] = w;
        r.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) r.nodes[n / 2] = 0.0;
    return r;
}

double integrate(const GaussRule& rule, double a, double b, const std::function<double(double)>& f) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double s = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * f(c + h * rule.nodes[i]);
    return s * h;
}

namespace {
double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                   double fm, double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double diff = left + right - whole;
    if (std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
    if (depth <= 0) throw Error("adaptive_simpson: tolerance not reached at maximum depth");
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

using VecFn = std::function<void(double, std::vector<double>&)>;

void simpson_vec(const VecFn& f, double a, double b, const std::vector<double>& fa,
                 const std::vector<double>& fm, const std::vector<double>& fb,
                 const std::vector<double>& whole, double tol, int depth, std::vector<double>& acc) {
    const std::size_t dim = fa.size();
    const double m = 0.5 * (a + b);
    std::vector<double> flm(dim), frm(dim), left(dim), right(dim);
    f(0.5 * (a + m), flm);
    f(0.5 * (m + b), frm);
    bool ok = true;
    for (std::size_t i = 0; i < dim; ++i) {
        left[i] = (m - a) / 6.0 * (fa[i] + 4.0 * flm[i] + fm[i]);
        right[i] = (b - m) / 6.0 * (fm[i] + 4.0 * frm[i] + fb[i]);
        if (std::abs(left[i] + right[i] - whole[i]) > 15.0 * tol) ok = false;
    }
    if (ok) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double diff = left[i] + right[i] - whole[i];
            acc[i] += left[i] + right[i] + diff / 15.0;
        }
        return;
    }
    if (depth <= 0) throw Error("adaptive_simpson: tolerance not reached at maximum depth");
    simpson_vec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, acc);
    simpson_vec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, acc);
}
}  // namespace

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int max_depth) {
    if (a == b) return 0.0;
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

std::vector<double> adaptive_simpson(const VecFn& f, std::size_t dim, double a, double b, double tol,
                                     int max_depth) {
    std::vector<double> acc(dim, 0.0);
    if (a == b) return acc;
    std::vector<double> fa(dim), fb(dim), fm(dim), whole(dim);
    f(a, fa);
    f(b, fb);
    f(0.5 * (a + b), fm);
    for (std::size_t i = 0; i < dim; ++i) whole[i] = (b - a) / 6.0 * (fa[i] + 4.0 * fm[i] + fb[i]);
    simpson_vec(f, a, b, fa, fm, fb, whole, tol, max_depth, acc);
    return acc;
}

}  // namespace onset::quad
