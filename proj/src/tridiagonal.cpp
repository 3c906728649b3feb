#include "onset/tridiagonal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace onset {

namespace {
// std::hypot is slow; fall back to it only where squaring could overflow
inline double pythag(double a, double b) {
    const double m = std::max(std::abs(a), std::abs(b));
    if (m > 1e150) return std::hypot(a, b);
    return std::sqrt(a * a + b * b);
}
}  // namespace

TridiagonalEigen solve_tridiagonal(const TridiagonalMatrix& m, bool want_vectors,
                                   int max_iterations) {
    const std::size_t n = m.size();
    if (n == 0) throw InvalidArgument("solve_tridiagonal: empty matrix");
    if (m.off_diagonal.size() + 1 != n)
        throw InvalidArgument("solve_tridiagonal: off-diagonal must have n-1 entries");

    std::vector<double> d = m.diagonal;
    // e[i] couples rows i and i+1; e[n-1] is workspace.
    std::vector<double> e(n, 0.0);
    std::copy(m.off_diagonal.begin(), m.off_diagonal.end(), e.begin());

    std::vector<double> z;
    if (want_vectors) {
        z.assign(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) z[i * n + i] = 1.0;
    }

    const double eps = std::numeric_limits<double>::epsilon();
    const auto ni = static_cast<long>(n);
    for (long l = 0; l < ni; ++l) {
        int iter = 0;
        long mm;
        do {
            for (mm = l; mm < ni - 1; ++mm) {
                const double dd = std::abs(d[mm]) + std::abs(d[mm + 1]);
                if (std::abs(e[mm]) <= eps * dd) break;
            }
            if (mm != l) {
                if (iter++ == max_iterations)
                    throw EigenSolveError("tridiagonal QL did not converge for eigenvalue " +
                                              std::to_string(l),
                                          static_cast<std::size_t>(l));
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = pythag(g, 1.0);
                g = d[mm] - d[l] + e[l] / (g + std::copysign(r, g));
                double s = 1.0, c = 1.0, p = 0.0;
                long i;
                bool underflow = false;
                for (i = mm - 1; i >= l; --i) {
                    double f = s * e[i];
                    const double b = c * e[i];
                    r = pythag(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[mm] = 0.0;
                        underflow = true;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                    if (want_vectors) {
                        for (std::size_t k = 0; k < n; ++k) {
                            f = z[k * n + i + 1];
                            z[k * n + i + 1] = s * z[k * n + i] + c * f;
                            z[k * n + i] = c * z[k * n + i] - s * f;
                        }
                    }
                }
                if (underflow) continue;
                d[l] -= p;
                e[l] = g;
                e[mm] = 0.0;
            }
        } while (mm != l);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });

    TridiagonalEigen out;
    out.n = n;
    out.values.resize(n);
    for (std::size_t j = 0; j < n; ++j) out.values[j] = d[order[j]];
    if (want_vectors) {
        out.vectors.resize(n * n);
        for (std::size_t row = 0; row < n; ++row)
            for (std::size_t j = 0; j < n; ++j) out.vectors[row * n + j] = z[row * n + order[j]];
    }
    return out;
}

namespace {

// LU factorization with partial pivoting of T - lambda I, T tridiagonal.
struct TridiagonalLU {
    std::vector<double> u0, u1, u2, mult;
    std::vector<char> swapped;

    TridiagonalLU(const TridiagonalMatrix& t, double lambda, double tiny) {
        const std::size_t n = t.size();
        u0.resize(n);
        u1.assign(n, 0.0);
        u2.assign(n, 0.0);
        mult.assign(n, 0.0);
        swapped.assign(n, 0);
        for (std::size_t i = 0; i < n; ++i) u0[i] = t.diagonal[i] - lambda;
        for (std::size_t i = 0; i + 1 < n; ++i) u1[i] = t.off_diagonal[i];
        // rows i and i+1 before elimination: [u0 u1 u2] and [sub d' super]
        std::vector<double> sub(t.off_diagonal), super(t.off_diagonal);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            double d1 = i + 1 < n ? u0[i + 1] : 0.0;
            const double e = sub[i];
            if (std::abs(u0[i]) >= std::abs(e)) {
                if (u0[i] == 0.0) u0[i] = tiny;
                mult[i] = e / u0[i];
                u0[i + 1] = d1 - mult[i] * u1[i];
            } else {
                // swap rows i and i+1
                swapped[i] = 1;
                mult[i] = u0[i] / e;
                const double r0 = e, r1 = d1, r2 = i + 1 < n - 1 ? super[i + 1] : 0.0;
                const double o1 = u1[i], o2 = u2[i];
                u0[i] = r0;
                u1[i] = r1;
                u2[i] = r2;
                u0[i + 1] = o1 - mult[i] * r1;
                if (i + 1 < n - 1) u1[i + 1] = o2 - mult[i] * r2;
            }
        }
        if (u0[n - 1] == 0.0) u0[n - 1] = tiny;
        for (auto& p : u0)
            if (std::abs(p) < tiny) p = std::copysign(tiny, p == 0.0 ? 1.0 : p);
    }

    void solve(std::vector<double>& b) const {
        const std::size_t n = u0.size();
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (swapped[i]) std::swap(b[i], b[i + 1]);
            b[i + 1] -= mult[i] * b[i];
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double s = b[ii];
            if (ii + 1 < n) s -= u1[ii] * b[ii + 1];
            if (ii + 2 < n) s -= u2[ii] * b[ii + 2];
            b[ii] = s / u0[ii];
        }
    }
};

}  // namespace

TridiagonalEigen solve_tridiagonal_lowest(const TridiagonalMatrix& m, std::size_t count,
                                          int max_iterations) {
    const std::size_t n = m.size();
    if (count > n) throw InvalidArgument("solve_tridiagonal_lowest: count exceeds matrix size");
    TridiagonalEigen out = solve_tridiagonal(m, false, max_iterations);
    out.vectors.assign(n * count, 0.0);

    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = std::abs(m.diagonal[i]);
        if (i > 0) row += std::abs(m.off_diagonal[i - 1]);
        if (i + 1 < n) row += std::abs(m.off_diagonal[i]);
        norm = std::max(norm, row);
    }
    const double eps = std::numeric_limits<double>::epsilon();
    const double tiny = eps * std::max(norm, 1.0);

    std::vector<std::vector<double>> found;
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < count; ++j) {
        double lambda = out.values[j];
        // separate coincident shifts so each solve sees a distinct pole
        const double pert = 10.0 * eps * std::max(std::abs(lambda), 1.0);
        if (lambda - prev < pert) lambda = prev + pert;
        prev = lambda;
        const TridiagonalLU lu(m, lambda, tiny);
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = 1.0 + 0.5 * std::sin(0.7 * double(i + 1) * double(j + 1));
        for (int it = 0; it < 4; ++it) {
            lu.solve(x);
            for (const auto& v : found) {
                double d = 0.0;
                for (std::size_t i = 0; i < n; ++i) d += v[i] * x[i];
                for (std::size_t i = 0; i < n; ++i) x[i] -= d * v[i];
            }
            double s = 0.0;
            for (double xi : x) s += xi * xi;
            s = 1.0 / std::sqrt(s);
            for (double& xi : x) xi *= s;
        }
        for (std::size_t i = 0; i < n; ++i) out.vectors[i * count + j] = x[i];
        found.push_back(std::move(x));
    }
    out.values.resize(count);
    out.n = count;
    return out;
}

}  // namespace onset
