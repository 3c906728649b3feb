#include "onset/band_interpolant.hpp"

#include <cmath>

#include "onset/quadrature.hpp"

namespace onset::bands {

namespace {
KGrid path_grid(double k_lo, double k_hi, double step) {
    if (!(k_hi > k_lo)) throw InvalidArgument("BandInterpolant: need k_hi > k_lo");
    if (!(step > 0.0)) throw InvalidArgument("BandInterpolant: step must be > 0");
    const auto intervals = std::size_t(std::ceil((k_hi - k_lo) / step - 1e-9));
    return {k_lo, k_hi, std::max<std::size_t>(intervals, 3) + 1};
}

// quintic Hermite on [0, 1] from value, slope and curvature at both ends (slopes already scaled by h)
double quintic(double t, double y0, double d0, double c0, double y1, double d1, double c1) {
    const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
    const double h0 = 1 - 10 * t3 + 15 * t4 - 6 * t5;
    const double h1 = t - 6 * t3 + 8 * t4 - 3 * t5;
    const double h2 = 0.5 * (t2 - 3 * t3 + 3 * t4 - t5);
    const double h3 = 10 * t3 - 15 * t4 + 6 * t5;
    const double h4 = -4 * t3 + 7 * t4 - 3 * t5;
    const double h5 = 0.5 * (t3 - 2 * t4 + t5);
    return h0 * y0 + h1 * d0 + h2 * c0 + h3 * y1 + h4 * d1 + h5 * c1;
}
}  // namespace

BandInterpolant::BandInterpolant(const LatticeConfig& cfg, double k_lo, double k_hi,
                                 const SolveOptions& opts, double step, double phase_tol)
    : data_(solve_bands(cfg, path_grid(k_lo, k_hi, step), opts)), opts_(opts) {
    opts_.policy = ExecPolicy::serial;
    const auto& grid = data_.grid();
    const std::size_t nk = grid.count;
    const std::size_t nb = std::size_t(data_.n_bands());
    h_ = grid.spacing();
    g_.assign(nk * nb, 0.0);
    const int L = data_.cutoff();
    const auto energies = [&](double k, std::vector<double>& out) {
        const auto e = band_energies(cfg, k, L, int(nb));
        for (std::size_t n = 0; n < nb; ++n) out[n] = e[n];
    };
    std::vector<std::vector<double>> piece(nk - 1);
    const double tol = phase_tol / double(nk - 1);
    const auto run = [&](std::size_t i) {
        piece[i] = quad::adaptive_simpson(energies, nb, grid.at(i), grid.at(i + 1), tol);
    };
    if (opts.policy == ExecPolicy::parallel) {
#pragma omp parallel for schedule(static)
        for (std::size_t i = 0; i < nk - 1; ++i) run(i);
    } else {
        for (std::size_t i = 0; i < nk - 1; ++i) run(i);
    }
    for (std::size_t i = 1; i < nk; ++i)
        for (std::size_t n = 0; n < nb; ++n) g_[i * nb + n] = g_[(i - 1) * nb + n] + piece[i - 1][n];
}

BandInterpolant::Loc BandInterpolant::locate(double k) const {
    const double lo = k_lo(), hi = k_hi();
    const double slack = 1e-9 * (hi - lo);
    if (!(k >= lo - slack && k <= hi + slack))
        throw InvalidArgument("BandInterpolant: k = " + std::to_string(k) + " outside [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
    const std::size_t nk = data_.grid().count;
    double x = (k - lo) / h_;
    auto i = x <= 0.0 ? std::size_t(0) : std::size_t(x);
    if (i > nk - 2) i = nk - 2;
    return {i, (k - data_.grid().at(i)) / h_};
}

template <class F>
auto BandInterpolant::lagrange(double k, F&& value) const {
    const auto [i, t] = locate(k);
    const std::size_t nk = data_.grid().count;
    std::size_t j0 = i == 0 ? 0 : i - 1;
    if (j0 + 3 > nk - 1) j0 = nk - 4;
    const double x = (k - data_.grid().at(j0)) / h_;  // nodes at 0, 1, 2, 3
    const double w0 = -(x - 1) * (x - 2) * (x - 3) / 6.0;
    const double w1 = x * (x - 2) * (x - 3) / 2.0;
    const double w2 = -x * (x - 1) * (x - 3) / 2.0;
    const double w3 = x * (x - 1) * (x - 2) / 6.0;
    return w0 * value(j0) + w1 * value(j0 + 1) + w2 * value(j0 + 2) + w3 * value(j0 + 3);
}

double BandInterpolant::energy(int n, double k) const {
    const auto [i, t] = locate(k);
    const auto& d = data_;
    return quintic(t, d.energy(n, i), 2.0 * d.momentum(n, n, i).real() * h_,
                   2.0 * d.inverse_mass(n, i) * h_ * h_, d.energy(n, i + 1),
                   2.0 * d.momentum(n, n, i + 1).real() * h_, 2.0 * d.inverse_mass(n, i + 1) * h_ * h_);
}

double BandInterpolant::inverse_mass(int n, double k) const {
    return lagrange(k, [&](std::size_t j) { return data_.inverse_mass(n, j); });
}

cplx BandInterpolant::momentum(int n, int m, double k) const {
    return lagrange(k, [&](std::size_t j) { return data_.momentum(n, m, j); });
}

double BandInterpolant::antiderivative(int n, double k) const {
    const auto [i, t] = locate(k);
    const auto& d = data_;
    const std::size_t nb = std::size_t(d.n_bands());
    return quintic(t, g_[i * nb + std::size_t(n)], d.energy(n, i) * h_,
                   2.0 * d.momentum(n, n, i).real() * h_ * h_, g_[(i + 1) * nb + std::size_t(n)],
                   d.energy(n, i + 1) * h_, 2.0 * d.momentum(n, n, i + 1).real() * h_ * h_);
}

BandInterpolant::Point BandInterpolant::exact(double k) const {
    const auto [i, t] = locate(k);
    const std::size_t node = t < 0.5 ? i : i + 1;
    const BandData one = solve_bands(data_.config(), KGrid{k, k, 1}, opts_);
    const int nb = n_bands();
    std::vector<double> sign(std::size_t(nb), 1.0);
    for (int n = 0; n < nb; ++n) {
        const auto a = data_.coefficients(n, node);
        const auto b = one.coefficients(n, 0);
        cplx overlap{};
        for (std::size_t g = 0; g < a.size(); ++g) overlap += std::conj(a[g]) * b[g];
        if (overlap.real() < 0.0) sign[std::size_t(n)] = -1.0;
    }
    Point out;
    out.k = k;
    for (int n = 0; n < nb; ++n) {
        out.energy.push_back(one.energy(n, 0));
        out.inverse_mass.push_back(one.inverse_mass(n, 0));
    }
    out.p.resize(std::size_t(nb) * std::size_t(nb));
    for (int n = 0; n < nb; ++n)
        for (int m = 0; m < nb; ++m)
            out.p[std::size_t(n) * std::size_t(nb) + std::size_t(m)] =
                sign[std::size_t(n)] * sign[std::size_t(m)] * one.momentum(n, m, 0);
    return out;
}

}  // namespace onset::bands
