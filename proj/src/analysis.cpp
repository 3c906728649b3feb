#include "onset/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <random>

namespace onset::analysis {

using constants::pi;

namespace {
double wrap_phase(double p) {
    p = std::remainder(p, 2.0 * pi);  // [-pi, pi]
    if (p <= -pi) p += 2.0 * pi;
    return p;
}

double um_per_vr(const LatticeConfig& cfg, double tof) { return cfg.recoil_velocity() * tof * 1e6; }

double interp(const std::vector<double>& x, const std::vector<double>& y, double xq) {
    if (xq <= x.front()) return y.front();
    if (xq >= x.back()) return y.back();
    const auto it = std::upper_bound(x.begin(), x.end(), xq);
    const std::size_t i = std::size_t(it - x.begin());
    const double f = (xq - x[i - 1]) / (x[i] - x[i - 1]);
    return (1.0 - f) * y[i - 1] + f * y[i];
}
}  // namespace

// ---------------------------------------------------------------- imaging

propagator::TofOptions tof_window(const LatticeConfig& cfg, const ImagingWindow& w, double tof, double blur) {
    if (!(w.width > 0.0)) throw InvalidArgument("imaging window width must be > 0");
    propagator::TofOptions o;
    o.tof = tof;
    o.blur = blur;
    const double scale = um_per_vr(cfg, tof);
    o.x_min = (w.centre - 0.5 * w.width) * scale;
    o.x_max = (w.centre + 0.5 * w.width) * scale;
    return o;
}

propagator::Profile add_noise(propagator::Profile p, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw InvalidArgument("add_noise: sigma must be >= 0");
    if (sigma == 0.0) return p;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, sigma);
    for (auto& d : p.density) d += nd(rng);
    return p;
}

// ------------------------------------------------------------ diffraction

double DiffractionFit::total() const { return std::accumulate(amplitude.begin(), amplitude.end(), 0.0); }

DiffractionFit fit_diffraction(const propagator::Profile& profile, const LatticeConfig& cfg,
                               const DiffractionOptions& opts) {
    const auto& x = profile.x;
    const auto& y = profile.density;
    const int np = opts.n_peaks;
    if (np < 1) throw InvalidArgument("fit_diffraction: n_peaks must be >= 1");
    if (x.size() != y.size() || x.size() < std::size_t(3 * np + 3))
        throw InvalidArgument("fit_diffraction: profile too short");
    const double scale = opts.um_per_vr > 0.0 ? opts.um_per_vr : um_per_vr(cfg, profile.tof);
    if (!(scale > 0.0)) throw InvalidArgument("fit_diffraction: unknown TOF scale");
    const double spacing0 = 2.0 * scale;

    // start: comb placement that best covers the brightest peak
    const std::size_t imax = std::size_t(std::max_element(y.begin(), y.end()) - y.begin());
    double best_score = -1e300, x0 = x[imax];
    for (int j = 0; j < np; ++j) {
        const double o = x[imax] - j * spacing0;
        double score = 0.0;
        int outside = 0;
        for (int k = 0; k < np; ++k) {
            const double c = o + k * spacing0;
            if (c < x.front() - 0.5 * spacing0 || c > x.back() + 0.5 * spacing0) ++outside;
            score += interp(x, y, c);
        }
        score -= 1e6 * outside * (y[imax] + 1.0);
        if (score > best_score) {
            best_score = score;
            x0 = o;
        }
    }
    std::size_t lo = imax, hi = imax;
    while (lo > 0 && y[lo] > 0.5 * y[imax]) --lo;
    while (hi + 1 < y.size() && y[hi] > 0.5 * y[imax]) ++hi;
    const double dx = x[1] - x[0];
    double w0 = std::max((x[hi] - x[lo]) / 2.3548, dx);
    w0 = std::min(w0, 0.4 * spacing0);

    const Eigen::Index n = np + 3;
    Eigen::VectorXd p(n);
    for (int k = 0; k < np; ++k) p(k) = std::max(interp(x, y, x0 + k * spacing0), 0.0);
    p(np) = x0;
    p(np + 1) = spacing0;
    p(np + 2) = w0;

    const std::size_t m = x.size();
    const lm::Residual f = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
        const double off = q(np), sp = q(np + 1), w = q(np + 2);
        if (J) J->setZero();
        for (std::size_t i = 0; i < m; ++i) {
            double model = 0.0, d_off = 0.0, d_sp = 0.0, d_w = 0.0;
            for (int k = 0; k < np; ++k) {
                const double u = x[i] - (off + k * sp);
                const double g = std::exp(-0.5 * u * u / (w * w));
                model += q(k) * g;
                if (J) {
                    (*J)(Eigen::Index(i), k) = g;
                    const double t = q(k) * g * u / (w * w);
                    d_off += t;
                    d_sp += t * k;
                    d_w += t * u / w;
                }
            }
            r(Eigen::Index(i)) = model - y[i];
            if (J) {
                (*J)(Eigen::Index(i), np) = d_off;
                (*J)(Eigen::Index(i), np + 1) = d_sp;
                (*J)(Eigen::Index(i), np + 2) = d_w;
            }
        }
    };
    lm::Options lo_opts = opts.lm;
    lo_opts.lower = Eigen::VectorXd::Constant(n, -1e300);
    lo_opts.upper = Eigen::VectorXd::Constant(n, 1e300);
    for (int k = 0; k < np; ++k) lo_opts.lower(k) = 0.0;
    lo_opts.lower(np + 1) = 0.5 * spacing0;
    lo_opts.upper(np + 1) = 1.5 * spacing0;
    lo_opts.lower(np + 2) = 0.25 * dx;
    const auto res = lm::minimize(f, p, m, lo_opts);
    if (!res.converged)
        throw FitError("fit_diffraction: no convergence after " + std::to_string(res.iterations) + " iterations",
                       res.history);

    DiffractionFit out;
    out.offset = res.x(np);
    out.spacing = res.x(np + 1);
    out.width = res.x(np + 2);
    for (int k = 0; k < np; ++k) {
        out.amplitude.push_back(res.x(k));
        const double c = out.offset + k * out.spacing;
        out.centre.push_back(c);
        out.velocity.push_back(c / scale);
    }
    out.residual_norm = std::sqrt(res.rss);
    out.iterations = res.iterations;
    const double tot = out.total();
    if (np >= 2 && tot > 0.0) {
        // geometric extrapolation of the next order beyond each end of the comb
        const auto next = [&](int edge, int inner) {
            const double a = out.amplitude[std::size_t(edge)], b = out.amplitude[std::size_t(inner)];
            return b > 0.0 ? a * a / b : 0.0;
        };
        const double left = next(0, 1), right = next(np - 1, np - 2);
        out.edge_estimate = std::max(left, right) / tot;
        if (out.edge_estimate > opts.edge_threshold) {
            out.edge_flag = true;
            out.note = std::string("order beyond the ") + (right >= left ? "upper" : "lower") +
                       " edge of the window estimated at " + std::to_string(out.edge_estimate) + " of the total";
        }
    }
    return out;
}

VelocityTrace reconstruct_velocity(const std::vector<DiffractionFit>& fits, const std::vector<double>& t) {
    if (fits.size() != t.size()) throw InvalidArgument("reconstruct_velocity: fits and times differ in length");
    for (std::size_t i = 1; i < t.size(); ++i)
        if (!(t[i] > t[i - 1])) throw InvalidArgument("reconstruct_velocity: frames not time-ordered");
    VelocityTrace out;
    for (std::size_t i = 0; i < fits.size(); ++i) {
        const auto& f = fits[i];
        double num = 0.0, den = 0.0;
        for (std::size_t j = 0; j < f.amplitude.size(); ++j) {
            num += f.amplitude[j] * f.velocity[j];
            den += f.amplitude[j];
        }
        if (!(den > 0.0)) {
            out.notes.push_back("frame at t = " + std::to_string(t[i]) + " dropped: zero total amplitude");
            continue;
        }
        out.t.push_back(t[i]);
        out.v.push_back(num / den);
    }
    return out;
}

// --------------------------------------------------------------- two-sine

TwoSineParams TwoSineParams::from(const double* p) { return {p[0], p[1], p[2], p[3], p[4], p[5]}; }

double TwoSineParams::eval(double t, double t_ref) const {
    const double tau = t - t_ref;
    return A_d * std::sin(w_d * tau + phi_d) + A_B * std::sin(w_B * tau + phi_B);
}

namespace {
struct Window {
    std::vector<double> tau, v;
    double t_ref = 0.0, dt = 0.0;
};

Window select(const VelocityTrace& tr, const TwoSineOptions& o) {
    Window w;
    const double end = o.window > 0.0 ? o.start + o.window : 1e300;
    const double eps = 1e-9 * std::max(1.0, std::abs(end));
    bool first = true;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        if (tr.t[i] < o.start - eps || tr.t[i] > end + eps) continue;
        if (first) {
            w.t_ref = tr.t[i];
            first = false;
        }
        w.tau.push_back(tr.t[i] - w.t_ref);
        w.v.push_back(tr.v[i]);
    }
    if (w.tau.size() < 12) throw InvalidArgument("fit_two_sine: fewer than 12 samples in the window");
    w.dt = w.tau.back() / double(w.tau.size() - 1);
    return w;
}

// power spectrum of a Hann-weighted series on a zero-padded frequency grid
struct Spectrum {
    std::vector<double> omega, power;
};

Spectrum spectrum(const std::vector<double>& tau, const std::vector<double>& y, double dt, int pad) {
    const std::size_t n = y.size();
    const std::size_t nf = std::size_t(pad) * n / 2;
    const double d_omega = 2.0 * pi / (double(pad) * double(n) * dt);
    Spectrum s;
    s.omega.resize(nf);
    s.power.resize(nf);
    std::vector<double> h(n);
    const double span = tau.back() - tau.front();
    for (std::size_t i = 0; i < n; ++i) h[i] = y[i] * (0.5 - 0.5 * std::cos(2.0 * pi * (tau[i] - tau.front()) / span));
    for (std::size_t k = 0; k < nf; ++k) {
        const double w = double(k) * d_omega;
        std::complex<double> acc{};
        for (std::size_t i = 0; i < n; ++i) acc += h[i] * std::polar(1.0, -w * tau[i]);
        s.omega[k] = w;
        s.power[k] = std::norm(acc);
    }
    return s;
}

std::vector<std::size_t> local_maxima(const Spectrum& s, double omega_min) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 1; k + 1 < s.power.size(); ++k)
        if (s.omega[k] > omega_min && s.power[k] > s.power[k - 1] && s.power[k] >= s.power[k + 1]) idx.push_back(k);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.power[a] > s.power[b]; });
    return idx;
}

// least-squares sum of sin/cos pairs at fixed frequencies; returns (amplitude, phase) per frequency
std::vector<std::pair<double, double>> linear_phases(const Window& w, const std::vector<double>& omegas) {
    const auto n = Eigen::Index(w.tau.size());
    const auto k = Eigen::Index(omegas.size());
    Eigen::MatrixXd a(n, 2 * k);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            a(i, 2 * j) = std::sin(omegas[std::size_t(j)] * w.tau[std::size_t(i)]);
            a(i, 2 * j + 1) = std::cos(omegas[std::size_t(j)] * w.tau[std::size_t(i)]);
        }
        b(i) = w.v[std::size_t(i)];
    }
    const Eigen::VectorXd c = a.colPivHouseholderQr().solve(b);
    std::vector<std::pair<double, double>> out;
    // A sin(wt + phi) = A cos(phi) sin(wt) + A sin(phi) cos(wt)
    for (Eigen::Index j = 0; j < k; ++j) out.emplace_back(std::hypot(c(2 * j), c(2 * j + 1)), std::atan2(c(2 * j + 1), c(2 * j)));
    return out;
}

TwoSineParams normalize(TwoSineParams p) {
    if (p.A_d < 0.0) {
        p.A_d = -p.A_d;
        p.phi_d += pi;
    }
    if (p.A_B < 0.0) {
        p.A_B = -p.A_B;
        p.phi_B += pi;
    }
    p.phi_d = wrap_phase(p.phi_d);
    p.phi_B = wrap_phase(p.phi_B);
    return p;
}
}  // namespace

TwoSineFit fit_two_sine(const VelocityTrace& trace, const TwoSineOptions& opts) {
    if (trace.t.size() != trace.v.size()) throw InvalidArgument("fit_two_sine: malformed trace");
    const Window w = select(trace, opts);
    const double span = w.tau.back();

    // slow start values: Fd/hbar when F is known; otherwise the low spectral
    // peak plus half and one cycle per window (the Bloch period often exceeds it)
    std::vector<double> slow_starts;
    if (opts.force) {
        const double omega_b = pi * std::abs(*opts.force);
        if (!(omega_b > 0.0)) throw InvalidArgument("fit_two_sine: known force must be nonzero");
        slow_starts.push_back(omega_b);
    } else {
        const auto s = spectrum(w.tau, w.v, w.dt, opts.zero_pad);
        const auto peaks = local_maxima(s, 0.0);
        if (!peaks.empty()) {
            const double top = s.power[peaks.front()];
            std::size_t low = peaks.front();
            for (auto k : peaks)
                if (s.power[k] >= 0.1 * top && s.omega[k] < s.omega[low]) low = k;
            slow_starts.push_back(s.omega[low]);
        }
        slow_starts.push_back(pi / span);
        slow_starts.push_back(2.0 * pi / span);
    }

    TwoSineFit best;
    double best_rss = 1e300;
    std::vector<double> history;
    std::string failures;
    const std::size_t m = w.tau.size();
    const lm::Residual f = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
        for (std::size_t i = 0; i < m; ++i) {
            const double t = w.tau[i];
            const double ad = q(0) * std::sin(q(1) * t + q(2));
            const double ab = q(3) * std::sin(q(4) * t + q(5));
            r(Eigen::Index(i)) = ad + ab - w.v[i];
            if (J) {
                const double cd = std::cos(q(1) * t + q(2)), cb = std::cos(q(4) * t + q(5));
                const auto ii = Eigen::Index(i);
                (*J)(ii, 0) = std::sin(q(1) * t + q(2));
                (*J)(ii, 1) = q(0) * t * cd;
                (*J)(ii, 2) = q(0) * cd;
                (*J)(ii, 3) = std::sin(q(4) * t + q(5));
                (*J)(ii, 4) = q(3) * t * cb;
                (*J)(ii, 5) = q(3) * cb;
            }
        }
    };
    lm::Options lo = opts.lm;
    lo.lower = Eigen::VectorXd::Constant(6, -1e300);
    lo.lower(0) = 0.0;
    lo.lower(3) = 0.0;
    lo.lower(1) = 1e-12;
    lo.lower(4) = 1e-12;

    for (double omega_b : slow_starts) {
        // residual after the slow part, for the fast start values
        const auto slow = linear_phases(w, {omega_b});
        std::vector<double> resid(w.v.size());
        for (std::size_t i = 0; i < resid.size(); ++i)
            resid[i] = w.v[i] - slow[0].first * std::sin(omega_b * w.tau[i] + slow[0].second);
        const auto s = spectrum(w.tau, resid, w.dt, opts.zero_pad);
        const auto peaks = local_maxima(s, opts.min_fast_ratio * omega_b);
        if (peaks.empty()) {
            failures += " no spectral peak above " + std::to_string(opts.min_fast_ratio * omega_b) + ";";
            continue;
        }
        for (std::size_t c = 0; c < std::min<std::size_t>(2, peaks.size()); ++c) {
            const double omega_d = s.omega[peaks[c]];
            best.candidates.push_back(omega_d);
            const auto ph = linear_phases(w, {omega_d, omega_b});
            Eigen::VectorXd x0(6);
            x0 << ph[0].first, omega_d, ph[0].second, ph[1].first, omega_b, ph[1].second;
            lm::Result r;
            try {
                r = lm::minimize(f, x0, m, lo);
            } catch (const FitError& e) {
                failures += std::string(" ") + e.what() + ";";
                continue;
            }
            history.insert(history.end(), r.history.begin(), r.history.end());
            TwoSineParams p = normalize(TwoSineParams::from(r.x.data()));
            const bool swapped = p.w_d < p.w_B;
            if (swapped) {
                std::swap(p.A_d, p.A_B);
                std::swap(p.w_d, p.w_B);
                std::swap(p.phi_d, p.phi_B);
            }
            // a slow part close to a straight line creeps along a flat valley
            // (w_B -> 0, A_B -> inf) without meeting ftol; keep it if stalled
            const std::size_t nh = r.history.size();
            const bool stalled = !r.converged && nh > 50 &&
                                 r.history[nh - 51] - r.history.back() <= 1e-4 * r.history.back();
            if (!(p.A_d > 0.0) || !(p.A_B > 0.0)) {
                failures += " start " + std::to_string(omega_d) + " lost a component;";
                continue;
            }
            if (!(r.converged || stalled) || !(p.w_B > 0.0) || !(p.w_d > p.w_B)) {
                failures += " start " + std::to_string(omega_d) + (r.converged ? " gave" : " did not converge,") + " w_d " + std::to_string(p.w_d) + " w_B " + std::to_string(p.w_B) + ";";
                continue;
            }
            if (r.rss < best_rss) {
                best_rss = r.rss;
                best.p = p;
                best.iterations = r.iterations;
                const Eigen::MatrixXd cov = lm::covariance(r);
                // swapping the two components permutes the covariance
                const int perm[6] = {3, 4, 5, 0, 1, 2};
                for (int i = 0; i < 6; ++i)
                    for (int j = 0; j < 6; ++j)
                        best.covariance[std::size_t(i)][std::size_t(j)] =
                            swapped ? cov(perm[i], perm[j]) : cov(i, j);
                std::array<double, 6> sig{};
                for (std::size_t i = 0; i < 6; ++i) sig[i] = std::sqrt(std::max(best.covariance[i][i], 0.0));
                best.sigma = TwoSineParams::from(sig.data());
                best.residual_norm = std::sqrt(r.rss);
                best.notes.clear();
                if (stalled) best.notes.push_back("slow component weakly determined (fit stalled, not converged)");
            }
        }
    }
    if (best_rss == 1e300) {
        std::string cand;
        for (double c : best.candidates) cand += " " + std::to_string(c);
        throw FitError("fit_two_sine: no acceptable fit; fast candidates (1/t_r):" + cand + ";" + failures, history);
    }
    best.t_ref = w.t_ref;
    best.window_start = w.t_ref;
    best.window_end = w.t_ref + span;
    best.n_points = m;
    best.residuals.resize(m);
    for (std::size_t i = 0; i < m; ++i) best.residuals[i] = w.v[i] - best.p.eval(w.tau[i], 0.0);
    return best;
}

VelocityTrace synthesize_two_sine(const TwoSineParams& p, double t_ref, const std::vector<double>& t, double noise,
                                  std::uint64_t seed) {
    VelocityTrace out;
    out.t = t;
    out.v.resize(t.size());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, noise > 0.0 ? noise : 1.0);
    for (std::size_t i = 0; i < t.size(); ++i) out.v[i] = p.eval(t[i], t_ref) + (noise > 0.0 ? nd(rng) : 0.0);
    return out;
}

// ----------------------------------------------------------------- masses

namespace {
struct Slopes {
    double bloch, fast, cosine, t0;
};

Slopes slopes(const TwoSineParams& p, double t_ref) {
    const double tau0 = -p.phi_d / p.w_d;
    const double c = std::cos(p.w_B * tau0 + p.phi_B);
    return {p.A_B * p.w_B * c, p.A_d * p.w_d, c, t_ref + tau0};
}
}  // namespace

MassEstimate extract_masses(const TwoSineFit& fit, double force, double min_cos) {
    if (!(fit.p.w_d > 0.0) || !(fit.p.w_B > 0.0)) throw InvalidArgument("extract_masses: fit has no frequencies");
    const Slopes s = slopes(fit.p, fit.t_ref);
    if (std::abs(s.cosine) < min_cos)
        throw UnstableEstimateError("extract_masses: Bloch cosine factor " + std::to_string(s.cosine) +
                                    " at t0 is below " + std::to_string(min_cos));
    MassEstimate m;
    m.t0 = s.t0;
    m.bloch_slope = s.bloch;
    m.fast_slope = s.fast;
    m.m_eff = force / s.bloch;
    m.m_dyn = force / (s.fast + s.bloch);

    // linear error propagation through the covariance
    const auto masses = [&](const std::array<double, 6>& q) {
        const Slopes t = slopes(TwoSineParams::from(q.data()), fit.t_ref);
        return std::pair{force / t.bloch, force / (t.fast + t.bloch)};
    };
    const auto base = fit.p.array();
    std::array<double, 6> g_eff{}, g_dyn{};
    for (std::size_t i = 0; i < 6; ++i) {
        const double h = 1e-6 * std::max(std::abs(base[i]), 1e-3);
        auto up = base, dn = base;
        up[i] += h;
        dn[i] -= h;
        const auto a = masses(up), b = masses(dn);
        g_eff[i] = (a.first - b.first) / (2.0 * h);
        g_dyn[i] = (a.second - b.second) / (2.0 * h);
    }
    double v_eff = 0.0, v_dyn = 0.0;
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
            v_eff += g_eff[i] * fit.covariance[i][j] * g_eff[j];
            v_dyn += g_dyn[i] * fit.covariance[i][j] * g_dyn[j];
        }
    m.sigma_m_eff = std::sqrt(std::max(v_eff, 0.0));
    m.sigma_m_dyn = std::sqrt(std::max(v_dyn, 0.0));
    return m;
}

// ---------------------------------------------------------------- lowpass

std::vector<std::array<double, 5>> butterworth_sections(int order, double cutoff, double dt) {
    if (order < 2 || order % 2 != 0) throw InvalidArgument("butterworth_sections: order must be even and >= 2");
    const double nyquist = pi / dt;
    if (!(cutoff > 0.0) || !(cutoff < nyquist))
        throw InvalidArgument("lowpass cutoff " + std::to_string(cutoff) + " outside (0, Nyquist = " +
                              std::to_string(nyquist) + ")");
    const double k = std::tan(0.5 * cutoff * dt);  // prewarped, bilinear transform
    std::vector<std::array<double, 5>> sos;
    for (int j = 1; j <= order / 2; ++j) {
        const double zeta = std::sin(pi * (2.0 * j - 1.0) / (2.0 * order));
        const double a0 = 1.0 + 2.0 * zeta * k + k * k;
        const double b0 = k * k / a0;
        sos.push_back({b0, 2.0 * b0, b0, (2.0 * k * k - 2.0) / a0, (1.0 - 2.0 * zeta * k + k * k) / a0});
    }
    return sos;
}

namespace {
// direct form II transposed, in place, starting from state z scaled by x0
void sos_filter(const std::vector<std::array<double, 5>>& sos, std::vector<double>& x) {
    const double x0 = x.front();
    double gain = 1.0;
    for (const auto& s : sos) {
        const double dc = (s[0] + s[1] + s[2]) / (1.0 + s[3] + s[4]);
        // steady state for a constant input gain * x0
        double z2 = (s[2] - s[4] * dc) * gain * x0;
        double z1 = (s[1] - s[3] * dc) * gain * x0 + z2;
        for (double& xi : x) {
            const double in = xi;
            const double y = s[0] * in + z1;
            z1 = s[1] * in - s[3] * y + z2;
            z2 = s[2] * in - s[4] * y;
            xi = y;
        }
        gain *= dc;
    }
}
}  // namespace

VelocityTrace lowpass_guide(const VelocityTrace& trace, double cutoff) {
    const std::size_t n = trace.size();
    const auto sos = butterworth_sections(4, cutoff, n > 1 ? (trace.t.back() - trace.t.front()) / double(n - 1) : 1.0);
    const std::size_t pad = 3 * (2 * sos.size() + 1);
    if (n <= pad) throw InvalidArgument("lowpass_guide: need more than " + std::to_string(pad) + " samples");
    const double dt = (trace.t.back() - trace.t.front()) / double(n - 1);
    for (std::size_t i = 1; i < n; ++i)
        if (std::abs(trace.t[i] - trace.t[i - 1] - dt) > 1e-6 * dt)
            throw InvalidArgument("lowpass_guide: samples are not uniformly spaced");

    const auto& v = trace.v;
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * v.front() - v[i]);
    ext.insert(ext.end(), v.begin(), v.end());
    for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * v.back() - v[n - 1 - i]);
    sos_filter(sos, ext);
    std::reverse(ext.begin(), ext.end());
    sos_filter(sos, ext);
    std::reverse(ext.begin(), ext.end());

    VelocityTrace out;
    out.t = trace.t;
    out.v.assign(ext.begin() + std::ptrdiff_t(pad), ext.begin() + std::ptrdiff_t(pad + n));
    out.notes.push_back("low-pass guide to the eye, 4th-order Butterworth, cutoff " + std::to_string(cutoff) +
                        " rad/t_r");
    return out;
}

}  // namespace onset::analysis
