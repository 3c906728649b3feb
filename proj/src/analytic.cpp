#include "onset/analytic.hpp"

#include <cmath>
#include <ostream>

#include "onset/csv.hpp"
#include "onset/quadrature.hpp"

namespace onset::analytic {

void WavepacketSpec::validate() const {
    std::string problems;
    if (band < 0) problems += " band index must be >= 0;";
    if (amplitude) {
        if (!(support_hi > support_lo)) problems += " custom amplitude needs support_lo < support_hi;";
        if (!(support_lo > -1.0 && support_hi < 1.0))
            problems += " support must stay inside the open zone (-1, 1);";
    } else {
        if (!(sigma_k > 0.0) || !std::isfinite(sigma_k)) problems += " sigma_k must be > 0;";
        if (!std::isfinite(k0)) problems += " k0 must be finite;";
        else if (!(k0 - 8.0 * sigma_k > -1.0 && k0 + 8.0 * sigma_k < 1.0))
            problems += " support k0 +- 8 sigma_k reaches the zone edge;";
    }
    if (!problems.empty()) throw InvalidArgument("invalid wavepacket:" + problems);
}

Wavepacket::Wavepacket(const WavepacketSpec& spec, std::size_t nodes) : band_(spec.band) {
    spec.validate();
    if (nodes < 2) throw InvalidArgument("Wavepacket: need at least 2 quadrature nodes");
    std::function<cplx(double)> f = spec.amplitude;
    if (f) {
        lo_ = spec.support_lo;
        hi_ = spec.support_hi;
    } else {
        const double k0 = spec.k0, s = spec.sigma_k;
        const double pref = std::pow(2.0 * constants::pi * s * s, -0.25);
        f = [=](double k) { return cplx(pref * std::exp(-(k - k0) * (k - k0) / (4.0 * s * s)), 0.0); };
        lo_ = k0 - 8.0 * s;
        hi_ = k0 + 8.0 * s;
    }
    const auto rule = quad::gauss_legendre(nodes);
    const double c = 0.5 * (lo_ + hi_), h = 0.5 * (hi_ - lo_);
    kappa_.resize(nodes);
    w_.resize(nodes);
    c_.resize(nodes);
    double norm = 0.0;
    for (std::size_t j = 0; j < nodes; ++j) {
        kappa_[j] = c + h * rule.nodes[j];
        w_[j] = h * rule.weights[j];
        c_[j] = f(kappa_[j]);
        norm += w_[j] * std::norm(c_[j]);
    }
    if (!(norm > 0.0)) throw InvalidArgument("Wavepacket: amplitude has zero norm");
    raw_norm_ = norm;
    const double scale = 1.0 / std::sqrt(norm);
    for (auto& a : c_) a *= scale;
}

namespace {
bands::SolveOptions solve_options(const AnalyticOptions& o) {
    bands::SolveOptions s;
    s.cutoff = o.cutoff;
    s.n_bands = o.n_bands;
    s.policy = o.policy;
    return s;
}

double path_lo(const Wavepacket& p, double f, double t_max, double pad) {
    return std::min(p.support_lo(), p.support_lo() + f * t_max) - pad;
}
double path_hi(const Wavepacket& p, double f, double t_max, double pad) {
    return std::max(p.support_hi(), p.support_hi() + f * t_max) + pad;
}

const quad::GaussRule& short_rule() {
    static const quad::GaussRule rule = quad::gauss_legendre(8);
    return rule;
}
}  // namespace

Model::Model(const LatticeConfig& cfg, const WavepacketSpec& spec, double force, double t_max,
             const AnalyticOptions& opts)
    : cfg_(cfg),
      opts_(opts),
      packet_(spec, opts.nodes),
      force_(force),
      t_max_(t_max),
      bands_(cfg, path_lo(packet_, force, t_max, 2.0 * opts.path_step),
             path_hi(packet_, force, t_max, 2.0 * opts.path_step), solve_options(opts), opts.path_step,
             opts.phase_tol) {
    if (!std::isfinite(force)) throw InvalidArgument("analytic model: force must be finite");
    if (!(t_max >= 0.0)) throw InvalidArgument("analytic model: t_max must be >= 0");
    const int N = packet_.band();
    if (N >= opts.n_bands) throw InvalidArgument("analytic model: wavepacket band exceeds n_bands");

    const auto& bd = bands_.data();
    const int nb = bd.n_bands();
    for (std::size_t ik = 0; ik < bd.grid().count; ++ik)
        for (int n = 0; n < nb; ++n) {
            if (n == N) continue;
            const double e = bd.gap(n, N, ik);
            max_gap_ = std::max(max_gap_, std::abs(e));
            if (std::abs(e) >= bd.degeneracy_floor())
                guard_ratio_ = std::max(guard_ratio_, 2.0 * std::abs(force * bd.momentum(n, N, ik)) / (e * e));
        }

    const std::size_t nj = packet_.size();
    node_.resize(nj);
    const auto solve = [&](std::size_t j) { node_[j] = bands_.exact(packet_.kappa(j)); };
    if (opts.policy == ExecPolicy::parallel) {
#pragma omp parallel for schedule(dynamic, 4)
        for (std::size_t j = 0; j < nj; ++j) solve(j);
    } else {
        for (std::size_t j = 0; j < nj; ++j) solve(j);
    }
    g0_.resize(nj * std::size_t(nb));
    for (std::size_t j = 0; j < nj; ++j)
        for (int n = 0; n < nb; ++n)
            g0_[j * std::size_t(nb) + std::size_t(n)] = bands_.antiderivative(n, packet_.kappa(j));
}

namespace {
// band quantities at k = kappa + F t: the node's direct solve while k = kappa,
// the interpolant otherwise
struct AtK {
    const bands::BandInterpolant& b;
    const bands::BandInterpolant::Point& node;
    double k;
    bool at_node;

    double energy(int n) const { return at_node ? node.energy[std::size_t(n)] : b.energy(n, k); }
    double inverse_mass(int n) const { return at_node ? node.inverse_mass[std::size_t(n)] : b.inverse_mass(n, k); }
    cplx momentum(int n, int m) const { return at_node ? node.momentum(n, m) : b.momentum(n, m, k); }
};

// per unit force: x_nN / E_nN = 2 p_nN / (i E_nN^2)
cplx x_over_e(cplx p, double e) { return 2.0 * p / (cplx(0.0, 1.0) * e * e); }
}  // namespace

double Model::gamma(int n, std::size_t j, double t) const {
    const double kap = packet_.kappa(j);
    const double span = force_ * t;
    if (std::abs(span) < 4.0 * opts_.path_step) {
        // short drift: t * mean of E_n over [kappa, k]; stays accurate as F -> 0
        const auto& rule = short_rule();
        double acc = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i)
            acc += rule.weights[i] * bands_.energy(n, kap + span * 0.5 * (1.0 + rule.nodes[i]));
        return 0.5 * acc * t;
    }
    const std::size_t idx = j * std::size_t(bands_.n_bands()) + std::size_t(n);
    return (bands_.antiderivative(n, kap + span) - g0_[idx]) / force_;
}

Model::Parts Model::parts(double t) const {
    const int N = packet_.band();
    const int nb = bands_.n_bands();
    const double floor = bands_.data().degeneracy_floor();
    Parts out;
    for (std::size_t j = 0; j < packet_.size(); ++j) {
        const double kap = packet_.kappa(j), k = k_at(j, t);
        const auto& nd = node_[j];
        const AtK at{bands_, nd, k, k == kap};
        const double prob = packet_.probability(j);
        const double im = at.inverse_mass(N);
        out.intra += prob * im;
        out.inter += prob * (1.0 - im);
        if (k == kap && t == 0.0) continue;  // c_n = 0 exactly
        // c_n / F, finite as F -> 0
        const cplx c = packet_.amplitude(j);
        const cplx phaseN = std::polar(1.0, -gamma(N, j, t));
        const cplx cN = c * phaseN;
        const double eNk = at.energy(N), eNkap = nd.energy[std::size_t(N)];
        for (int n = 0; n < nb; ++n) {
            if (n == N) continue;
            const double ekap = nd.energy[std::size_t(n)] - eNkap;
            const double ek = at.energy(n) - eNk;
            if (std::abs(ekap) < floor || std::abs(ek) < floor) continue;
            const cplx pNn = at.momentum(N, n);
            const cplx cn_over_f = c * (x_over_e(std::conj(pNn), ek) * phaseN -
                                        x_over_e(nd.momentum(n, N), ekap) * std::polar(1.0, -gamma(n, j, t)));
            // <N|[p, H0]|n> = (E_n - E_N) p_Nn
            const cplx term = cplx(0.0, -1.0) * std::conj(cN) * cn_over_f * ek * pNn;
            out.coherence += packet_.weight(j) * 2.0 * term.real();
        }
    }
    return out;
}

double Model::acceleration_ratio(double t) const {
    const Parts p = parts(t);
    return p.intra + p.inter + p.coherence;
}

double Model::closing_ratio(double t) const {
    const int N = packet_.band();
    const int nb = bands_.n_bands();
    const double floor = bands_.data().degeneracy_floor();
    double total = 0.0;
    for (std::size_t j = 0; j < packet_.size(); ++j) {
        const double kap = packet_.kappa(j), k = k_at(j, t);
        const auto& nd = node_[j];
        const AtK at{bands_, nd, k, k == kap};
        const double gN = gamma(N, j, t);
        const double eNk = at.energy(N);
        double acc = at.inverse_mass(N);
        for (int n = 0; n < nb; ++n) {
            if (n == N) continue;
            const double e0 = nd.energy[std::size_t(n)] - nd.energy[std::size_t(N)];
            const double ek = at.energy(n) - eNk;
            if (std::abs(e0) < floor || std::abs(ek) < floor) continue;
            const double phase = gN - gamma(n, j, t);
            acc += 4.0 * ek / (e0 * e0) * (at.momentum(N, n) * nd.momentum(n, N) * std::polar(1.0, phase)).real();
        }
        total += packet_.probability(j) * acc;
    }
    return total;
}

double Model::initial_velocity() const {
    double v = 0.0;
    for (std::size_t j = 0; j < packet_.size(); ++j)
        v += packet_.probability(j) * node_[j].momentum(band(), band()).real();
    return v;
}

double short_time_acceleration(const Model& model, double t, int n_terms) {
    const auto& b = model.bands();
    const auto& pk = model.packet();
    const int N = model.band();
    const int nb = n_terms > 0 ? std::min(n_terms, b.n_bands()) : b.n_bands();
    const double floor = b.data().degeneracy_floor();
    double total = 0.0;
    for (std::size_t j = 0; j < pk.size(); ++j) {
        const auto& nd = model.node(j);
        const double eN = nd.energy[std::size_t(N)];
        double acc = nd.inverse_mass[std::size_t(N)];
        for (int n = 0; n < nb; ++n) {
            if (n == N) continue;
            const double d = nd.energy[std::size_t(n)] - eN;
            if (std::abs(d) < floor) continue;
            acc += 4.0 * std::norm(nd.momentum(n, N)) / d * std::cos(d * t);
        }
        total += pk.probability(j) * acc;
    }
    return total;
}

VelocityTrace perturbative_velocity_trace(const Model& model, const std::vector<double>& t_grid) {
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        if (!(t_grid[i] >= 0.0) || t_grid[i] > model.t_max() * (1.0 + 1e-12) + 1e-12)
            throw InvalidArgument("perturbative_velocity_trace: times must lie in [0, t_max]");
        if (i > 0 && !(t_grid[i] > t_grid[i - 1]))
            throw InvalidArgument("perturbative_velocity_trace: times must be strictly ascending");
    }
    const std::size_t n = t_grid.size();
    VelocityTrace tr;
    tr.t = t_grid;
    tr.v.assign(n, 0.0);
    tr.a.assign(n, 0.0);
    tr.guard_ratio = model.guard_ratio();
    tr.guard_violated = model.guard_violated();
    if (tr.guard_violated)
        tr.notes.push_back("first-order amplitude |F x_nN/E_nN| = " + std::to_string(tr.guard_ratio) +
                           " exceeds the validity guard " + std::to_string(model.options().guard));
    if (n == 0) return tr;

    const double F = model.force();
    const auto& rule = quad::gauss_legendre(4);
    const double max_step = 0.5 / std::max(model.max_gap(), 1.0);
    // increments[i] = int over [t_{i-1}, t_i] (with t_{-1} = 0)
    std::vector<double> increments(n, 0.0);
    const auto body = [&](std::size_t i) {
        tr.a[i] = F * model.acceleration_ratio(t_grid[i]);
        if (F == 0.0) return;
        const double a = i == 0 ? 0.0 : t_grid[i - 1];
        const double b = t_grid[i];
        if (b <= a) return;
        const auto m = std::size_t(std::ceil((b - a) / max_step));
        const double h = (b - a) / double(m);
        double acc = 0.0;
        for (std::size_t s = 0; s < m; ++s) {
            const double lo = a + h * double(s);
            for (std::size_t q = 0; q < rule.nodes.size(); ++q)
                acc += rule.weights[q] * model.acceleration_ratio(lo + 0.5 * h * (1.0 + rule.nodes[q]));
        }
        increments[i] = 0.5 * h * acc * F;
    };
    if (model.options().policy == ExecPolicy::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
        for (std::size_t i = 0; i < n; ++i) body(i);
    } else {
        for (std::size_t i = 0; i < n; ++i) body(i);
    }
    double v = model.initial_velocity();
    for (std::size_t i = 0; i < n; ++i) {
        v += increments[i];
        tr.v[i] = v;
    }
    return tr;
}

double BandAmplitudes::norm() const {
    double s = 0.0;
    for (const auto& band : amp)
        for (std::size_t j = 0; j < band.size(); ++j) s += weight[j] * std::norm(band[j]);
    return s;
}

double BandAmplitudes::population(int n) const {
    double s = 0.0;
    const auto& band = amp.at(std::size_t(n));
    for (std::size_t j = 0; j < band.size(); ++j) s += weight[j] * std::norm(band[j]);
    return s;
}

namespace {
enum class Basis { modified, bloch };

BandAmplitudes amplitudes(const Model& model, double t, Basis basis) {
    const auto& pk = model.packet();
    const auto& b = model.bands();
    const int N = model.band();
    const int nb = b.n_bands();
    const double F = model.force();
    const double floor = b.data().degeneracy_floor();
    BandAmplitudes out;
    out.t = t;
    out.amp.assign(std::size_t(nb), std::vector<cplx>(pk.size()));
    for (std::size_t j = 0; j < pk.size(); ++j) {
        const double kap = pk.kappa(j), k = model.k_at(j, t);
        const auto& nd = model.node(j);
        const AtK at{b, nd, k, k == kap};
        out.kappa.push_back(kap);
        out.k.push_back(k);
        out.weight.push_back(pk.weight(j));
        const cplx c = pk.amplitude(j);
        const cplx phaseN = std::polar(1.0, -model.gamma(N, j, t));
        out.amp[std::size_t(N)][j] = c * phaseN;
        const double eNk = at.energy(N), eNkap = nd.energy[std::size_t(N)];
        for (int n = 0; n < nb; ++n) {
            if (n == N) continue;
            const double ekap = nd.energy[std::size_t(n)] - eNkap;
            const double ek = at.energy(n) - eNk;
            if (std::abs(ekap) < floor || std::abs(ek) < floor) {
                out.degenerate = true;
                continue;
            }
            const cplx init = F * x_over_e(nd.momentum(n, N), ekap);
            if (basis == Basis::modified) {
                out.amp[std::size_t(n)][j] = -c * init * std::polar(1.0, -model.gamma(n, j, t));
            } else if (t != 0.0) {
                const cplx now = F * x_over_e(at.momentum(n, N), ek);
                out.amp[std::size_t(n)][j] = c * (now * phaseN - init * std::polar(1.0, -model.gamma(n, j, t)));
            }
        }
    }
    return out;
}
}  // namespace

BandAmplitudes modified_bloch_amplitudes(const Model& model, double t) {
    return amplitudes(model, t, Basis::modified);
}

BandAmplitudes bloch_basis_amplitudes(const Model& model, double t) {
    return amplitudes(model, t, Basis::bloch);
}

AccelDecomposition acceleration_decomposition(const Model& model, const std::vector<double>& t_grid) {
    const std::size_t nt = t_grid.size();
    AccelDecomposition d;
    d.t = t_grid;
    d.total.assign(nt, 0.0);
    d.intra.assign(nt, 0.0);
    d.inter.assign(nt, 0.0);
    d.coherence.assign(nt, 0.0);
    const auto body = [&](std::size_t i) {
        const auto p = model.parts(t_grid[i]);
        d.intra[i] = p.intra;
        d.inter[i] = p.inter;
        d.coherence[i] = p.coherence;
        d.total[i] = p.intra + p.inter + p.coherence;
    };
    if (model.options().policy == ExecPolicy::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
        for (std::size_t i = 0; i < nt; ++i) body(i);
    } else {
        for (std::size_t i = 0; i < nt; ++i) body(i);
    }
    return d;
}

void write_trace_csv(std::ostream& out, const AccelDecomposition& dec, const VelocityTrace& trace) {
    if (dec.t.size() != trace.t.size())
        throw InvalidArgument("write_trace_csv: decomposition and trace lengths differ");
    csv::Writer w(out, {"t", "a_total", "a_intra", "a_inter", "a_coh", "v"});
    for (std::size_t i = 0; i < dec.t.size(); ++i)
        w.row({dec.t[i], dec.total[i], dec.intra[i], dec.inter[i], dec.coherence[i], trace.v[i]});
}

}  // namespace onset::analytic
