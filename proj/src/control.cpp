#include "hydroctrl/control.hpp"

#include <algorithm>
#include <cmath>

namespace hydroctrl {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

void ControlProblem::validate() const {
    if (!(T > 0.0)) throw std::invalid_argument("ControlProblem: T must be positive");
    if (omega.empty()) throw std::invalid_argument("ControlProblem: omega must be nonempty");
    for (const auto& iv : omega)
        if (!(iv.hi > iv.lo)) throw std::invalid_argument("ControlProblem: empty omega interval");
    if (!(cutoff_width > 0.0)) throw std::invalid_argument("ControlProblem: cutoff width must be positive");
    if (!(cg_tol > 0.0 && cg_tol < 1.0) || !(newton_tol > 0.0 && newton_tol < 1.0))
        throw std::invalid_argument("ControlProblem: tolerances must lie in (0,1)");
}

std::vector<double> smoothed_indicator(const GridSpec& g, const std::vector<Interval>& omega,
                                       double width) {
    auto xs = grid_points(g);
    std::vector<double> chi(xs.size(), 0.0);
    for (const auto& iv : omega) {
        double len = iv.hi - iv.lo;
        double w = std::min(width, 0.45 * len);
        for (size_t i = 0; i < xs.size(); ++i) {
            // position within the interval, modulo the period
            double x = xs[i];
            double rel = x - iv.lo;
            rel -= kTwoPi * std::floor(rel / kTwoPi);
            if (rel <= 0.0 || rel >= len) continue;
            double v = 1.0;
            if (rel < w) v = 0.5 * (1.0 - std::cos(3.14159265358979323846 * rel / w));
            else if (rel > len - w)
                v = 0.5 * (1.0 - std::cos(3.14159265358979323846 * (len - rel) / w));
            chi[i] = std::max(chi[i], v);
        }
    }
    return chi;
}

double indicator_measure(const std::vector<double>& chi) {
    double acc = 0.0;
    for (double v : chi) acc += v;
    return acc / static_cast<double>(chi.size());
}

IngamReport ingham_ratio(double T, int n_max, int trials, double m, const PhysParams& p,
                         uint64_t seed) {
    if (n_max < 1 || trials < 1) throw std::invalid_argument("ingham_ratio: n_max, trials >= 1");
    double tmax = tau_symbol(n_max, m, p.grav, p.sigma);
    double period = kTwoPi / tmax;
    size_t npts = static_cast<size_t>(std::ceil(20.0 * T / period));
    npts = std::max<size_t>(npts, 2000);
    if (npts > 40000000)
        throw std::invalid_argument("ingham_ratio: quadrature resolution budget exceeded");
    if (npts % 2 == 1) ++npts;  // Simpson needs an even interval count
    const double h = T / static_cast<double>(npts);

    std::vector<double> freq(static_cast<size_t>(n_max) + 1);
    for (int n = 0; n <= n_max; ++n) freq[static_cast<size_t>(n)] = tau_symbol(n, m, p.grav, p.sigma);

    IngamReport rep;
    rep.quadrature_points = npts + 1;
    rep.min_ratio = 1e300;

    std::vector<cx> w(freq.size()), phase(freq.size()), step(freq.size());
    for (int trial = 0; trial < trials; ++trial) {
        // one generator per trial so the draws extend consistently in n_max
        std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(trial + 1));
        std::normal_distribution<double> gauss(0.0, 1.0);
        double wsum = 0.0;
        for (size_t n = 0; n < w.size(); ++n) {
            // decaying draw: the infimum lives in the slowly-separated low modes
            double scale = 1.0 / ((1.0 + static_cast<double>(n)) * (1.0 + static_cast<double>(n)));
            w[n] = scale * cx(gauss(rng), gauss(rng));
            wsum += std::norm(w[n]);
        }
        for (size_t n = 0; n < w.size(); ++n) {
            phase[n] = w[n];
            step[n] = std::polar(1.0, -freq[n] * h);
        }
        double integral = 0.0;
        for (size_t j = 0; j <= npts; ++j) {
            if (j % 1024 == 0) {
                double t = h * static_cast<double>(j);
                for (size_t n = 0; n < w.size(); ++n) phase[n] = w[n] * std::polar(1.0, -freq[n] * t);
            }
            cx s(0.0);
            for (size_t n = 0; n < w.size(); ++n) s += phase[n];
            double v = std::norm(s);
            double wq = (j == 0 || j == npts) ? 1.0 : (j % 2 == 1 ? 4.0 : 2.0);
            integral += wq * v;
            for (size_t n = 0; n < w.size(); ++n) phase[n] *= step[n];
        }
        integral *= h / 3.0;
        double ratio = integral / wsum;
        rep.ratios.push_back(ratio);
        rep.min_ratio = std::min(rep.min_ratio, ratio);
    }
    return rep;
}

double ingham_integral_closed_form(double T, const std::vector<cx>& w, double m,
                                   const PhysParams& p) {
    double acc = 0.0;
    for (size_t a = 0; a < w.size(); ++a) {
        for (size_t b = 0; b < w.size(); ++b) {
            double delta = tau_symbol(static_cast<int>(a), m, p.grav, p.sigma) -
                           tau_symbol(static_cast<int>(b), m, p.grav, p.sigma);
            cx e;
            if (std::abs(delta) < 1e-14) {
                e = T;
            } else {
                e = (std::polar(1.0, -delta * T) - 1.0) / cx(0.0, -delta);
            }
            acc += (w[a] * std::conj(w[b]) * e).real();
        }
    }
    return acc;
}

namespace {

PairForcingFn cutoff_forcing(const PairSeries& f, const std::vector<double>& chi, const GridSpec& g) {
    auto fs = std::make_shared<PairSeries>(f);
    auto chis = std::make_shared<std::vector<double>>(chi);
    GridSpec gg = g;
    return [fs, chis, gg](double t) {
        PairField v = fs->eval(t);
        PairField out = zero_pair(gg);
        out.b = grid_weight_product(v.b, *chis);
        return out;
    };
}

}  // namespace

PairField gramian_apply(const LinearizedSystem& sys, const PairField& f1,
                        const std::vector<double>& chi) {
    PairSeries f = solve_adjoint_backward(sys, f1);
    PairForcingFn forcing = cutoff_forcing(f, chi, sys.grid());
    PairSeries h = solve_linearized(sys, zero_pair(sys.grid()), forcing);
    return h.samples.back();
}

namespace {

CgResult conjugate_gradient(const std::function<PairField(const PairField&)>& A, const PairField& rhs,
                            double tol, int maxiter) {
    CgResult res;
    res.x = zero_pair(rhs.a.grid());
    PairField r = rhs;
    PairField p = r;
    double rs = h0_inner(r, r).real();
    double rhs0 = std::sqrt(rs);
    if (rhs0 == 0.0) {
        res.converged = true;
        return res;
    }
    for (int it = 0; it < maxiter; ++it) {
        PairField Ap = A(p);
        double pAp = h0_inner(p, Ap).real();
        if (!(pAp > 0.0)) break;  // lost positivity: stagnate
        double alpha = rs / pAp;
        res.x += alpha * p;
        r -= alpha * Ap;
        double rs_new = h0_inner(r, r).real();
        res.residuals.push_back(std::sqrt(rs_new) / rhs0);
        if (res.residuals.back() <= tol) {
            res.converged = true;
            return res;
        }
        p = r + (rs_new / rs) * p;
        rs = rs_new;
    }
    return res;
}

}  // namespace

ControlResult hum_control(const LinearizedSystem& sys, const PairField& h_in,
                          const PairField& h_end, const PairForcingFn& q,
                          const ControlProblem& prob) {
    prob.validate();
    const GridSpec& g = sys.grid();
    std::vector<double> chi = smoothed_indicator(g, prob.omega, prob.cutoff_width);

    // Riesz representative of the data functional via forward solves.
    PairField rhs = h_end;
    PairSeries hfree = solve_linearized(sys, h_in, nullptr);
    rhs -= hfree.samples.back();
    if (q) {
        PairSeries hq = solve_linearized(sys, zero_pair(g), q);
        rhs -= hq.samples.back();
    }

    bool tik = prob.tikhonov;
    auto A = [&](const PairField& x) {
        PairField y = gramian_apply(sys, x, chi);
        if (tik) y += 1e-12 * x;
        return y;
    };
    CgResult cg = conjugate_gradient(A, rhs, prob.cg_tol, prob.cg_maxiter);
    if (!cg.converged) {
        ControlResult bad;
        bad.cg_residuals = cg.residuals;
        bad.converged = false;
        bad.gramian_iters = static_cast<int>(cg.residuals.size());
        throw BudgetExhausted("hum_control: conjugate gradient budget exhausted (" +
                              std::to_string(cg.residuals.size()) + " iterations)");
    }

    ControlResult out;
    out.terminal_datum = cg.x;
    out.cg_residuals = cg.residuals;
    out.gramian_iters = static_cast<int>(cg.residuals.size());

    PairSeries fadj = solve_adjoint_backward(sys, cg.x);
    out.control.t0 = 0.0;
    out.control.dt = fadj.dt;
    for (size_t i = 0; i < fadj.samples.size(); ++i) {
        PairField c = zero_pair(g);
        c.b = grid_weight_product(fadj.samples[i].b, chi);
        out.control.samples.push_back(c);
    }

    // Certify with an independent forward run using the returned control.
    auto ctrl_fn = cutoff_forcing(fadj, chi, g);
    PairForcingFn total = ctrl_fn;
    if (q) {
        PairForcingFn qq = q;
        total = [ctrl_fn, qq](double t) { return ctrl_fn(t) + qq(t); };
    }
    out.state = solve_linearized(sys, h_in, total);
    PairField defect = out.state.samples.back() - h_end;
    out.final_error_h0 = h0_norm(defect);
    out.final_error_hs = hs_pair_norm(defect, 2.0);
    out.control_sup_h0 = out.control.sup_h0_norm();
    double data = h0_norm(h_in) + h0_norm(h_end);
    if (q) {
        for (size_t i = 0; i < out.state.samples.size(); ++i)
            data = std::max(data, h0_norm(h_in) + h0_norm(h_end) +
                                      h0_norm(q(out.state.dt * static_cast<double>(i))));
    }
    out.control_constant = data > 0.0 ? out.control_sup_h0 / data : 0.0;

    double tail = 0.0;
    for (const auto& s : out.control.samples) {
        auto v = grid_values(s.b);
        for (size_t i = 0; i < v.size(); ++i)
            if (chi[i] == 0.0) tail = std::max(tail, std::abs(v[i]));
    }
    out.support_tail = tail;
    out.converged = true;
    return out;
}

ObservabilityReport observability_estimate(const LinearizedSystem& sys, int trials,
                                           const ControlProblem& prob, uint64_t seed) {
    prob.validate();
    const GridSpec& g = sys.grid();
    std::vector<double> chi = smoothed_indicator(g, prob.omega, prob.cutoff_width);
    std::mt19937_64 rng(seed);
    ObservabilityReport rep;
    rep.min_ratio = 1e300;
    double after_acc = 0.0, before_acc = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        PairField gT = random_real_pair(g, rng, g.n_modes / 4);
        PairSeries u = solve_linearized_backward(sys, gT);
        double num = 0.0, num_before = 0.0;
        for (size_t i = 0; i < u.samples.size(); ++i) {
            double w = (i == 0 || i + 1 == u.samples.size()) ? 0.5 : 1.0;
            SpectralField w1 = abs_derivative_pow(u.samples[i].a, 1.5);
            auto v1 = grid_values(w1);
            auto v2 = grid_values(u.samples[i].b);
            double loc = 0.0;
            for (size_t j = 0; j < v1.size(); ++j)
                loc += chi[j] * (std::norm(v1[j]) + std::norm(v2[j]));
            loc /= static_cast<double>(v1.size());
            num += w * loc;
            // localize-before reading, for diagnostics
            SpectralField cu1 = grid_weight_product(u.samples[i].a, chi);
            SpectralField cw1 = abs_derivative_pow(cu1, 1.5);
            SpectralField cu2 = grid_weight_product(u.samples[i].b, chi);
            double locb = l2_norm(cw1) * l2_norm(cw1) + l2_norm(cu2) * l2_norm(cu2);
            num_before += w * locb;
        }
        num *= u.dt;
        num_before *= u.dt;
        double den = h0_norm(gT);
        double ratio = num / (den * den);
        rep.ratios.push_back(ratio);
        rep.min_ratio = std::min(rep.min_ratio, ratio);
        after_acc += num;
        before_acc += num_before;
    }
    rep.reading_ratio = before_acc > 0.0 ? after_acc / before_acc : 1.0;
    return rep;
}

PairField random_real_pair(const GridSpec& g, std::mt19937_64& rng, int kmax, double decay) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    PairField u = zero_pair(g);
    kmax = std::min(kmax, g.n_modes / 2 - 1);
    for (int k = 1; k <= kmax; ++k) {
        double s = std::exp(-decay * static_cast<double>(k) / std::max(1, kmax));
        cx ce(gauss(rng), gauss(rng));
        cx cp(gauss(rng), gauss(rng));
        u.a.set_coeff(k, s * ce);
        u.a.set_coeff(-k, std::conj(s * ce));
        u.b.set_coeff(k, s * cp);
        u.b.set_coeff(-k, std::conj(s * cp));
    }
    u.b.set_coeff(0, gauss(rng));
    double nrm = h0_norm(u);
    if (nrm > 0.0) u *= 1.0 / nrm;
    return u;
}

NonlinearControlResult nonlinear_control(const StatePair& u_in, const StatePair& u_end,
                                         const ControlProblem& prob, const PhysParams& p,
                                         const GridSpec& g, const StepperConfig& scfg) {
    prob.validate();
    const double T = prob.T;
    std::vector<double> chi = smoothed_indicator(g, prob.omega, prob.cutoff_width);
    PairField target{u_end.eta, u_end.psi};

    NonlinearControlResult res;

    // Accumulated pre-cutoff control, sampled on the solver grid.
    double dt = scfg.dt > 0.0 ? scfg.dt : StepperConfig::default_dt(g, p, T);
    size_t nsteps = static_cast<size_t>(std::llround(T / dt));
    dt = T / static_cast<double>(nsteps);
    PairSeries facc;
    facc.t0 = 0.0;
    facc.dt = dt;
    facc.samples.assign(nsteps + 1, zero_pair(g));

    auto pext_fn = [&](double t) {
        PairField v = facc.eval(t);
        return grid_weight_product(v.b, chi);
    };

    Trajectory traj = solve_nonlinear(u_in, pext_fn, T, scfg, p, g);
    PairField final{traj.states.back().eta, traj.states.back().psi};
    double err = h0_norm(final - target);
    res.error_log.push_back(err);

    for (int it = 0; it < prob.newton_maxiter && err > prob.newton_tol; ++it) {
        LinearizedSystem sys(traj, p, scfg.dno);
        PairField v = target - final;
        ControlResult lin = hum_control(sys, zero_pair(g), v, nullptr, prob);

        // Smooth the pre-cutoff update at the scheduled dyadic level.
        int j = prob.smoothing_j0 + it;
        PairSeries update = solve_adjoint_backward(sys, lin.terminal_datum);
        for (auto& s : update.samples) {
            s.a = zero_field(g);
            s.b = smoothing_projector(s.b, j);
        }

        double lambda = 1.0;
        bool accepted = false;
        for (int tries = 0; tries < 4 && !accepted; ++tries) {
            PairSeries trial = facc;
            for (size_t i = 0; i < trial.samples.size(); ++i)
                trial.samples[i].b += lambda * update.samples[i].b;
            auto trial_fn = [&](double t) {
                PairField w = trial.eval(t);
                return grid_weight_product(w.b, chi);
            };
            Trajectory traj_trial = solve_nonlinear(u_in, trial_fn, T, scfg, p, g);
            PairField fin{traj_trial.states.back().eta, traj_trial.states.back().psi};
            double e = h0_norm(fin - target);
            if (e < err || lambda < 0.2) {
                facc = trial;
                traj = std::move(traj_trial);
                final = fin;
                err = e;
                accepted = true;
            } else {
                lambda *= 0.5;
            }
        }
        res.error_log.push_back(err);
        res.iterations = it + 1;
        if (!accepted) break;
    }

    if (err > prob.newton_tol)
        throw BudgetExhausted("nonlinear_control: iteration budget exhausted, error " +
                              format_double(err));
    res.converged = true;
    res.pext = traj.forcing;
    res.trajectory = std::move(traj);
    return res;
}

}  // namespace hydroctrl
