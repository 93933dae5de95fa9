#include "hydroctrl/evolve.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

namespace hydroctrl {

namespace {

// phi_0..phi_3 at a complex argument, series for small |z| to avoid
// cancellation (the arguments here are purely imaginary).
cx phi_fn(int j, cx z) {
    if (j == 0) return std::exp(z);
    if (std::abs(z) < 1e-4) {
        // sum_{n>=0} z^n / (n+j)!
        cx acc(0.0), term(1.0);
        double fact = 1.0;
        for (int n = 1; n <= j; ++n) fact *= n;
        term = 1.0 / fact;
        acc = term;
        for (int n = 1; n <= 8; ++n) {
            term *= z / static_cast<double>(n + j);
            acc += term;
        }
        return acc;
    }
    cx e = std::exp(z);
    if (j == 1) return (e - 1.0) / z;
    if (j == 2) return (e - 1.0 - z) / (z * z);
    return (e - 1.0 - z - 0.5 * z * z) / (z * z * z);
}

struct Block {
    double a00 = 0, a01 = 0, a10 = 0, a11 = 0;
};

inline void apply_block(const Block& B, cx& x, cx& y) {
    cx nx = B.a00 * x + B.a01 * y;
    cx ny = B.a10 * x + B.a11 * y;
    x = nx;
    y = ny;
}

// Generator blocks G_k = [[0, b_k],[c_k, 0]] with b c = -omega^2 <= 0.
struct Generator {
    std::vector<double> b, c, omega;
};

// f(s G) = alpha I + gamma G with alpha = Re f(i s w), gamma = Im f(i s w)/w.
Block matrix_function(const Generator& gen, size_t i, double scale,
                      const std::function<cx(cx)>& f, double fprime0, double f0) {
    double w = gen.omega[i];
    double alpha, gamma;
    if (w > 0.0) {
        cx v = f(cx(0.0, scale * w));
        alpha = v.real();
        gamma = v.imag() / w;
    } else {
        alpha = f0;
        gamma = scale * fprime0;
    }
    Block B;
    B.a00 = alpha;
    B.a11 = alpha;
    B.a01 = gamma * gen.b[i];
    B.a10 = gamma * gen.c[i];
    return B;
}

struct StepPlan {
    std::vector<Block> Ehalf, Efull, HalfPhi1, W1, W2, W3;
};

StepPlan make_plan(const Generator& gen, double h) {
    const size_t n = gen.b.size();
    StepPlan P;
    P.Ehalf.resize(n);
    P.Efull.resize(n);
    P.HalfPhi1.resize(n);
    P.W1.resize(n);
    P.W2.resize(n);
    P.W3.resize(n);
    auto exp_f = [](cx z) { return std::exp(z); };
    for (size_t i = 0; i < n; ++i) {
        P.Ehalf[i] = matrix_function(gen, i, 0.5 * h, exp_f, 1.0, 1.0);
        P.Efull[i] = matrix_function(gen, i, h, exp_f, 1.0, 1.0);
        {
            auto f = [h](cx z) { return 0.5 * h * phi_fn(1, z); };
            P.HalfPhi1[i] = matrix_function(gen, i, 0.5 * h, f, 0.5 * h * 0.5, 0.5 * h);
        }
        {
            auto f = [h](cx z) { return h * (phi_fn(1, z) - 3.0 * phi_fn(2, z) + 4.0 * phi_fn(3, z)); };
            double f0 = h * (1.0 - 1.5 + 4.0 / 6.0);
            double fp = h * (0.5 - 0.5 + 4.0 / 24.0);
            P.W1[i] = matrix_function(gen, i, h, f, fp, f0);
        }
        {
            auto f = [h](cx z) { return 2.0 * h * (phi_fn(2, z) - 2.0 * phi_fn(3, z)); };
            double f0 = 2.0 * h * (0.5 - 2.0 / 6.0);
            double fp = 2.0 * h * (1.0 / 6.0 - 2.0 / 24.0);
            P.W2[i] = matrix_function(gen, i, h, f, fp, f0);
        }
        {
            auto f = [h](cx z) { return h * (4.0 * phi_fn(3, z) - phi_fn(2, z)); };
            double f0 = h * (4.0 / 6.0 - 0.5);
            double fp = h * (4.0 / 24.0 - 1.0 / 6.0);
            P.W3[i] = matrix_function(gen, i, h, f, fp, f0);
        }
    }
    return P;
}

void apply_blocks(const std::vector<Block>& B, PairField& u) {
    const size_t n = u.a.raw().size();
    for (size_t i = 0; i < n; ++i) apply_block(B[i], u.a.raw()[i], u.b.raw()[i]);
}

PairField blocks_applied(const std::vector<Block>& B, PairField u) {
    apply_blocks(B, u);
    return u;
}

Generator forward_generator(const GridSpec& g, const PhysParams& p) {
    // L = -A_flat: eta' = d(k) psi, psi' = -(g + sigma k^4) eta
    const int n = g.n_modes;
    Generator gen;
    gen.b.resize(static_cast<size_t>(n));
    gen.c.resize(static_cast<size_t>(n));
    gen.omega.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        int k = slot_wavenumber(i, n);
        double d = dno_flat_symbol(k, g);
        double s = p.grav + p.sigma * std::pow(static_cast<double>(k), 4);
        gen.b[static_cast<size_t>(i)] = d;
        gen.c[static_cast<size_t>(i)] = -s;
        gen.omega[static_cast<size_t>(i)] = std::sqrt(d * s);
    }
    return gen;
}

Generator negated(Generator gen) {
    for (auto& v : gen.b) v = -v;
    for (auto& v : gen.c) v = -v;
    return gen;
}

Generator adjoint_backward_generator(const GridSpec& g, const PhysParams& p) {
    // -A*_flat in the weighted H^0 product: f_eta' = -(g+sigma k^4)/|k|^3 f_psi,
    // f_psi' = d(k)|k|^3 f_eta; the eta mean slot is projected out.
    const int n = g.n_modes;
    Generator gen;
    gen.b.assign(static_cast<size_t>(n), 0.0);
    gen.c.assign(static_cast<size_t>(n), 0.0);
    gen.omega.assign(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        int k = slot_wavenumber(i, n);
        if (k == 0) continue;
        double w = h0_weight(0, k);
        double d = dno_flat_symbol(k, g);
        double s = p.grav + p.sigma * std::pow(static_cast<double>(k), 4);
        gen.b[static_cast<size_t>(i)] = -s / w;
        gen.c[static_cast<size_t>(i)] = d * w;
        gen.omega[static_cast<size_t>(i)] = std::sqrt(d * s);
    }
    return gen;
}

using StageFn = std::function<PairField(const PairField&, size_t half_idx)>;

// One ETDRK4 step; half indices (i0, i0+1, i0+2) address the stage times.
PairField etdrk4_step(const StepPlan& P, const PairField& u, size_t i0, const StageFn& N) {
    PairField k1 = N(u, i0);
    PairField an = blocks_applied(P.Ehalf, u) + blocks_applied(P.HalfPhi1, k1);
    PairField k2 = N(an, i0 + 1);
    PairField bn = blocks_applied(P.Ehalf, u) + blocks_applied(P.HalfPhi1, k2);
    PairField k3 = N(bn, i0 + 1);
    PairField cn = blocks_applied(P.Ehalf, an) + blocks_applied(P.HalfPhi1, 2.0 * k3 - k1);
    PairField k4 = N(cn, i0 + 2);
    return blocks_applied(P.Efull, u) + blocks_applied(P.W1, k1) + blocks_applied(P.W2, k2 + k3) +
           blocks_applied(P.W3, k4);
}

}  // namespace

double StepperConfig::default_dt(const GridSpec& g, const PhysParams& p, double T) {
    double tmax = tau_symbol(g.n_modes / 2, 1.0, p.grav, p.sigma);
    return std::min(0.5 / std::max(1.0, tmax) * 20.0, T / 200.0);
}

Trajectory solve_nonlinear(const StatePair& u0, const ForcingFn& pext, double T,
                           const StepperConfig& cfg, const PhysParams& p, const GridSpec& g) {
    p.validate();
    double dt = cfg.dt > 0.0 ? cfg.dt : StepperConfig::default_dt(g, p, T);
    size_t nsteps = static_cast<size_t>(std::llround(T / dt));
    if (nsteps < 1) nsteps = 1;
    dt = T / static_cast<double>(nsteps);

    Generator gen = forward_generator(g, p);
    StepPlan plan = make_plan(gen, dt);
    DnoConfig dc = cfg.dno;

    auto rhs_var = [&](const PairField& w, size_t half_idx) {
        double t = 0.5 * dt * static_cast<double>(half_idx);
        StatePair u{w.a, w.b};
        SpectralField gcorr = dn_apply(u.eta, u.psi, dc, /*skip_flat=*/true);
        gcorr.zero_mean();
        SpectralField g0psi =
            apply_multiplier(u.psi, [&](int k) { return cx(dno_flat_symbol(k, g), 0.0); });
        SpectralField gfull = g0psi + gcorr;
        SpectralField eta_x = derivative(u.eta);
        SpectralField psi_x = derivative(u.psi);
        SpectralField numer = gfull + product(eta_x, psi_x);
        SpectralField inv_w = pointwise_map(eta_x, [](double s) { return 1.0 / (1.0 + s * s); });
        SpectralField quad = product(psi_x, psi_x);
        quad *= -0.5;
        SpectralField bern = product(numer, product(numer, inv_w));
        bern *= 0.5;
        PairField out;
        out.a = gcorr;
        out.b = quad + bern - elastic_force_minus_flat(u.eta, p, dc) + pext(t);
        return out;
    };

    Trajectory tr;
    tr.grid = g;
    tr.params = p;
    tr.dt = dt;
    tr.times.reserve(nsteps + 1);
    tr.states.reserve(nsteps + 1);
    tr.forcing.reserve(nsteps + 1);

    StatePair u = u0;
    u.eta.zero_mean();
    tr.times.push_back(0.0);
    tr.states.push_back(u);
    tr.forcing.push_back(pext(0.0));

    for (size_t n = 0; n < nsteps; ++n) {
        double t = dt * static_cast<double>(n);
        double slope = derivative(u.eta).linf_grid();
        if (slope > dc.slope_guard)
            throw GuardViolation("slope guard violated during time integration", t);
        PairField w{u.eta, u.psi};
        w = etdrk4_step(plan, w, 2 * n, rhs_var);
        u.eta = w.a;
        u.psi = w.b;
        u.eta.enforce_reality();
        u.eta.zero_mean();
        u.psi.enforce_reality();
        tr.times.push_back(dt * static_cast<double>(n + 1));
        tr.states.push_back(u);
        tr.forcing.push_back(pext(tr.times.back()));
    }
    return tr;
}

Trajectory flat_trajectory(const GridSpec& g, const PhysParams& p, double T, double dt) {
    size_t nsteps = static_cast<size_t>(std::llround(T / dt));
    if (nsteps < 2) nsteps = 2;
    dt = T / static_cast<double>(nsteps);
    Trajectory tr;
    tr.grid = g;
    tr.params = p;
    tr.dt = dt;
    StatePair z{zero_field(g), zero_field(g)};
    for (size_t i = 0; i <= nsteps; ++i) {
        tr.times.push_back(dt * static_cast<double>(i));
        tr.states.push_back(z);
        tr.forcing.push_back(zero_field(g));
    }
    return tr;
}

PairField PairSeries::eval(double t) const {
    const size_t n = samples.size();
    if (n == 1) return samples[0];
    double s = (t - t0) / dt;
    long j = static_cast<long>(std::floor(s)) - 1;
    if (j < 0) j = 0;
    if (j > static_cast<long>(n) - 4) j = static_cast<long>(n) - 4;
    if (n < 4) j = 0;
    size_t m = std::min<size_t>(4, n);
    PairField acc = zero_pair(samples[0].a.grid());
    acc.a.set_real(false);
    acc.b.set_real(false);
    for (size_t q = 0; q < m; ++q) {
        double w = 1.0;
        double xq = static_cast<double>(j) + static_cast<double>(q);
        for (size_t r = 0; r < m; ++r) {
            if (r == q) continue;
            double xr = static_cast<double>(j) + static_cast<double>(r);
            w *= (s - xr) / (xq - xr);
        }
        acc += w * samples[static_cast<size_t>(j) + q];
    }
    return acc;
}

double PairSeries::sup_h0_norm() const {
    double m = 0.0;
    for (const auto& s : samples) m = std::max(m, h0_norm(s));
    return m;
}

LinearizedSystem::LinearizedSystem(const Trajectory& traj, const PhysParams& p, const DnoConfig& cfg)
    : g_(traj.grid), p_(p) {
    if (traj.size() < 3) throw std::invalid_argument("LinearizedSystem: trajectory too short");
    dt_ = traj.dt;
    nsteps_ = traj.size() - 1;
    T_ = traj.horizon();

    // States interpolated onto the half grid (cubic in each coefficient).
    std::vector<double> times;
    std::vector<StatePair> states;
    const size_t nh = 2 * nsteps_ + 1;
    times.reserve(nh);
    states.reserve(nh);
    PairSeries ps;
    ps.t0 = 0.0;
    ps.dt = dt_;
    for (const auto& st : traj.states) ps.samples.push_back({st.eta, st.psi});
    for (size_t i = 0; i < nh; ++i) {
        double t = 0.5 * dt_ * static_cast<double>(i);
        times.push_back(t);
        if (i % 2 == 0) {
            states.push_back(traj.states[i / 2]);
        } else {
            PairField w = ps.eval(t);
            w.a.enforce_reality();
            w.a.zero_mean();
            w.b.enforce_reality();
            states.push_back({w.a, w.b});
        }
    }
    slices_ = prepare_slices(times, states, p_, cfg);
    ops_ = assemble_Pprime(slices_, p_, cfg);
    adj_.resize(ops_.size());
    adj_built_.assign(ops_.size(), 0);
    for (const auto& s : slices_) all_flat_ = all_flat_ && s.flat;
}

PairField LinearizedSystem::apply_variable(size_t half_idx, const PairField& x) const {
    if (slices_[half_idx].flat) {
        PairField z = zero_pair(g_);
        z.a.set_real(x.a.is_real());
        z.b.set_real(x.b.is_real());
        return z;
    }
    PairField full = ops_[half_idx](x);
    // subtract the flat part
    PairField flat = zero_pair(g_);
    flat.a = apply_multiplier(x.b, [&](int k) { return cx(-dno_flat_symbol(k, g_), 0.0); });
    flat.b = apply_multiplier(x.a, [&](int k) {
        return cx(p_.grav + p_.sigma * std::pow(static_cast<double>(k), 4), 0.0);
    });
    return full - flat;
}

PairField LinearizedSystem::apply_variable_adjoint(size_t half_idx, const PairField& x) const {
    if (slices_[half_idx].flat) {
        PairField z = zero_pair(g_);
        z.a.set_real(x.a.is_real());
        z.b.set_real(x.b.is_real());
        return z;
    }
    if (!adj_built_[half_idx]) {
        adj_[half_idx] = discrete_adjoint(ops_[half_idx], p_);
        adj_built_[half_idx] = 1;
    }
    PairField full = adj_[half_idx](x);
    PairField flat = zero_pair(g_);
    flat.a = apply_multiplier(x.b, [&](int k) {
        if (k == 0) return cx(0.0);
        double s = p_.grav + p_.sigma * std::pow(static_cast<double>(k), 4);
        return cx(s / h0_weight(0, k), 0.0);
    });
    flat.b = apply_multiplier(x.a, [&](int k) {
        return cx(-dno_flat_symbol(k, g_) * h0_weight(0, k), 0.0);
    });
    return full - flat;
}

PairSeries solve_linearized(const LinearizedSystem& sys, const PairField& h0, const PairForcingFn& f) {
    const GridSpec& g = sys.grid();
    Generator gen = forward_generator(g, sys.params());
    StepPlan plan = make_plan(gen, sys.dt());
    auto N = [&](const PairField& x, size_t half_idx) {
        double t = 0.5 * sys.dt() * static_cast<double>(half_idx);
        PairField out = sys.apply_variable(half_idx, x);
        out *= -1.0;
        if (f) out += f(t);
        return out;
    };
    PairSeries series;
    series.t0 = 0.0;
    series.dt = sys.dt();
    PairField h = h0;
    h.a.zero_mean();
    series.samples.push_back(h);
    for (size_t n = 0; n < sys.steps(); ++n) {
        h = etdrk4_step(plan, h, 2 * n, N);
        h.a.zero_mean();
        series.samples.push_back(h);
    }
    return series;
}

PairSeries solve_linearized_backward(const LinearizedSystem& sys, const PairField& hT) {
    const GridSpec& g = sys.grid();
    const size_t M = sys.steps();
    Generator gen = negated(forward_generator(g, sys.params()));
    StepPlan plan = make_plan(gen, sys.dt());
    auto N = [&](const PairField& x, size_t half_idx) {
        // time runs backward: s = half_idx dt/2, t = T - s
        size_t t_idx = 2 * M - half_idx;
        PairField out = sys.apply_variable(t_idx, x);
        return out;
    };
    PairField h = hT;
    h.a.zero_mean();
    std::vector<PairField> rev;
    rev.push_back(h);
    for (size_t n = 0; n < M; ++n) {
        h = etdrk4_step(plan, h, 2 * n, N);
        h.a.zero_mean();
        rev.push_back(h);
    }
    PairSeries series;
    series.t0 = 0.0;
    series.dt = sys.dt();
    series.samples.assign(rev.rbegin(), rev.rend());
    return series;
}

PairSeries solve_adjoint_backward(const LinearizedSystem& sys, const PairField& fT) {
    const GridSpec& g = sys.grid();
    const size_t M = sys.steps();
    Generator gen = adjoint_backward_generator(g, sys.params());
    StepPlan plan = make_plan(gen, sys.dt());
    auto N = [&](const PairField& x, size_t half_idx) {
        size_t t_idx = 2 * M - half_idx;
        PairField out = sys.apply_variable_adjoint(t_idx, x);
        out *= -1.0;
        return out;
    };
    PairField h = fT;
    h.a.zero_mean();
    std::vector<PairField> rev;
    rev.push_back(h);
    for (size_t n = 0; n < M; ++n) {
        h = etdrk4_step(plan, h, 2 * n, N);
        h.a.zero_mean();
        rev.push_back(h);
    }
    PairSeries series;
    series.t0 = 0.0;
    series.dt = sys.dt();
    series.samples.assign(rev.rbegin(), rev.rend());
    return series;
}

double spacetime_h0_pairing(const PairSeries& x, const PairSeries& y) {
    const size_t n = x.samples.size();
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double w = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
        acc += w * h0_inner(x.samples[i], y.samples[i]).real();
    }
    return acc * x.dt;
}

double linearized_energy_constant(const LinearizedSystem& sys, const PairField& h0,
                                  const PairForcingFn& f) {
    PairSeries h = solve_linearized(sys, h0, f);
    double supf = 0.0;
    if (f) {
        for (size_t i = 0; i < h.samples.size(); ++i)
            supf = std::max(supf, h0_norm(f(h.dt * static_cast<double>(i))));
    }
    double denom = h0_norm(h0) + supf;
    if (denom == 0.0) return 0.0;
    return h.sup_h0_norm() / denom;
}

std::string trajectory_to_text(const Trajectory& tr) {
    nlohmann::json hdr;
    hdr["n_modes"] = tr.grid.n_modes;
    hdr["depth"] = tr.grid.infinite_depth() ? nlohmann::json("infinite") : nlohmann::json(tr.grid.depth);
    hdr["grav"] = tr.params.grav;
    hdr["sigma"] = tr.params.sigma;
    hdr["dt"] = format_double(tr.dt);
    hdr["n_samples"] = tr.size();
    std::ostringstream os;
    os << hdr.dump() << "\n";
    for (size_t i = 0; i < tr.size(); ++i) {
        os << "t " << format_double(tr.times[i]) << "\n";
        const auto& e = tr.states[i].eta.raw();
        const auto& p = tr.states[i].psi.raw();
        const auto& fo = tr.forcing[i].raw();
        for (size_t j = 0; j < e.size(); ++j) {
            os << format_double(e[j].real()) << "," << format_double(e[j].imag()) << ","
               << format_double(p[j].real()) << "," << format_double(p[j].imag()) << ","
               << format_double(fo[j].real()) << "," << format_double(fo[j].imag()) << "\n";
        }
    }
    return os.str();
}

Trajectory trajectory_from_text(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("trajectory_from_text: empty input");
    nlohmann::json hdr = nlohmann::json::parse(line);
    double depth = kInfiniteDepth;
    if (!hdr["depth"].is_string()) depth = hdr["depth"].get<double>();
    GridSpec g(hdr["n_modes"].get<int>(), depth);
    Trajectory tr;
    tr.grid = g;
    tr.params.grav = hdr["grav"].get<double>();
    tr.params.sigma = hdr["sigma"].get<double>();
    tr.dt = std::stod(hdr["dt"].get<std::string>());
    size_t n = hdr["n_samples"].get<size_t>();
    for (size_t i = 0; i < n; ++i) {
        std::getline(is, line);
        if (line.rfind("t ", 0) != 0) throw std::invalid_argument("trajectory_from_text: bad sample header");
        tr.times.push_back(std::stod(line.substr(2)));
        StatePair u{SpectralField(g, true), SpectralField(g, true)};
        SpectralField f(g, true);
        for (int j = 0; j < g.n_modes; ++j) {
            std::getline(is, line);
            std::istringstream ls(line);
            double v[6];
            std::string tok;
            for (int q = 0; q < 6; ++q) {
                std::getline(ls, tok, ',');
                v[q] = std::stod(tok);
            }
            u.eta.raw()[static_cast<size_t>(j)] = cx(v[0], v[1]);
            u.psi.raw()[static_cast<size_t>(j)] = cx(v[2], v[3]);
            f.raw()[static_cast<size_t>(j)] = cx(v[4], v[5]);
        }
        tr.states.push_back(u);
        tr.forcing.push_back(f);
    }
    return tr;
}

}  // namespace hydroctrl
