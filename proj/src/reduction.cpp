#include "hydroctrl/reduction.hpp"

#include <cmath>

namespace hydroctrl {

namespace {

double trapz(const std::vector<double>& f, double dt) {
    double acc = 0.0;
    for (size_t i = 0; i + 1 < f.size(); ++i) acc += 0.5 * (f[i] + f[i + 1]);
    return acc * dt;
}

std::vector<double> cumtrapz(const std::vector<double>& f, double dt) {
    std::vector<double> out(f.size(), 0.0);
    for (size_t i = 1; i < f.size(); ++i) out[i] = out[i - 1] + 0.5 * dt * (f[i - 1] + f[i]);
    return out;
}

SpectralField recip(const SpectralField& f) {
    return pointwise_map(f, [](double s) { return 1.0 / s; });
}

// Zero out coefficients at the machine-noise level so exactly-flat data give
// exactly-constant coefficient fields (and identity transforms).
void snap_small(SpectralField& f, double floor_scale = 1e-13) {
    double floor = floor_scale * std::max(1.0, std::abs(f.raw()[0]));
    for (auto& c : f.raw())
        if (std::abs(c) < floor) c = 0.0;
}

void snap_small(std::vector<SpectralField>& fs) {
    for (auto& f : fs) snap_small(f);
}

void snap_small(std::vector<double>& v, double floor = 1e-13) {
    for (auto& x : v)
        if (std::abs(x) < floor) x = 0.0;
}

// Second-order time differences of a field sequence (one-sided at the ends).
std::vector<SpectralField> diff_t(const std::vector<SpectralField>& f, double dt) {
    const size_t n = f.size();
    std::vector<SpectralField> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        SpectralField d = zero_field(f[0].grid());
        if (i == 0)
            d = (-1.5) * f[0] + 2.0 * f[1] + (-0.5) * f[2];
        else if (i + 1 == n)
            d = 1.5 * f[n - 1] + (-2.0) * f[n - 2] + 0.5 * f[n - 3];
        else
            d = 0.5 * (f[i + 1] - f[i - 1]);
        d *= 1.0 / dt;
        out.push_back(d);
    }
    return out;
}

// 4-point Lagrange interpolation of field samples at time t.
SpectralField interp_field(const std::vector<SpectralField>& f, double dt, double t) {
    const long n = static_cast<long>(f.size());
    double s = t / dt;
    long nearest = static_cast<long>(std::llround(s));
    if (nearest >= 0 && nearest < n && std::abs(s - static_cast<double>(nearest)) < 1e-12)
        return f[static_cast<size_t>(nearest)];
    long j = static_cast<long>(std::floor(s)) - 1;
    if (j < 0) j = 0;
    if (j > n - 4) j = n - 4;
    if (n < 4) j = 0;
    long m = std::min<long>(4, n);
    SpectralField acc = zero_field(f[0].grid());
    acc.set_real(f[0].is_real());
    for (long q = 0; q < m; ++q) {
        double w = 1.0;
        for (long r = 0; r < m; ++r) {
            if (r == q) continue;
            w *= (s - static_cast<double>(j + r)) / static_cast<double>(q - r);
        }
        acc += w * f[static_cast<size_t>(j + q)];
    }
    return acc;
}

double interp_scalar(const std::vector<double>& f, double dt, double t) {
    const long n = static_cast<long>(f.size());
    double s = t / dt;
    long nearest = static_cast<long>(std::llround(s));
    if (nearest >= 0 && nearest < n && std::abs(s - static_cast<double>(nearest)) < 1e-12)
        return f[static_cast<size_t>(nearest)];
    long j = static_cast<long>(std::floor(s)) - 1;
    if (j < 0) j = 0;
    if (j > n - 4) j = n - 4;
    if (n < 4) j = 0;
    long m = std::min<long>(4, n);
    double acc = 0.0;
    for (long q = 0; q < m; ++q) {
        double w = 1.0;
        for (long r = 0; r < m; ++r) {
            if (r == q) continue;
            w *= (s - static_cast<double>(j + r)) / static_cast<double>(q - r);
        }
        acc += w * f[static_cast<size_t>(j + q)];
    }
    return acc;
}

SpectralField translate_field(const SpectralField& f, double shift) {
    // h(. - shift) has coefficients c_k e^{-ik shift}; T^{-1} with p uses shift = p.
    SpectralField out = f;
    const int n = f.n();
    for (int i = 0; i < n; ++i) {
        int k = slot_wavenumber(i, n);
        out.raw()[static_cast<size_t>(i)] *= std::polar(1.0, -k * shift);
    }
    return out;
}

}  // namespace

namespace {

// Precomputed trigonometric evaluation matrices for one warp slice:
// out(x_i) = sum_slot c_slot e^{i k(slot) w_i} with w the warped points.
struct WarpSlicePlan {
    std::vector<cx> fwd, inv;  // N x N, row-major over grid points
};

std::vector<cx> eval_matrix(const GridSpec& g, const std::vector<double>& pts) {
    const int n = g.n_modes;
    std::vector<cx> m(static_cast<size_t>(n) * static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (int s = 0; s < n; ++s) {
            int k = slot_wavenumber(s, n);
            m[static_cast<size_t>(i) * n + s] = std::polar(1.0, k * pts[static_cast<size_t>(i)]);
        }
    }
    return m;
}

WarpSlicePlan make_warp_plan(const SpectralField& beta) {
    const GridSpec& g = beta.grid();
    const int n = g.n_modes;
    if (l2_norm(beta) == 0.0) return {};  // identity
    auto xs = grid_points(g);
    std::vector<double> wf(static_cast<size_t>(n)), wi(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double x = xs[static_cast<size_t>(i)];
        wf[static_cast<size_t>(i)] = x + beta.eval(x).real();
        double y = x, xi = x;
        for (int it = 0; it < 100; ++it) {
            double xn = y - beta.eval(xi).real();
            if (std::abs(xn - xi) < 1e-14) {
                xi = xn;
                break;
            }
            xi = xn;
        }
        wi[static_cast<size_t>(i)] = xi;
    }
    return {eval_matrix(g, wf), eval_matrix(g, wi)};
}

SpectralField warp_apply(const SpectralField& f, const std::vector<cx>& m) {
    if (m.empty()) return f;  // identity plan
    const GridSpec& g = f.grid();
    const int n = g.n_modes;
    std::vector<cx> vals(static_cast<size_t>(n), cx(0.0));
    for (int i = 0; i < n; ++i) {
        cx acc(0.0);
        const cx* row = m.data() + static_cast<size_t>(i) * n;
        for (int s = 0; s < n; ++s) acc += row[s] * f.raw()[static_cast<size_t>(s)];
        vals[static_cast<size_t>(i)] = acc;
    }
    return field_from_grid(g, vals, f.is_real());
}

}  // namespace

SampledPair constant_probe(const GridSpec& g, double dt, size_t n, int k) {
    SampledPair u;
    u.dt = dt;
    PairField p{mode_field(g, k, 1.0), mode_field(g, k, 1.0)};
    u.slices.assign(n, p);
    return u;
}

SampledPair time_derivative(const SampledPair& u) {
    const size_t n = u.size();
    const double dt = u.dt;
    SampledPair out;
    out.dt = dt;
    out.slices.reserve(n);
    auto at = [&](size_t i) -> const PairField& { return u.slices[i]; };
    for (size_t i = 0; i < n; ++i) {
        PairField d;
        if (i >= 2 && i + 2 < n) {
            d = (1.0 / (12.0 * dt)) *
                (at(i - 2) + (-8.0) * at(i - 1) + 8.0 * at(i + 1) + (-1.0) * at(i + 2));
        } else if (i == 0) {
            d = (1.0 / dt) * ((-1.5) * at(0) + 2.0 * at(1) + (-0.5) * at(2));
        } else if (i + 1 == n) {
            d = (1.0 / dt) * (1.5 * at(n - 1) + (-2.0) * at(n - 2) + 0.5 * at(n - 3));
        } else {
            d = (1.0 / (2.0 * dt)) * (at(i + 1) + (-1.0) * at(i - 1));
        }
        out.slices.push_back(d);
    }
    return out;
}

SpectralField space_change_apply(const SpectralField& f, const SpectralField& beta,
                                 WarpDirection dir) {
    const GridSpec& g = f.grid();
    const int n = g.n_modes;
    double slope = derivative(beta).linf_grid();
    if (slope > 0.5)
        throw GuardViolation("space change requires |beta_x| <= 1/2, got " + format_double(slope));
    auto xs = grid_points(g);
    std::vector<cx> vals(static_cast<size_t>(n));
    if (dir == WarpDirection::Forward) {
        for (int i = 0; i < n; ++i) {
            double x = xs[static_cast<size_t>(i)];
            double b = beta.eval(x).real();
            vals[static_cast<size_t>(i)] = f.eval(x + b);
        }
    } else {
        for (int i = 0; i < n; ++i) {
            double y = xs[static_cast<size_t>(i)];
            double x = y;
            for (int it = 0; it < 100; ++it) {
                double xn = y - beta.eval(x).real();
                if (std::abs(xn - x) < 1e-14) {
                    x = xn;
                    break;
                }
                x = xn;
            }
            vals[static_cast<size_t>(i)] = f.eval(x);
        }
    }
    return field_from_grid(g, vals, f.is_real());
}

void compute_time_space_change(const Trajectory& traj, const DnoConfig& cfg, CoeffTable& tbl) {
    const size_t n = traj.size();
    const double dt = traj.dt;
    const double T = traj.horizon();
    tbl.grid = traj.grid;
    tbl.params = traj.params;
    tbl.dt = dt;
    tbl.nt = n;

    std::vector<double> f(n);
    std::vector<SpectralField> sq;
    sq.reserve(n);
    double max_slope = 0.0;
    for (size_t i = 0; i < n; ++i) {
        check_slope_guard(traj.states[i].eta, cfg);
        SpectralField ex = derivative(traj.states[i].eta);
        max_slope = std::max(max_slope, ex.linf_grid());
        SpectralField s = pointwise_map(ex, [](double v) { return std::sqrt(1.0 + v * v); });
        sq.push_back(s);
        f[i] = std::pow(s.coeff(0).real(), -2.5);
    }
    double fbar = trapz(f, dt) / T;
    tbl.m = fbar * fbar;

    tbl.alphap.resize(n);
    for (size_t i = 0; i < n; ++i) tbl.alphap[i] = f[i] / fbar - 1.0;
    tbl.alpha = cumtrapz(tbl.alphap, dt);

    // uniform bound (1+||eta_x||)^{-5/2} <= 1+alpha' <= (1+||eta_x||)^{5/2}
    double lo = std::pow(1.0 + max_slope, -2.5), hi = std::pow(1.0 + max_slope, 2.5);
    double margin = 1e300;
    for (size_t i = 0; i < n; ++i) {
        margin = std::min(margin, 1.0 + tbl.alphap[i] - lo);
        margin = std::min(margin, hi - (1.0 + tbl.alphap[i]));
    }
    tbl.uniform_bound_margin = margin;

    tbl.beta.clear();
    tbl.beta.reserve(n);
    double res = 0.0;
    double m15 = std::pow(tbl.m, 0.2);
    for (size_t i = 0; i < n; ++i) {
        double c = m15 * std::pow(1.0 + tbl.alphap[i], 0.4);
        SpectralField integrand = c * sq[i];
        integrand.set_coeff(0, integrand.coeff(0) - 1.0);
        tbl.beta.push_back(antiderivative(integrand));
        // residual of the pointwise constraint m^{1/5}(1+a')^{2/5} E4^{-1/5} = 1+beta_x
        SpectralField chk = integrand - derivative(tbl.beta.back());
        res = std::max(res, chk.linf_grid());
    }
    tbl.alphabeta_residual = res;
    snap_small(tbl.alphap);
    snap_small(tbl.alpha);
    snap_small(tbl.beta);
    tbl.beta_t = diff_t(tbl.beta, dt);
    snap_small(tbl.beta_t);

    // map tau -> t by Newton on tau = t + alpha(t)
    tbl.t_of_tau.resize(n);
    for (size_t i = 0; i < n; ++i) {
        double tau = dt * static_cast<double>(i);
        double t = tau;
        for (int it = 0; it < 50; ++it) {
            double val = t + interp_scalar(tbl.alpha, dt, t) - tau;
            double der = 1.0 + interp_scalar(tbl.alphap, dt, t);
            double tn = t - val / der;
            tn = std::min(std::max(tn, 0.0), T);
            if (std::abs(tn - t) < 1e-14) {
                t = tn;
                break;
            }
            t = tn;
        }
        tbl.t_of_tau[i] = t;
    }
    tbl.a9.resize(n);
    for (size_t i = 0; i < n; ++i) tbl.a9[i] = 1.0 + interp_scalar(tbl.alphap, dt, tbl.t_of_tau[i]);
}

CoeffTable build_coeff_table(const Trajectory& traj, const DnoConfig& cfg) {
    CoeffTable tbl;
    compute_time_space_change(traj, cfg, tbl);
    const size_t n = tbl.nt;
    const double dt = tbl.dt;
    const GridSpec& g = tbl.grid;
    const PhysParams& p = tbl.params;

    auto slices = prepare_slices(traj.times, traj.states, p, cfg);

    auto binv = [&](const SpectralField& w, size_t i) {
        return space_change_apply(w, tbl.beta[i], WarpDirection::Inverse);
    };

    for (size_t i = 0; i < n; ++i) {
        const TimeSlice& s = slices[i];
        SpectralField bx = derivative(tbl.beta[i]);
        SpectralField one_bx = bx;
        one_bx.set_coeff(0, one_bx.coeff(0) + 1.0);
        SpectralField bxx = derivative(tbl.beta[i], 2);
        SpectralField b3 = derivative(tbl.beta[i], 3);
        SpectralField b4 = derivative(tbl.beta[i], 4);
        const ElasticCoeffs& E = s.ecoeffs;

        tbl.a1.push_back(binv(tbl.beta_t[i] + product(s.V, one_bx), i));
        tbl.a2.push_back(binv(derivative(s.V), i));
        tbl.a3.push_back(binv(one_bx, i));
        SpectralField ob2 = product(one_bx, one_bx);
        SpectralField ob3 = product(ob2, one_bx);
        SpectralField ob4 = product(ob2, ob2);
        tbl.a4.push_back(binv(product(E.E4, ob4), i));
        tbl.a5.push_back(binv(6.0 * product(E.E4, product(ob2, bxx)) + product(E.E3, ob3), i));
        tbl.a6.push_back(binv(product(E.E4, 4.0 * product(one_bx, b3) + 3.0 * product(bxx, bxx)) +
                                  3.0 * product(E.E3, product(one_bx, bxx)) + product(E.E2, ob2),
                              i));
        tbl.a7.push_back(binv(product(E.E4, b4) + product(E.E3, b3) + product(E.E2, bxx) +
                                  product(E.E1, one_bx),
                              i));
        tbl.a8.push_back(binv(s.a_coeff, i));
    }

    snap_small(tbl.a1);
    snap_small(tbl.a2);
    snap_small(tbl.a3);
    snap_small(tbl.a4);
    snap_small(tbl.a5);
    snap_small(tbl.a6);
    snap_small(tbl.a7);
    snap_small(tbl.a8);

    // transport to the tau grid
    auto lift = [&](const std::vector<SpectralField>& a) {
        std::vector<SpectralField> out;
        out.reserve(n);
        for (size_t i = 0; i < n; ++i) out.push_back(interp_field(a, dt, tbl.t_of_tau[i]));
        return out;
    };
    tbl.a10 = lift(tbl.a1);
    tbl.a11 = lift(tbl.a2);
    tbl.a12 = lift(tbl.a3);
    tbl.a13 = lift(tbl.a4);
    tbl.a14 = lift(tbl.a5);
    tbl.a15 = lift(tbl.a6);
    tbl.a16 = lift(tbl.a7);
    tbl.a17 = lift(tbl.a8);

    const double rms = std::sqrt(tbl.m * p.sigma);
    std::vector<SpectralField> r_field;  // a9/a12
    r_field.reserve(n);
    for (size_t i = 0; i < n; ++i) r_field.push_back(tbl.a9[i] * recip(tbl.a12[i]));
    auto r_tau = diff_t(r_field, dt);

    for (size_t i = 0; i < n; ++i) {
        double inv_a9 = 1.0 / tbl.a9[i];
        tbl.a18.push_back(inv_a9 * tbl.a10[i]);
        tbl.a19.push_back(inv_a9 * tbl.a11[i]);
        tbl.a20.push_back(product(derivative(tbl.a12[i]), recip(tbl.a12[i])));
        SpectralField i13 = recip(tbl.a13[i]);
        tbl.a21.push_back(product(tbl.a14[i], i13));
        tbl.a22.push_back(product(tbl.a15[i], i13));
        tbl.a23.push_back(product(tbl.a16[i], i13));
        tbl.a24.push_back(product(tbl.a17[i], i13));
        SpectralField a25 = tbl.m * (tbl.a9[i] * product(i13, r_tau[i]) +
                                     product(product(tbl.a10[i], i13), derivative(r_field[i])));
        tbl.a25.push_back(a25);
        tbl.a26.push_back(rms * (1.5 * derivative(tbl.a21[i]) - tbl.a22[i]));
        tbl.a27.push_back(a25 - 1.5 * derivative(tbl.a18[i]));
    }

    snap_small(tbl.a18);
    snap_small(tbl.a19);
    snap_small(tbl.a20);
    snap_small(tbl.a21);
    snap_small(tbl.a22);
    snap_small(tbl.a23);
    snap_small(tbl.a24);
    snap_small(tbl.a25);
    snap_small(tbl.a26);
    snap_small(tbl.a27);
    solve_M_coefficients(tbl);
    snap_small(tbl.a28);
    snap_small(tbl.a30);
    snap_small(tbl.ell1);
    snap_small(tbl.v1);
    snap_small(tbl.v2);
    build_translation(tbl);
    snap_small(tbl.a31);
    snap_small(tbl.a32);
    snap_small(tbl.a33);
    snap_small(tbl.pm1_plus);
    snap_small(tbl.pm1_minus);
    snap_small(tbl.pm2_pos);
    snap_small(tbl.pm2_neg);
    return tbl;
}

void solve_M_coefficients(CoeffTable& tbl) {
    const size_t n = tbl.nt;
    const double rms = std::sqrt(tbl.m * tbl.params.sigma);
    tbl.a28.clear();
    tbl.a29.clear();
    tbl.a30.clear();
    tbl.ell1.clear();
    tbl.v1.clear();
    tbl.v2.clear();
    for (double& r : tbl.eq_residual) r = 0.0;
    for (size_t i = 0; i < n; ++i) {
        tbl.a28.push_back(0.5 * (tbl.a19[i] + tbl.a27[i]));
        tbl.ell1.push_back((0.5 / rms) * (tbl.a19[i] - tbl.a27[i]));
        tbl.a29.push_back(zero_field(tbl.grid));
        tbl.v1.push_back(tbl.a20[i]);
        SpectralField d20 = derivative(tbl.a20[i]);
        SpectralField sq20 = product(tbl.a20[i], tbl.a20[i]);
        tbl.v2.push_back((0.5 / rms) * tbl.a26[i] + 1.25 * d20 + (-0.5) * sq20);
        tbl.a30.push_back(0.5 * tbl.a26[i] + rms * (0.5 * sq20 + (-1.25) * d20));

        // substitute back
        SpectralField e1 = tbl.a19[i] - tbl.a28[i] - rms * tbl.ell1[i];
        SpectralField e2 = rms * (tbl.a20[i] - tbl.v1[i]) + tbl.a29[i];
        SpectralField e3 = rms * (2.5 * derivative(tbl.v1[i]) - tbl.v2[i] -
                                  product(tbl.a20[i], tbl.v1[i])) +
                           tbl.a30[i];
        SpectralField e4 = tbl.a30[i] - product(tbl.a29[i], tbl.v1[i]) + rms * tbl.v2[i] - tbl.a26[i];
        SpectralField e5 = tbl.a27[i] - tbl.a28[i] + rms * tbl.ell1[i];
        tbl.eq_residual[0] = std::max(tbl.eq_residual[0], l2_norm(e1));
        tbl.eq_residual[1] = std::max(tbl.eq_residual[1], l2_norm(e2));
        tbl.eq_residual[2] = std::max(tbl.eq_residual[2], l2_norm(e3));
        tbl.eq_residual[3] = std::max(tbl.eq_residual[3], l2_norm(e4));
        tbl.eq_residual[4] = std::max(tbl.eq_residual[4], l2_norm(e5));
    }
}

void build_translation(CoeffTable& tbl) {
    const size_t n = tbl.nt;
    std::vector<double> avg18(n);
    for (size_t i = 0; i < n; ++i) avg18[i] = tbl.a18[i].coeff(0).real();
    std::vector<double> neg(n);
    for (size_t i = 0; i < n; ++i) neg[i] = -avg18[i];
    tbl.p_shift = cumtrapz(neg, tbl.dt);
    tbl.p_prime = neg;
    snap_small(tbl.p_shift);
    snap_small(tbl.p_prime);

    tbl.a31.clear();
    tbl.a32.clear();
    tbl.a33.clear();
    tbl.a31_mean_max = 0.0;
    for (size_t i = 0; i < n; ++i) {
        SpectralField a31 = translate_field(tbl.a18[i], tbl.p_shift[i]);
        a31.set_coeff(0, a31.coeff(0) + tbl.p_prime[i]);
        tbl.a31_mean_max = std::max(tbl.a31_mean_max, std::abs(a31.coeff(0)));
        tbl.a31.push_back(a31);
        tbl.a32.push_back(translate_field(tbl.a28[i], tbl.p_shift[i]));
        tbl.a33.push_back(translate_field(tbl.a30[i], tbl.p_shift[i]));
    }

    // gamma0 from the displayed integrand; the sign(j)-weighted part is a
    // total derivative and must integrate to zero, leaving a real phase.
    const double c1 = 2.0 / (5.0 * std::sqrt(tbl.m * tbl.params.sigma));
    std::vector<double> int1(n), int2(n);
    for (size_t i = 0; i < n; ++i) {
        int1[i] = l2_inner(tbl.a31[i], antiderivative(tbl.a31[i])).real();
        int2[i] = tbl.a33[i].coeff(0).real();
    }
    auto re = cumtrapz(int2, tbl.dt);
    auto im = cumtrapz(int1, tbl.dt);
    tbl.gamma0.resize(n);
    tbl.gamma0_prime.resize(n);
    tbl.gamma0_imag_max = 0.0;
    for (size_t i = 0; i < n; ++i) {
        tbl.gamma0[i] = cx(-re[i], c1 * im[i]);
        tbl.gamma0_imag_max = std::max(tbl.gamma0_imag_max, std::abs(tbl.gamma0[i].imag()));
        tbl.gamma0_prime[i] = -int2[i];
    }

    tbl.pm1_plus.clear();
    tbl.pm1_minus.clear();
    tbl.pm2_pos.clear();
    tbl.pm2_neg.clear();
    for (size_t i = 0; i < n; ++i) {
        SpectralField prim = antiderivative(tbl.a31[i]);
        SpectralField pm1 = cx(0.0, -c1) * prim;
        tbl.pm1_plus.push_back(pm1);
        tbl.pm1_minus.push_back(cx(0.0, c1) * prim);
        SpectralField core = c1 * product(tbl.a31[i], prim);
        SpectralField osc = tbl.a33[i];
        osc.set_coeff(0, osc.coeff(0) + tbl.gamma0_prime[i]);  // gamma0' + a33, mean zero
        SpectralField plus = (-c1) * antiderivative(core + cx(0.0, 1.0) * osc);
        SpectralField minus = (-c1) * antiderivative(core + cx(0.0, -1.0) * osc);
        tbl.pm2_pos.push_back(plus);
        tbl.pm2_neg.push_back(minus);
    }
}

FioOperator::FioOperator(const CoeffTable* tbl, FioBranch branch)
    : tbl_(tbl), sign_(branch == FioBranch::Plus ? 1.0 : -1.0) {
    double nrm = 0.0;
    for (size_t i = 0; i < tbl_->nt; ++i) {
        double c = (sign_ > 0 ? tbl_->pm1_plus[i] : tbl_->pm1_minus[i]).linf_grid() +
                   std::max(tbl_->pm2_pos[i].linf_grid(), tbl_->pm2_neg[i].linf_grid());
        nrm = std::max(nrm, c);
    }
    correction_norm_ = nrm;
    if (nrm >= 0.5)
        throw std::runtime_error("FIO amplitude correction too large for a Neumann inverse");
}

SpectralField FioOperator::apply(const SpectralField& h, size_t i) const {
    double gamma = tbl_->gamma0[i].real();
    SpectralField ph = apply_multiplier(h, [&](int k) {
        if (k == 0) return cx(1.0, 0.0);
        return std::polar(1.0, sign_ * std::sqrt(std::abs(static_cast<double>(k))) * gamma);
    });
    const SpectralField& pm1 = sign_ > 0 ? tbl_->pm1_plus[i] : tbl_->pm1_minus[i];
    SpectralField half = apply_multiplier(ph, [](int k) {
        if (k == 0) return cx(0.0);
        return cx(1.0 / std::sqrt(std::abs(static_cast<double>(k))), 0.0);
    });
    SpectralField pos = apply_multiplier(ph, [](int k) {
        if (k <= 0) return cx(0.0);
        return cx(1.0 / static_cast<double>(k), 0.0);
    });
    SpectralField neg = apply_multiplier(ph, [](int k) {
        if (k >= 0) return cx(0.0);
        return cx(-1.0 / static_cast<double>(k), 0.0);
    });
    SpectralField out = ph + product(pm1, half) + product(tbl_->pm2_pos[i], pos) +
                        product(tbl_->pm2_neg[i], neg);
    out.set_real(false);
    return out;
}

SpectralField FioOperator::apply_inverse(const SpectralField& h, size_t i) const {
    double gamma = tbl_->gamma0[i].real();
    auto phase_inv = [&](const SpectralField& f) {
        return apply_multiplier(f, [&](int k) {
            if (k == 0) return cx(1.0, 0.0);
            return std::polar(1.0, -sign_ * std::sqrt(std::abs(static_cast<double>(k))) * gamma);
        });
    };
    auto correction = [&](const SpectralField& u) {
        // (A - A0) u, with A0 the pure-phase part
        double gam = gamma;
        SpectralField ph = apply_multiplier(u, [&](int k) {
            if (k == 0) return cx(1.0, 0.0);
            return std::polar(1.0, sign_ * std::sqrt(std::abs(static_cast<double>(k))) * gam);
        });
        const SpectralField& pm1 = sign_ > 0 ? tbl_->pm1_plus[i] : tbl_->pm1_minus[i];
        SpectralField half = apply_multiplier(ph, [](int k) {
            if (k == 0) return cx(0.0);
            return cx(1.0 / std::sqrt(std::abs(static_cast<double>(k))), 0.0);
        });
        SpectralField pos = apply_multiplier(ph, [](int k) {
            if (k <= 0) return cx(0.0);
            return cx(1.0 / static_cast<double>(k), 0.0);
        });
        SpectralField neg = apply_multiplier(ph, [](int k) {
            if (k >= 0) return cx(0.0);
            return cx(-1.0 / static_cast<double>(k), 0.0);
        });
        return product(pm1, half) + product(tbl_->pm2_pos[i], pos) + product(tbl_->pm2_neg[i], neg);
    };
    // solve (A0 + C) u = h by u <- A0^{-1}(h - C u)
    SpectralField u = phase_inv(h);
    for (int it = 0; it < 60; ++it) {
        SpectralField next = phase_inv(h - correction(u));
        double delta = l2_norm(next - u);
        u = next;
        if (delta < 1e-13 * std::max(1.0, l2_norm(h))) break;
    }
    u.set_real(false);
    return u;
}

Pipeline assemble_stage_operators(const Trajectory& traj, const DnoConfig& cfg) {
    Pipeline pipe;
    pipe.grid = traj.grid;
    pipe.params = traj.params;
    pipe.dt = traj.dt;
    pipe.nt = traj.size();
    pipe.table = std::make_shared<CoeffTable>(build_coeff_table(traj, cfg));
    auto tblp = pipe.table;
    const GridSpec g = traj.grid;
    const PhysParams p = traj.params;
    const double m = tblp->m;
    const double rms = std::sqrt(m * p.sigma);
    const size_t nt = pipe.nt;
    const double dt = pipe.dt;

    auto slices = std::make_shared<std::vector<TimeSlice>>(
        prepare_slices(traj.times, traj.states, p, cfg));
    auto l0ops = std::make_shared<std::vector<LinearOperatorSlice>>(assemble_L0(*slices, p, cfg));

    pipe.base = [l0ops, dt](const SampledPair& u) {
        SampledPair du = time_derivative(u);
        SampledPair out;
        out.dt = u.dt;
        out.slices.reserve(u.size());
        for (size_t i = 0; i < u.size(); ++i)
            out.slices.push_back(du.slices[i] + (*l0ops)[i](u.slices[i]));
        return out;
    };

    auto per_slice = [](std::function<PairField(const PairField&, size_t)> f) {
        return [f](const SampledPair& u) {
            SampledPair out;
            out.dt = u.dt;
            out.slices.reserve(u.size());
            for (size_t i = 0; i < u.size(); ++i) out.slices.push_back(f(u.slices[i], i));
            return out;
        };
    };

    // Stage 1: space change B
    {
        Stage st;
        st.name = "B-space-change";
        auto plans = std::make_shared<std::vector<WarpSlicePlan>>();
        plans->reserve(nt);
        for (size_t i = 0; i < nt; ++i) {
            double slope = derivative(tblp->beta[i]).linf_grid();
            if (slope > 0.5) throw GuardViolation("space change requires |beta_x| <= 1/2");
            plans->push_back(make_warp_plan(tblp->beta[i]));
        }
        st.right = per_slice([plans](const PairField& x, size_t i) {
            return PairField{warp_apply(x.a, (*plans)[i].fwd), warp_apply(x.b, (*plans)[i].fwd)};
        });
        st.left = per_slice([plans](const PairField& x, size_t i) {
            return PairField{warp_apply(x.a, (*plans)[i].inv), warp_apply(x.b, (*plans)[i].inv)};
        });
        st.right_inv = st.left;
        st.left_inv = st.right;
        st.skeleton = [tblp, g, dt](const SampledPair& u) {
            SampledPair du = time_derivative(u);
            SampledPair out;
            out.dt = u.dt;
            for (size_t i = 0; i < u.size(); ++i) {
                const PairField& x = u.slices[i];
                PairField y;
                SpectralField dx = derivative(x.a);
                y.a = du.slices[i].a + product(tblp->a1[i], dx) + product(tblp->a2[i], x.a) -
                      product(tblp->a3[i],
                              apply_multiplier(x.b, [&](int k) { return cx(dno_flat_symbol(k, g), 0.0); }));
                double sg = tblp->params.sigma;
                y.b = du.slices[i].b + product(tblp->a1[i], derivative(x.b)) +
                      sg * (product(tblp->a4[i], derivative(x.a, 4)) +
                            product(tblp->a5[i], derivative(x.a, 3)) +
                            product(tblp->a6[i], derivative(x.a, 2)) +
                            product(tblp->a7[i], derivative(x.a, 1))) +
                      product(tblp->a8[i], x.a);
                out.slices.push_back(y);
            }
            return out;
        };
        st.declared_order = 2.5;
        pipe.stages.push_back(st);
    }

    // Stage 2: time reparametrization A
    {
        Stage st;
        st.name = "A-time-reparam";
        double T = dt * static_cast<double>(nt - 1);
        auto resample = [tblp, dt, nt, T](const SampledPair& u, bool forward) {
            // forward: (A h)(t) = h(t + alpha(t)); inverse: (A^{-1} h)(tau) = h(t(tau))
            SampledPair out;
            out.dt = u.dt;
            out.slices.reserve(nt);
            std::vector<SpectralField> as, bs;
            as.reserve(nt);
            bs.reserve(nt);
            for (const auto& s : u.slices) {
                as.push_back(s.a);
                bs.push_back(s.b);
            }
            for (size_t i = 0; i < nt; ++i) {
                double t = dt * static_cast<double>(i);
                double target = forward ? std::min(std::max(t + interp_scalar(tblp->alpha, dt, t), 0.0), T)
                                        : tblp->t_of_tau[i];
                out.slices.push_back(
                    PairField{interp_field(as, dt, target), interp_field(bs, dt, target)});
            }
            return out;
        };
        st.right = [resample](const SampledPair& u) { return resample(u, true); };
        st.left = [resample](const SampledPair& u) { return resample(u, false); };
        st.right_inv = st.left;
        st.left_inv = st.right;
        st.skeleton = [tblp, g](const SampledPair& u) {
            SampledPair du = time_derivative(u);
            SampledPair out;
            out.dt = u.dt;
            for (size_t i = 0; i < u.size(); ++i) {
                const PairField& x = u.slices[i];
                PairField y;
                y.a = tblp->a9[i] * du.slices[i].a + product(tblp->a10[i], derivative(x.a)) +
                      product(tblp->a11[i], x.a) -
                      product(tblp->a12[i],
                              apply_multiplier(x.b, [&](int k) { return cx(dno_flat_symbol(k, g), 0.0); }));
                double sg = tblp->params.sigma;
                y.b = tblp->a9[i] * du.slices[i].b + product(tblp->a10[i], derivative(x.b)) +
                      sg * (product(tblp->a13[i], derivative(x.a, 4)) +
                            product(tblp->a14[i], derivative(x.a, 3)) +
                            product(tblp->a15[i], derivative(x.a, 2)) +
                            product(tblp->a16[i], derivative(x.a, 1))) +
                      product(tblp->a17[i], x.a);
                out.slices.push_back(y);
            }
            return out;
        };
        st.declared_order = 2.5;
        pipe.stages.push_back(st);
    }

    // Stage 3: diagonal normalizations P^{-1} . Q
    {
        Stage st;
        st.name = "PQ-normalization";
        st.right = per_slice([tblp](const PairField& x, size_t i) {  // Q = diag(1, a9/a12)
            return PairField{x.a, tblp->a9[i] * product(recip(tblp->a12[i]), x.b)};
        });
        st.left = per_slice([tblp, m](const PairField& x, size_t i) {  // P^{-1} = diag(1/a9, m/a13)
            return PairField{(1.0 / tblp->a9[i]) * x.a, m * product(recip(tblp->a13[i]), x.b)};
        });
        st.right_inv = per_slice([tblp](const PairField& x, size_t i) {
            return PairField{x.a, (1.0 / tblp->a9[i]) * product(tblp->a12[i], x.b)};
        });
        st.left_inv = per_slice([tblp, m](const PairField& x, size_t i) {  // P
            return PairField{tblp->a9[i] * x.a, (1.0 / m) * product(tblp->a13[i], x.b)};
        });
        st.skeleton = [tblp, g, m](const SampledPair& u) {
            SampledPair du = time_derivative(u);
            SampledPair out;
            out.dt = u.dt;
            double sg = tblp->params.sigma;
            for (size_t i = 0; i < u.size(); ++i) {
                const PairField& x = u.slices[i];
                PairField y;
                y.a = du.slices[i].a + product(tblp->a18[i], derivative(x.a)) +
                      product(tblp->a19[i], x.a) -
                      apply_multiplier(x.b, [&](int k) { return cx(dno_flat_symbol(k, g), 0.0); }) +
                      product(tblp->a20[i], hilbert(x.b));
                y.b = du.slices[i].b + product(tblp->a18[i], derivative(x.b)) +
                      product(tblp->a25[i], x.b) + sg * m * derivative(x.a, 4) +
                      sg * m * (product(tblp->a21[i], derivative(x.a, 3)) +
                                product(tblp->a22[i], derivative(x.a, 2)) +
                                product(tblp->a23[i], derivative(x.a, 1))) +
                      m * product(tblp->a24[i], x.a);
                out.slices.push_back(y);
            }
            return out;
        };
        st.declared_order = 1.5;
        pipe.stages.push_back(st);
    }

    const PhysParams pp = p;
    auto tau_mult = [g, pp, m](const SpectralField& f) {
        return apply_multiplier(f, [&](int k) { return cx(tau_symbol(k, m, pp.grav, pp.sigma), 0.0); });
    };
    auto lam_mult = [g, pp](const SpectralField& f, double power) {
        return apply_multiplier(f, [&](int k) {
            return cx(std::pow(lambda_symbol(k, pp.grav, pp.sigma), power), 0.0);
        });
    };

    // Stage 4: symmetrization S = diag(1, sqrt(m) Lambda)
    {
        Stage st;
        st.name = "S-symmetrization";
        double sm = std::sqrt(m);
        st.right = per_slice([lam_mult, sm](const PairField& x, size_t) {
            return PairField{x.a, sm * lam_mult(x.b, 1.0)};
        });
        st.left = per_slice([lam_mult, sm](const PairField& x, size_t) {
            return PairField{x.a, (1.0 / sm) * lam_mult(x.b, -1.0)};
        });
        st.right_inv = st.left;
        st.left_inv = st.right;
        st.skeleton = [tblp, g, m, rms, tau_mult, pp](const SampledPair& u) {
            SampledPair du = time_derivative(u);
            SampledPair out;
            out.dt = u.dt;
            double sm = std::sqrt(m);
            for (size_t i = 0; i < u.size(); ++i) {
                const PairField& x = u.slices[i];
                PairField y;
                // H Lambda as one exact multiplier
                SpectralField hl = apply_multiplier(x.b, [&](int k) {
                    if (k == 0) return cx(0.0);
                    double lam = lambda_symbol(k, pp.grav, pp.sigma);
                    return cx(0.0, k > 0 ? -lam : lam);
                });
                SpectralField h32 = apply_multiplier(x.a, [&](int k) {
                    if (k == 0) return cx(0.0);
                    double v = std::pow(std::abs(static_cast<double>(k)), 1.5);
                    return cx(0.0, k > 0 ? -v : v);
                });
                y.a = du.slices[i].a + product(tblp->a18[i], derivative(x.a)) +
                      product(tblp->a19[i], x.a) - tau_mult(x.b) + sm * product(tblp->a20[i], hl);
                y.b = du.slices[i].b + product(tblp->a18[i], derivative(x.b)) +
                      product(tblp->a27[i], x.b) + tau_mult(x.a) + rms * product(tblp->a21[i], h32) +
                      product(tblp->a26[i], abs_derivative_pow(x.a, 0.5));
                out.slices.push_back(y);
            }
            return out;
        };
        st.declared_order = 0.5;
        pipe.stages.push_back(st);
    }

    // Stage 5: lower-order symmetrization M
    {
        Stage st;
        st.name = "M-lower-order";
        auto mfwd = [tblp](const PairField& x, size_t i) {
            SpectralField ell = product(tblp->ell1[i], abs_derivative_pow(x.b, -2.5));
            SpectralField v = x.b + product(tblp->v1[i], hilbert(abs_derivative_pow(x.b, -1.0))) +
                              product(tblp->v2[i], abs_derivative_pow(x.b, -2.0));
            return PairField{x.a + ell, v};
        };
        auto minv = [mfwd](const PairField& z, size_t i) {
            // Neumann series for (I + M_R)^{-1}
            PairField u = z;
            for (int it = 0; it < 60; ++it) {
                PairField mu = mfwd(u, i);
                PairField resid = mu - u;  // M_R u
                PairField next = z - resid;
                double delta = l2_pair_norm(next - u);
                u = next;
                if (delta < 1e-14 * std::max(1.0, l2_pair_norm(z))) break;
            }
            return u;
        };
        st.right = per_slice(mfwd);
        st.left = per_slice(minv);
        st.right_inv = st.left;
        st.left_inv = st.right;
        st.skeleton = [tblp, g, rms, tau_mult](const SampledPair& u) {
            SampledPair du = time_derivative(u);
            SampledPair out;
            out.dt = u.dt;
            auto c5 = [&](const SpectralField& w, size_t i) {
                return tau_mult(w) + product(tblp->a30[i], abs_derivative_pow(w, 0.5));
            };
            for (size_t i = 0; i < u.size(); ++i) {
                const PairField& x = u.slices[i];
                auto a5row = [&](const SpectralField& w, const SpectralField& dw) {
                    return dw + product(tblp->a18[i], derivative(w)) + product(tblp->a28[i], w);
                };
                PairField y;
                y.a = a5row(x.a, du.slices[i].a) - c5(x.b, i);
                y.b = c5(x.a, i) + a5row(x.b, du.slices[i].b);
                out.slices.push_back(y);
            }
            return out;
        };
        st.declared_order = 0.0;
        pipe.stages.push_back(st);
    }

    // Stage 6: spatial translation T
    {
        Stage st;
        st.name = "T-translation";
        st.right = per_slice([tblp](const PairField& x, size_t i) {  // T h(y) = h(y + p)
            return PairField{translate_field(x.a, -tblp->p_shift[i]),
                             translate_field(x.b, -tblp->p_shift[i])};
        });
        st.left = per_slice([tblp](const PairField& x, size_t i) {
            return PairField{translate_field(x.a, tblp->p_shift[i]),
                             translate_field(x.b, tblp->p_shift[i])};
        });
        st.right_inv = st.left;
        st.left_inv = st.right;
        st.skeleton = [tblp, g, tau_mult](const SampledPair& u) {
            SampledPair du = time_derivative(u);
            SampledPair out;
            out.dt = u.dt;
            auto c6 = [&](const SpectralField& w, size_t i) {
                return tau_mult(w) + product(tblp->a33[i], abs_derivative_pow(w, 0.5));
            };
            for (size_t i = 0; i < u.size(); ++i) {
                const PairField& x = u.slices[i];
                auto arow = [&](const SpectralField& w, const SpectralField& dw) {
                    return dw + product(tblp->a31[i], derivative(w)) + product(tblp->a32[i], w);
                };
                PairField y;
                y.a = arow(x.a, du.slices[i].a) - c6(x.b, i);
                y.b = c6(x.a, i) + arow(x.b, du.slices[i].b);
                out.slices.push_back(y);
            }
            return out;
        };
        st.declared_order = 0.0;
        pipe.stages.push_back(st);
    }

    // Stage 7: constant unitary O
    {
        Stage st;
        st.name = "O-diagonalization";
        double is2 = 1.0 / std::sqrt(2.0);
        st.right = per_slice([is2](const PairField& x, size_t) {
            PairField y;
            y.a = is2 * (x.a + x.b);
            y.b = cx(0.0, is2) * (x.a - x.b);
            return y;
        });
        st.left = per_slice([is2](const PairField& x, size_t) {
            PairField y;
            y.a = is2 * (x.a + cx(0.0, -1.0) * x.b);
            y.b = is2 * (x.a + cx(0.0, 1.0) * x.b);
            return y;
        });
        st.right_inv = st.left;
        st.left_inv = st.right;
        st.skeleton = [tblp, g, tau_mult](const SampledPair& u) {
            SampledPair du = time_derivative(u);
            SampledPair out;
            out.dt = u.dt;
            auto c6 = [&](const SpectralField& w, size_t i) {
                return tau_mult(w) + product(tblp->a33[i], abs_derivative_pow(w, 0.5));
            };
            for (size_t i = 0; i < u.size(); ++i) {
                const PairField& x = u.slices[i];
                auto arow = [&](const SpectralField& w, const SpectralField& dw) {
                    return dw + product(tblp->a31[i], derivative(w)) + product(tblp->a32[i], w);
                };
                PairField y;
                y.a = arow(x.a, du.slices[i].a) + cx(0.0, -1.0) * c6(x.a, i);
                y.b = arow(x.b, du.slices[i].b) + cx(0.0, 1.0) * c6(x.b, i);
                out.slices.push_back(y);
            }
            return out;
        };
        st.declared_order = 0.0;
        pipe.stages.push_back(st);
    }

    // Stage 8: Fourier integral operators U = diag(A_minus, A_plus)
    {
        Stage st;
        st.name = "U-fio";
        auto fminus = std::make_shared<FioOperator>(tblp.get(), FioBranch::Minus);
        auto fplus = std::make_shared<FioOperator>(tblp.get(), FioBranch::Plus);
        st.right = per_slice([fminus, fplus](const PairField& x, size_t i) {
            return PairField{fminus->apply(x.a, i), fplus->apply(x.b, i)};
        });
        st.left = per_slice([fminus, fplus](const PairField& x, size_t i) {
            return PairField{fminus->apply_inverse(x.a, i), fplus->apply_inverse(x.b, i)};
        });
        st.right_inv = st.left;
        st.left_inv = st.right;
        st.skeleton = [tau_mult](const SampledPair& u) {
            SampledPair du = time_derivative(u);
            SampledPair out;
            out.dt = u.dt;
            for (size_t i = 0; i < u.size(); ++i) {
                const PairField& x = u.slices[i];
                PairField y;
                y.a = du.slices[i].a + cx(0.0, -1.0) * tau_mult(x.a);
                y.b = du.slices[i].b + cx(0.0, 1.0) * tau_mult(x.b);
                out.slices.push_back(y);
            }
            return out;
        };
        st.declared_order = 0.0;
        pipe.stages.push_back(st);
    }

    return pipe;
}

std::function<SampledPair(const SampledPair&)> Pipeline::full_operator(size_t k) const {
    if (k == 0) return base;
    auto prev = full_operator(k - 1);
    const Stage& st = stages[k - 1];
    auto right = st.right;
    auto left = st.left;
    return [prev, right, left](const SampledPair& u) { return left(prev(right(u))); };
}

ResidualReport conjugation_residual(const Pipeline& pipe, size_t stage_idx,
                                    const std::vector<int>& probe_ks) {
    if (stage_idx < 1 || stage_idx > pipe.stages.size())
        throw std::invalid_argument("conjugation_residual: stage index out of range");
    ResidualReport rep;
    rep.stage = pipe.stages[stage_idx - 1].name;
    rep.declared_order = pipe.stages[stage_idx - 1].declared_order;
    auto conj = pipe.full_operator(stage_idx);
    auto skel = pipe.stages[stage_idx - 1].skeleton;
    const size_t mid = pipe.nt / 2;
    for (int k : probe_ks) {
        SampledPair probe = constant_probe(pipe.grid, pipe.dt, pipe.nt, k);
        SampledPair lhs = conj(probe);
        SampledPair rhs = skel(probe);
        double num = l2_pair_norm(lhs.slices[mid] - rhs.slices[mid]);
        double den = l2_pair_norm(probe.slices[mid]);
        rep.probe_k.push_back(k);
        rep.residual.push_back(num / den);
    }
    // least-squares slope of log residual vs log k
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    size_t n = rep.probe_k.size();
    for (size_t i = 0; i < n; ++i) {
        double x = std::log(static_cast<double>(rep.probe_k[i]));
        double y = std::log(std::max(rep.residual[i], 1e-300));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    double denom = static_cast<double>(n) * sxx - sx * sx;
    rep.fitted_slope = denom != 0.0 ? (static_cast<double>(n) * sxy - sx * sy) / denom : 0.0;
    return rep;
}

}  // namespace hydroctrl
