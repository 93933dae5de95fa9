#include "hydroctrl/model.hpp"

#include <cmath>

namespace hydroctrl {

namespace {

// (1+eta_x^2)^p evaluated pointwise on the padded grid.
SpectralField power_of_one_plus_sq(const SpectralField& eta_x, double p) {
    return pointwise_map(eta_x, [p](double s) { return std::exp(p * std::log1p(s * s)); });
}

// (1+eta_x^2)^p - 1, stable for small slopes.
SpectralField powm1_of_one_plus_sq(const SpectralField& eta_x, double p) {
    return pointwise_map(eta_x, [p](double s) { return std::expm1(p * std::log1p(s * s)); });
}

}  // namespace

SpectralField elastic_force(const SpectralField& eta, const PhysParams& p, const DnoConfig& cfg) {
    p.validate();
    check_slope_guard(eta, cfg);
    SpectralField ex = derivative(eta);
    SpectralField exx = derivative(eta, 2);
    SpectralField w52 = power_of_one_plus_sq(ex, -2.5);
    SpectralField w72 = power_of_one_plus_sq(ex, -3.5);
    SpectralField term1 = derivative(product(exx, w52), 2);
    SpectralField term2 = derivative(product(ex, product(exx, product(exx, w72))));
    term2 *= 2.5;
    SpectralField out = term1 + term2;
    out *= p.sigma;
    return out;
}

SpectralField elastic_force_curvature_form(const SpectralField& eta, const PhysParams& p,
                                           const DnoConfig& cfg) {
    p.validate();
    check_slope_guard(eta, cfg);
    SpectralField ex = derivative(eta);
    SpectralField exx = derivative(eta, 2);
    SpectralField w12 = power_of_one_plus_sq(ex, -0.5);
    SpectralField w32 = power_of_one_plus_sq(ex, -1.5);
    SpectralField kappa = product(exx, w32);
    SpectralField inner = product(w12, derivative(kappa));
    SpectralField lb = product(w12, derivative(inner));  // Laplace-Beltrami of curvature
    SpectralField cubic = product(kappa, product(kappa, kappa));
    cubic *= 0.5;
    SpectralField out = lb + cubic;
    out *= p.sigma;
    return out;
}

SpectralField elastic_force_minus_flat(const SpectralField& eta, const PhysParams& p,
                                       const DnoConfig& cfg) {
    p.validate();
    check_slope_guard(eta, cfg);
    SpectralField ex = derivative(eta);
    SpectralField exx = derivative(eta, 2);
    SpectralField w52m1 = powm1_of_one_plus_sq(ex, -2.5);
    SpectralField w72 = power_of_one_plus_sq(ex, -3.5);
    SpectralField term1 = derivative(product(exx, w52m1), 2);
    SpectralField term2 = derivative(product(ex, product(exx, product(exx, w72))));
    term2 *= 2.5;
    SpectralField out = term1 + term2;
    out *= p.sigma;
    return out;
}

ElasticCoeffs elastic_linearization(const SpectralField& eta, const PhysParams& p, const DnoConfig& cfg) {
    p.validate();
    check_slope_guard(eta, cfg);
    SpectralField ex = derivative(eta);
    SpectralField exx = derivative(eta, 2);
    SpectralField w52 = power_of_one_plus_sq(ex, -2.5);
    SpectralField w72 = power_of_one_plus_sq(ex, -3.5);
    SpectralField w92 = power_of_one_plus_sq(ex, -4.5);

    ElasticCoeffs ec{zero_field(eta.grid()), zero_field(eta.grid()), zero_field(eta.grid()),
                     zero_field(eta.grid())};
    ec.E4 = w52;
    ec.E3 = derivative(w52);
    ec.E3 *= 2.0;

    // q := 5 eta_x eta_xx / (1+eta_x^2)^{7/2}, r := 5(1-6 eta_x^2) eta_xx^2 / (2 (1+eta_x^2)^{9/2})
    SpectralField q = product(ex, product(exx, w72));
    q *= 5.0;
    SpectralField one_minus = pointwise_map(ex, [](double s) { return 1.0 - 6.0 * s * s; });
    SpectralField r = product(one_minus, product(exx, product(exx, w92)));
    r *= 2.5;

    ec.E2 = derivative(w52, 2) - derivative(q) + r;
    ec.E1 = derivative(r) - derivative(q, 2);
    return ec;
}

SpectralField apply_elastic_linearization(const ElasticCoeffs& ec, const SpectralField& h, double sigma) {
    SpectralField out = product(ec.E4, derivative(h, 4));
    out += product(ec.E3, derivative(h, 3));
    out += product(ec.E2, derivative(h, 2));
    out += product(ec.E1, derivative(h, 1));
    out *= sigma;
    return out;
}

StatePair nonlinear_rhs(const StatePair& u, const SpectralField& pext, const PhysParams& p,
                        const DnoConfig& cfg) {
    p.validate();
    check_slope_guard(u.eta, cfg);
    const GridSpec& g = u.eta.grid();

    SpectralField eta_dot = dn_apply(u.eta, u.psi, cfg);
    eta_dot.zero_mean();

    SpectralField eta_x = derivative(u.eta);
    SpectralField psi_x = derivative(u.psi);
    SpectralField gpsi = dn_apply(u.eta, u.psi, cfg);
    SpectralField numer = gpsi + product(eta_x, psi_x);
    SpectralField inv_w = pointwise_map(eta_x, [](double s) { return 1.0 / (1.0 + s * s); });

    SpectralField psi_dot = zero_field(g);
    psi_dot -= p.grav * u.eta;
    SpectralField quad = product(psi_x, psi_x);
    quad *= -0.5;
    psi_dot += quad;
    SpectralField bern = product(numer, product(numer, inv_w));
    bern *= 0.5;
    psi_dot += bern;
    psi_dot -= elastic_force(u.eta, p, cfg);
    psi_dot += pext;

    return {eta_dot, psi_dot};
}

SpectralField flat_diagonal_variable(const StatePair& u, const PhysParams& p) {
    const GridSpec& g = u.eta.grid();
    SpectralField lg = apply_multiplier(u.eta, [&](int k) {
        if (k == 0) return cx(0.0);
        return cx(dispersion_L_symbol(k, g, p.grav, p.sigma) / dno_flat_symbol(k, g), 0.0);
    });
    SpectralField out = u.psi;
    out -= cx(0.0, 1.0) * lg;
    out.set_real(false);
    return out;
}

StatePair flat_diagonal_inverse(const SpectralField& w, const PhysParams& p) {
    const GridSpec& g = w.grid();
    // psi = Re w, L G(0)^{-1} eta = -Im w, recombined coefficientwise.
    SpectralField re(g, true), im(g, true);
    const int n = g.n_modes;
    for (int i = 0; i < n; ++i) {
        int k = slot_wavenumber(i, n);
        cx a = w.coeff(k);
        cx b = std::conj(w.coeff(-k));
        re.set_coeff(k, 0.5 * (a + b));
        im.set_coeff(k, cx(0.0, -0.5) * (a - b));
    }
    SpectralField eta = apply_multiplier(im, [&](int k) {
        if (k == 0) return cx(0.0);
        return cx(-dno_flat_symbol(k, g) / dispersion_L_symbol(k, g, p.grav, p.sigma), 0.0);
    });
    return {eta, re};
}

}  // namespace hydroctrl
