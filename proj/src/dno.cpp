#include "hydroctrl/dno.hpp"

#include <cmath>

namespace hydroctrl {

void DnoConfig::validate() const {
    if (expansion_order < 0 || expansion_order > 8)
        throw std::invalid_argument("DnoConfig: expansion order must be in [0,8]");
    if (!(fd_epsilon > 0.0)) throw std::invalid_argument("DnoConfig: fd_epsilon must be positive");
}

void check_slope_guard(const SpectralField& eta, const DnoConfig& cfg) {
    double slope = derivative(eta).linf_grid();
    if (slope > cfg.slope_guard)
        throw GuardViolation("slope guard violated: ||eta_x||_inf = " + format_double(slope));
}

namespace {

// y-derivatives of the harmonic extension at the rest surface: even orders are
// |D|^m, odd orders carry one factor of G(0).
SpectralField vertical_derivative(const SpectralField& f, int order, const GridSpec& g) {
    if (order == 0) return f;
    return apply_multiplier(f, [order, &g](int k) {
        double ak = std::abs(static_cast<double>(k));
        if (order % 2 == 0) return cx(std::pow(ak, order), 0.0);
        if (k == 0) return cx(0.0);
        return cx(std::pow(ak, order - 1) * dno_flat_symbol(k, g), 0.0);
    });
}

}  // namespace

SpectralField dn_apply(const SpectralField& eta, const SpectralField& psi, const DnoConfig& cfg,
                       bool skip_flat) {
    cfg.validate();
    check_slope_guard(eta, cfg);
    const GridSpec& g = eta.grid();
    const int K = cfg.expansion_order;

    // Powers eta^m / m!
    std::vector<SpectralField> eta_pow;  // eta_pow[m] = eta^m/m!
    eta_pow.push_back(constant_field(g, 1.0));
    for (int m = 1; m <= K; ++m) {
        SpectralField p = product(eta_pow.back(), eta);
        p *= 1.0 / m;
        eta_pow.push_back(p);
    }

    // Boundary trace recursion: f_j collects the degree-j part of the surface
    // potential, with psi = sum_m (eta^m/m!) d_y^m phi at y=0.
    std::vector<SpectralField> f(static_cast<size_t>(K) + 1, zero_field(g));
    f[0] = psi;
    for (int j = 1; j <= K; ++j) {
        SpectralField acc = zero_field(g);
        for (int m = 1; m <= j; ++m) {
            acc += product(eta_pow[static_cast<size_t>(m)],
                           vertical_derivative(f[static_cast<size_t>(j - m)], m, g));
        }
        acc *= -1.0;
        f[static_cast<size_t>(j)] = acc;
    }

    SpectralField eta_x = derivative(eta);
    SpectralField out = zero_field(g);
    out.set_real(psi.is_real() && eta.is_real());
    for (int j = skip_flat ? 1 : 0; j <= K; ++j) {
        // G_j psi = sum_m (eta^m/m!) d_y^{m+1} phi_{j-m}  -  eta_x sum_m (eta^m/m!) d_x d_y^m phi_{j-1-m}
        SpectralField gj = zero_field(g);
        for (int m = 0; m <= j; ++m) {
            gj += product(eta_pow[static_cast<size_t>(m)],
                          vertical_derivative(f[static_cast<size_t>(j - m)], m + 1, g));
        }
        if (j >= 1) {
            SpectralField tangential = zero_field(g);
            for (int m = 0; m <= j - 1; ++m) {
                tangential += product(eta_pow[static_cast<size_t>(m)],
                                      derivative(vertical_derivative(f[static_cast<size_t>(j - 1 - m)], m, g)));
            }
            gj -= product(eta_x, tangential);
        }
        out += gj;
    }
    return out;
}

VelocityTrace velocity_trace(const SpectralField& eta, const SpectralField& psi, const DnoConfig& cfg) {
    const GridSpec& g = eta.grid();
    SpectralField eta_x = derivative(eta);
    SpectralField psi_x = derivative(psi);
    SpectralField gpsi = dn_apply(eta, psi, cfg);
    SpectralField numer = product(eta_x, psi_x) + gpsi;
    SpectralField inv_w = pointwise_map(eta_x, [](double s) { return 1.0 / (1.0 + s * s); });
    VelocityTrace tr{product(numer, inv_w), zero_field(g)};
    tr.V = psi_x - product(tr.B, eta_x);
    return tr;
}

SpectralField shape_derivative(const SpectralField& eta, const SpectralField& psi,
                               const SpectralField& eta_tilde, const DnoConfig& cfg) {
    VelocityTrace tr = velocity_trace(eta, psi, cfg);
    SpectralField b_part = dn_apply(eta, product(tr.B, eta_tilde), cfg);
    SpectralField v_part = derivative(product(tr.V, eta_tilde));
    SpectralField out = b_part + v_part;
    out *= -1.0;
    return out;
}

}  // namespace hydroctrl
