#include "doctest.h"

#include <cmath>
#include <random>

#include "hydroctrl/model.hpp"

using namespace hydroctrl;

namespace {
const GridSpec ginf(64, kInfiniteDepth);

SpectralField random_smooth(const GridSpec& g, std::mt19937_64& rng, int kmax, double h6_norm) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    SpectralField f(g, true);
    for (int k = 1; k <= kmax; ++k) {
        cx c(gauss(rng), gauss(rng));
        f.set_coeff(k, c);
        f.set_coeff(-k, std::conj(c));
    }
    double n = sobolev_norm(f, {6.0}, false);
    if (n > 0) f *= h6_norm / n;
    return f;
}
}  // namespace

TEST_CASE("elastic force vanishes at the flat state") {
    PhysParams p;
    DnoConfig cfg;
    CHECK(l2_norm(elastic_force(zero_field(ginf), p, cfg)) == 0.0);
}

TEST_CASE("elastic force linearizes to sigma eta_xxxx") {
    PhysParams p;
    p.sigma = 0.7;
    DnoConfig cfg;
    SpectralField c1 = cosine_field(ginf, 1, 1.0);
    std::vector<double> epss = {4e-2, 2e-2, 1e-2};
    std::vector<double> errs;
    for (double eps : epss) {
        SpectralField e = elastic_force(eps * c1, p, cfg);
        SpectralField lin = (p.sigma * eps) * c1;  // d^4 cos x = cos x
        errs.push_back(l2_norm(e - lin));
    }
    double ratio = errs[0] / errs[2];  // O(eps^3) remainder
    CHECK(ratio > 48.0);
    CHECK(ratio < 80.0);
}

TEST_CASE("both displayed elastic forms agree") {
    PhysParams p;
    p.sigma = 1.3;
    DnoConfig cfg;
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 4; ++trial) {
        SpectralField eta = random_smooth(ginf, rng, 6, 0.05);
        SpectralField f1 = elastic_force(eta, p, cfg);
        SpectralField f2 = elastic_force_curvature_form(eta, p, cfg);
        CHECK(l2_norm(f1 - f2) < 1e-10);
    }
}

TEST_CASE("elastic_force_minus_flat removes exactly the flat part") {
    PhysParams p;
    DnoConfig cfg;
    std::mt19937_64 rng(22);
    SpectralField eta = random_smooth(ginf, rng, 6, 0.07);
    SpectralField lhs = elastic_force_minus_flat(eta, p, cfg);
    SpectralField rhs = elastic_force(eta, p, cfg) - p.sigma * derivative(eta, 4);
    CHECK(l2_norm(lhs - rhs) < 1e-11);
}

TEST_CASE("elastic linearization coefficients") {
    PhysParams p;
    DnoConfig cfg;
    ElasticCoeffs at0 = elastic_linearization(zero_field(ginf), p, cfg);
    CHECK(l2_norm(at0.E4 - constant_field(ginf, 1.0)) < 1e-14);
    CHECK(l2_norm(at0.E3) < 1e-14);
    CHECK(l2_norm(at0.E2) < 1e-14);
    CHECK(l2_norm(at0.E1) < 1e-14);
    SpectralField h = cosine_field(ginf, 2, 1.0);
    CHECK(l2_norm(apply_elastic_linearization(at0, h, 1.0) - derivative(h, 4)) < 1e-13);

    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 3; ++trial) {
        SpectralField eta = random_smooth(ginf, rng, 6, 0.08);
        ElasticCoeffs ec = elastic_linearization(eta, p, cfg);
        CHECK(l2_norm(ec.E3 - 2.0 * derivative(ec.E4)) < 1e-11);
    }
}

TEST_CASE("elastic linearization is the Gateaux derivative") {
    PhysParams p;
    p.sigma = 0.9;
    DnoConfig cfg;
    std::mt19937_64 rng(24);
    SpectralField eta = random_smooth(ginf, rng, 5, 0.06);
    SpectralField etat(ginf, true);
    {
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (int k = 1; k <= 3; ++k) {
            cx c(gauss(rng), gauss(rng));
            etat.set_coeff(k, c);
            etat.set_coeff(-k, std::conj(c));
        }
        etat *= 0.3 / l2_norm(etat);
    }
    ElasticCoeffs ec = elastic_linearization(eta, p, cfg);
    SpectralField an = apply_elastic_linearization(ec, etat, p.sigma);
    std::vector<double> epss = {3e-3, 1e-3, 3e-4};
    std::vector<double> errs;
    for (double eps : epss) {
        SpectralField up = elastic_force(eta + eps * etat, p, cfg);
        SpectralField dn = elastic_force(eta + (-eps) * etat, p, cfg);
        errs.push_back(l2_norm((1.0 / (2.0 * eps)) * (up - dn) - an));
    }
    double slope = std::log(errs[0] / errs[2]) / std::log(epss[0] / epss[2]);
    CHECK(slope > 1.8);
    CHECK(slope < 2.2);
}

TEST_CASE("nonlinear rhs: equilibrium and flat-eta closed form") {
    PhysParams p;
    DnoConfig cfg;
    StatePair zero{zero_field(ginf), zero_field(ginf)};
    StatePair dz = nonlinear_rhs(zero, zero_field(ginf), p, cfg);
    CHECK(l2_norm(dz.eta) == 0.0);
    CHECK(l2_norm(dz.psi) == 0.0);

    std::mt19937_64 rng(25);
    SpectralField psi = random_smooth(ginf, rng, 5, 0.4);
    StatePair u{zero_field(ginf), psi};
    StatePair du = nonlinear_rhs(u, zero_field(ginf), p, cfg);
    SpectralField g0psi = abs_derivative_pow(psi, 1.0);
    CHECK(l2_norm(du.eta - g0psi) < 1e-12);
    SpectralField expect = (-0.5) * product(derivative(psi), derivative(psi)) +
                           0.5 * product(g0psi, g0psi);
    CHECK(l2_norm(du.psi - expect) < 1e-12);
}

TEST_CASE("nonlinear rhs approaches the linear rhs quadratically") {
    PhysParams p;
    DnoConfig cfg;
    std::mt19937_64 rng(26);
    SpectralField eta = random_smooth(ginf, rng, 4, 1.0);
    SpectralField psi = random_smooth(ginf, rng, 4, 1.0);
    std::vector<double> deltas = {1e-2, 5e-3, 2.5e-3};
    std::vector<double> errs;
    for (double d : deltas) {
        StatePair u{d * eta, d * psi};
        StatePair full = nonlinear_rhs(u, zero_field(ginf), p, cfg);
        StatePair lin;
        lin.eta = abs_derivative_pow(u.psi, 1.0);
        lin.psi = (-p.grav) * u.eta - p.sigma * derivative(u.eta, 4);
        double e = l2_norm(full.eta - lin.eta) + l2_norm(full.psi - lin.psi);
        errs.push_back(e);
    }
    double slope = std::log(errs[0] / errs[2]) / std::log(deltas[0] / deltas[2]);
    CHECK(slope > 1.9);
    CHECK(slope < 2.1);
}

TEST_CASE("rhs preserves reality and eta mean") {
    PhysParams p;
    DnoConfig cfg;
    std::mt19937_64 rng(27);
    StatePair u{random_smooth(ginf, rng, 6, 0.05), random_smooth(ginf, rng, 6, 0.3)};
    StatePair du = nonlinear_rhs(u, zero_field(ginf), p, cfg);
    CHECK(du.eta.is_real());
    CHECK(du.psi.is_real());
    CHECK(std::abs(du.eta.mean()) < 1e-14);
}

TEST_CASE("flat diagonal variable and its inverse") {
    PhysParams p;
    p.grav = 2.0;
    p.sigma = 3.0;
    StatePair upsi{zero_field(ginf), cosine_field(ginf, 2, 1.0)};
    SpectralField w = flat_diagonal_variable(upsi, p);
    CHECK(l2_norm(w - cosine_field(ginf, 2, 1.0)) < 1e-14);

    // eta = cos x at infinite depth: u = -i sqrt(g+sigma) cos x
    StatePair ueta{cosine_field(ginf, 1, 1.0), zero_field(ginf)};
    SpectralField w2 = flat_diagonal_variable(ueta, p);
    double amp = std::sqrt(p.grav + p.sigma);
    CHECK(std::abs(w2.coeff(1) - cx(0.0, -0.5 * amp)) < 1e-13);
    CHECK(std::abs(w2.coeff(-1) - cx(0.0, -0.5 * amp)) < 1e-13);

    std::mt19937_64 rng(28);
    StatePair u{random_smooth(ginf, rng, 8, 0.3), random_smooth(ginf, rng, 8, 0.3)};
    u.eta.zero_mean();
    StatePair back = flat_diagonal_inverse(flat_diagonal_variable(u, p), p);
    CHECK(l2_norm(back.eta - u.eta) < 1e-12);
    CHECK(l2_norm(back.psi - u.psi) < 1e-12);
}
