#include "doctest.h"

#include <cmath>
#include <random>

#include "hydroctrl/reduction.hpp"

using namespace hydroctrl;

namespace {
const GridSpec g64(64, kInfiniteDepth);

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

Trajectory small_trajectory(const GridSpec& g, double amplitude, double T, double dt,
                            uint64_t seed) {
    PhysParams p;
    std::mt19937_64 rng(seed);
    StatePair u0{random_smooth(g, rng, 3, amplitude), random_smooth(g, rng, 3, amplitude)};
    StepperConfig cfg;
    cfg.dt = dt;
    auto zero = [&](double) { return zero_field(g); };
    return solve_nonlinear(u0, zero, T, cfg, p, g);
}

Trajectory constant_trajectory(const GridSpec& g, const StatePair& u, double T, size_t n) {
    Trajectory tr;
    tr.grid = g;
    tr.params = PhysParams();
    tr.dt = T / static_cast<double>(n - 1);
    for (size_t i = 0; i < n; ++i) {
        tr.times.push_back(tr.dt * static_cast<double>(i));
        tr.states.push_back(u);
        tr.forcing.push_back(zero_field(g));
    }
    return tr;
}
}  // namespace

TEST_CASE("time/space change at the flat state") {
    Trajectory tr = constant_trajectory(g64, {zero_field(g64), zero_field(g64)}, 0.5, 17);
    CoeffTable tbl;
    compute_time_space_change(tr, DnoConfig(), tbl);
    CHECK(std::abs(tbl.m - 1.0) < 1e-14);
    for (double a : tbl.alpha) CHECK(std::abs(a) < 1e-14);
    for (const auto& b : tbl.beta) CHECK(l2_norm(b) < 1e-14);
}

TEST_CASE("time-independent eta gives m = c^{-5} and alpha = 0") {
    SpectralField eta0 = cosine_field(g64, 1, 0.05);
    StatePair u{eta0, zero_field(g64)};
    Trajectory tr = constant_trajectory(g64, u, 0.4, 21);
    CoeffTable tbl;
    compute_time_space_change(tr, DnoConfig(), tbl);
    SpectralField sq = pointwise_map(derivative(eta0), [](double s) { return std::sqrt(1.0 + s * s); });
    double c = sq.coeff(0).real();
    CHECK(std::abs(tbl.m - std::pow(c, -5.0)) < 1e-13);
    for (double a : tbl.alpha) CHECK(std::abs(a) < 1e-14);
    CHECK(tbl.uniform_bound_margin >= 0.0);
    CHECK(tbl.alphabeta_residual < 1e-9);
}

TEST_CASE("space change: identity, translation phase, round trip") {
    std::mt19937_64 rng(51);
    SpectralField h = random_smooth(g64, rng, 10, 1.0);
    SpectralField id = space_change_apply(h, zero_field(g64), WarpDirection::Forward);
    CHECK(l2_norm(id - h) < 1e-13);

    double c = 0.37;
    SpectralField beta_const = constant_field(g64, c);
    SpectralField shifted = space_change_apply(h, beta_const, WarpDirection::Forward);
    for (int k : {1, 3, 7}) {
        cx expect = h.coeff(k) * std::polar(1.0, k * c);
        CHECK(std::abs(shifted.coeff(k) - expect) < 1e-12);
    }

    // |beta_x|_inf = 0.3 round trip
    SpectralField beta = sine_field(g64, 1, 0.3);
    SpectralField smooth = random_smooth(g64, rng, 6, 1.0);
    SpectralField fwd = space_change_apply(smooth, beta, WarpDirection::Forward);
    SpectralField back = space_change_apply(fwd, beta, WarpDirection::Inverse);
    CHECK(l2_norm(back - smooth) < 1e-10 * std::max(1.0, l2_norm(smooth)));

    SpectralField too_steep = sine_field(g64, 1, 0.6);
    CHECK_THROWS_AS(space_change_apply(smooth, too_steep, WarpDirection::Inverse), GuardViolation);
}

TEST_CASE("solve_M_coefficients closed-form example") {
    CoeffTable tbl;
    tbl.grid = g64;
    tbl.params = PhysParams();  // sigma = 1
    tbl.m = 1.0;
    tbl.nt = 1;
    tbl.dt = 1.0;
    tbl.a19.push_back(constant_field(g64, 1.0));
    tbl.a27.push_back(constant_field(g64, 0.0));
    tbl.a20.push_back(zero_field(g64));
    tbl.a26.push_back(zero_field(g64));
    solve_M_coefficients(tbl);
    CHECK(std::abs(tbl.a28[0].coeff(0).real() - 0.5) < 1e-15);
    CHECK(std::abs(tbl.ell1[0].coeff(0).real() - 0.5) < 1e-15);
    CHECK(l2_norm(tbl.v1[0]) == 0.0);
    for (double r : tbl.eq_residual) CHECK(r < 1e-12);

    // all-zero inputs give all-zero outputs
    CoeffTable z = tbl;
    z.a19[0] = zero_field(g64);
    solve_M_coefficients(z);
    CHECK(l2_norm(z.a28[0]) == 0.0);
    CHECK(l2_norm(z.ell1[0]) == 0.0);
    CHECK(l2_norm(z.v2[0]) == 0.0);
    CHECK(l2_norm(z.a30[0]) == 0.0);
}

TEST_CASE("translation removes the transport average") {
    CoeffTable tbl;
    tbl.grid = g64;
    tbl.params = PhysParams();
    tbl.m = 1.0;
    tbl.nt = 5;
    tbl.dt = 0.1;
    for (size_t i = 0; i < tbl.nt; ++i) {
        tbl.a18.push_back(zero_field(g64));
        tbl.a28.push_back(zero_field(g64));
        tbl.a30.push_back(zero_field(g64));
    }
    build_translation(tbl);
    for (double v : tbl.p_shift) CHECK(v == 0.0);

    for (size_t i = 0; i < tbl.nt; ++i) tbl.a18[i] = constant_field(g64, 0.7);
    build_translation(tbl);
    for (size_t i = 0; i < tbl.nt; ++i)
        CHECK(std::abs(tbl.p_shift[i] + 0.7 * tbl.dt * static_cast<double>(i)) < 1e-14);
    CHECK(tbl.a31_mean_max < 1e-14);
}

TEST_CASE("coefficient table on a stored non-flat trajectory") {
    GridSpec g(64, kInfiniteDepth);
    Trajectory tr = small_trajectory(g, 1e-3, 0.3, 0.3 / 64.0, 777);
    CoeffTable tbl = build_coeff_table(tr, DnoConfig());
    CHECK(tbl.alphabeta_residual < 1e-9);
    for (double r : tbl.eq_residual) CHECK(r < 1e-12);
    CHECK(tbl.a31_mean_max < 1e-12);
    CHECK(tbl.gamma0_imag_max < 1e-12);
    CHECK(tbl.uniform_bound_margin >= 0.0);
    CHECK(std::abs(tbl.alpha.back()) < 1e-13);
    CHECK(std::abs(tbl.m - 1.0) < 1e-3);
}

TEST_CASE("flat-state stage skeleton coefficients") {
    Trajectory tr = constant_trajectory(g64, {zero_field(g64), zero_field(g64)}, 0.4, 17);
    Pipeline pipe = assemble_stage_operators(tr, DnoConfig());
    const CoeffTable& tbl = *pipe.table;
    PhysParams p;
    size_t mid = tbl.nt / 2;
    CHECK(l2_norm(tbl.a1[mid]) < 1e-13);
    CHECK(l2_norm(tbl.a2[mid]) < 1e-13);
    CHECK(l2_norm(tbl.a3[mid] - constant_field(g64, 1.0)) < 1e-13);
    CHECK(l2_norm(tbl.a4[mid] - constant_field(g64, 1.0)) < 1e-13);
    CHECK(l2_norm(tbl.a5[mid]) < 1e-13);
    CHECK(l2_norm(tbl.a6[mid]) < 1e-13);
    CHECK(l2_norm(tbl.a7[mid]) < 1e-13);
    CHECK(l2_norm(tbl.a8[mid] - constant_field(g64, p.grav)) < 1e-12);
    CHECK(l2_norm(tbl.ell1[mid]) < 1e-12);
    CHECK(l2_norm(tbl.v1[mid]) < 1e-12);
    CHECK(l2_norm(tbl.v2[mid]) < 1e-12);
}

TEST_CASE("O conjugation is exactly unitary") {
    Trajectory tr = constant_trajectory(g64, {zero_field(g64), zero_field(g64)}, 0.4, 9);
    Pipeline pipe = assemble_stage_operators(tr, DnoConfig());
    const Stage& o_stage = pipe.stages[6];
    std::mt19937_64 rng(52);
    SampledPair probe = constant_probe(g64, pipe.dt, pipe.nt, 5);
    SampledPair round = o_stage.left(o_stage.right(probe));
    for (size_t i = 0; i < probe.size(); ++i)
        CHECK(l2_pair_norm(round.slices[i] - probe.slices[i]) < 1e-14);
}

TEST_CASE("stage transform round trips on a non-flat table") {
    GridSpec g(64, kInfiniteDepth);
    Trajectory tr = small_trajectory(g, 1e-3, 0.25, 0.25 / 48.0, 909);
    Pipeline pipe = assemble_stage_operators(tr, DnoConfig());
    SampledPair probe = constant_probe(g, pipe.dt, pipe.nt, 9);
    for (const Stage& st : pipe.stages) {
        SampledPair r1 = st.right_inv(st.right(probe));
        SampledPair r2 = st.left_inv(st.left(probe));
        double d1 = 0.0, d2 = 0.0;
        for (size_t i = 0; i < probe.size(); ++i) {
            d1 = std::max(d1, l2_pair_norm(r1.slices[i] - probe.slices[i]));
            d2 = std::max(d2, l2_pair_norm(r2.slices[i] - probe.slices[i]));
        }
        INFO(st.name);
        CHECK(d1 < 1e-10);
        CHECK(d2 < 1e-10);
    }
}

TEST_CASE("flat state: every conjugation residual is tiny") {
    Trajectory tr = constant_trajectory(g64, {zero_field(g64), zero_field(g64)}, 0.4, 33);
    Pipeline pipe = assemble_stage_operators(tr, DnoConfig());
    std::vector<int> probes = {8, 12, 16};
    for (size_t s = 1; s <= pipe.stages.size(); ++s) {
        ResidualReport rep = conjugation_residual(pipe, s, probes);
        INFO(rep.stage);
        for (double r : rep.residual) CHECK(r < 1e-10);
    }
}

TEST_CASE("FIO at the flat state is the identity") {
    Trajectory tr = constant_trajectory(g64, {zero_field(g64), zero_field(g64)}, 0.4, 9);
    CoeffTable tbl = build_coeff_table(tr, DnoConfig());
    FioOperator fio(&tbl, FioBranch::Plus);
    std::mt19937_64 rng(53);
    SpectralField h = random_smooth(g64, rng, 10, 1.0);
    SpectralField out = fio.apply(h, 4);
    CHECK(l2_norm(out - h) < 1e-13);
    for (const auto& gam : tbl.gamma0) CHECK(std::abs(gam) < 1e-14);
}

TEST_CASE("FIO inverse round trip on a non-flat table") {
    GridSpec g(64, kInfiniteDepth);
    Trajectory tr = small_trajectory(g, 1e-3, 0.25, 0.25 / 48.0, 313);
    CoeffTable tbl = build_coeff_table(tr, DnoConfig());
    for (FioBranch b : {FioBranch::Plus, FioBranch::Minus}) {
        FioOperator fio(&tbl, b);
        CHECK(fio.correction_norm() < 0.5);
        std::mt19937_64 rng(54);
        SpectralField h = random_smooth(g, rng, 12, 1.0);
        SpectralField round = fio.apply_inverse(fio.apply(h, 10), 10);
        CHECK(l2_norm(round - h) < 1e-10);
    }
}

TEST_CASE("order-dropping slopes on a small non-flat trajectory") {
    GridSpec g(64, kInfiniteDepth);
    Trajectory tr = small_trajectory(g, 1e-3, 0.25, 0.25 / 64.0, 2024);
    Pipeline pipe = assemble_stage_operators(tr, DnoConfig());
    std::vector<int> probes = {8, 10, 13, 16};
    for (size_t s = 1; s <= pipe.stages.size(); ++s) {
        ResidualReport rep = conjugation_residual(pipe, s, probes);
        INFO(rep.stage, " slope=", rep.fitted_slope);
        CHECK(rep.fitted_slope <= rep.declared_order + 0.01);  // fit slack
    }
}
