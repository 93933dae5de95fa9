#include "doctest.h"

#include <cmath>
#include <random>

#include "hydroctrl/spectral.hpp"

using namespace hydroctrl;

namespace {
const GridSpec g32(32, kInfiniteDepth);

SpectralField random_real_field(const GridSpec& g, std::mt19937_64& rng, int kmax, double amp) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    SpectralField f(g, true);
    for (int k = 1; k <= kmax; ++k) {
        cx c(gauss(rng), gauss(rng));
        f.set_coeff(k, amp * c);
        f.set_coeff(-k, amp * std::conj(c));
    }
    f.set_coeff(0, amp * gauss(rng));
    return f;
}
}  // namespace

TEST_CASE("multiplier: |D| on a single mode is homogeneous") {
    SpectralField f = mode_field(g32, 3, 1.0);
    SpectralField out = abs_derivative_pow(f, 1.0);
    CHECK(std::abs(out.coeff(3) - cx(3.0, 0.0)) < 1e-15);
}

TEST_CASE("multiplier: |D|^alpha annihilates constants") {
    SpectralField one = constant_field(g32, 1.0);
    for (double a : {0.5, 1.0, -1.5}) {
        SpectralField out = abs_derivative_pow(one, a);
        CHECK(l2_norm(out) == 0.0);
    }
}

TEST_CASE("multiplier: G(0) at depth 1 on cos x") {
    GridSpec gh(32, 1.0);
    SpectralField f = cosine_field(gh, 1, 1.0);
    SpectralField out = apply_multiplier(f, [&](int k) { return cx(dno_flat_symbol(k, gh), 0.0); });
    CHECK(std::abs(out.coeff(1).real() - 0.5 * std::tanh(1.0)) < 1e-14);
    CHECK(std::abs(out.coeff(1).real() - 0.5 * 0.7615941559557649) < 1e-12);
}

TEST_CASE("multiplier rejects non-finite symbols") {
    SpectralField f = cosine_field(g32, 1, 1.0);
    CHECK_THROWS_AS(apply_multiplier(f, [](int k) { return cx(1.0 / (k - 1.0), 0.0); }),
                    std::invalid_argument);
}

TEST_CASE("multiplier reality flag follows the symbol symmetry") {
    SpectralField f = cosine_field(g32, 2, 1.0);
    SpectralField herm = apply_multiplier(f, [](int k) { return cx(0.0, static_cast<double>(k)); });
    CHECK(herm.is_real());
    SpectralField nonherm = apply_multiplier(f, [](int) { return cx(0.0, 1.0); });
    CHECK(!nonherm.is_real());
}

TEST_CASE("hilbert transform conventions") {
    CHECK(l2_norm(hilbert(constant_field(g32, 1.0))) == 0.0);

    SpectralField e1 = mode_field(g32, 1, 1.0);
    SpectralField h = hilbert(e1);
    CHECK(std::abs(h.coeff(1) - cx(0.0, -1.0)) < 1e-15);

    SpectralField c2 = cosine_field(g32, 2, 1.0);
    SpectralField s2 = sine_field(g32, 2, 1.0);
    CHECK(l2_norm(hilbert(c2) - s2) < 1e-15);

    // d/dx = -|D| H on a mixed field
    std::mt19937_64 rng(7);
    SpectralField f = random_real_field(g32, rng, 9, 0.3);
    SpectralField lhs = derivative(f);
    SpectralField rhs = -1.0 * abs_derivative_pow(hilbert(f), 1.0);
    CHECK(l2_norm(lhs - rhs) < 1e-13);
}

TEST_CASE("antiderivative") {
    SpectralField e2 = mode_field(g32, 2, 1.0);
    SpectralField a = antiderivative(e2);
    CHECK(std::abs(a.coeff(2) - cx(1.0, 0.0) / cx(0.0, 2.0)) < 1e-15);
    CHECK(l2_norm(antiderivative(constant_field(g32, 1.0))) == 0.0);
    CHECK(l2_norm(antiderivative(cosine_field(g32, 1, 1.0)) - sine_field(g32, 1, 1.0)) < 1e-15);
}

TEST_CASE("sobolev norms") {
    SpectralField f(g32, false);
    f.set_coeff(2, 1.0);
    for (double s : {-1.0, 0.0, 0.7, 2.0})
        CHECK(std::abs(sobolev_norm(f, {s}) - std::pow(2.0, s)) < 1e-14);
    CHECK(sobolev_norm(zero_field(g32), {1.0}) == 0.0);

    SpectralField two(g32, false);
    two.set_coeff(1, 1.0);
    two.set_coeff(3, 1.0);
    CHECK(std::abs(sobolev_norm(two, {1.0}) - std::sqrt(10.0)) < 1e-14);

    CHECK_THROWS_AS(sobolev_norm(two, {std::numeric_limits<double>::infinity()}),
                    std::invalid_argument);
}

TEST_CASE("pair norm is the Euclidean combination") {
    StatePair u{cosine_field(g32, 2, 1.0), cosine_field(g32, 3, 1.0)};
    double a = sobolev_norm(u.eta, {1.5}, false);
    double b = sobolev_norm(u.psi, {0.0}, false);
    CHECK(std::abs(pair_norm(u, {0.0}) - std::sqrt(a * a + b * b)) < 1e-14);
}

TEST_CASE("smoothing projector") {
    SpectralField e5 = mode_field(g32, 5, 1.0);
    CHECK(l2_norm(smoothing_projector(e5, 2)) == 0.0);
    CHECK(l2_norm(smoothing_projector(e5, 3) - e5) == 0.0);
    SpectralField one = constant_field(g32, 2.5);
    CHECK(l2_norm(smoothing_projector(one, 0) - one) == 0.0);

    std::mt19937_64 rng(11);
    SpectralField f = random_real_field(g32, rng, 14, 1.0);
    SpectralField s = smoothing_projector(f, 3);
    CHECK(l2_norm(smoothing_projector(s, 3) - s) == 0.0);  // idempotent
    for (double sexp : {-1.0, 0.0, 2.0})
        CHECK(sobolev_norm(s, {sexp}) <= sobolev_norm(f, {sexp}) + 1e-15);
}

TEST_CASE("grid round trip and Parseval") {
    std::mt19937_64 rng(3);
    SpectralField f = random_real_field(g32, rng, 15, 1.0);
    SpectralField back = field_from_grid(g32, grid_values(f), true);
    CHECK(l2_norm(back - f) < 1e-12 * l2_norm(f));

    SpectralField h = random_real_field(g32, rng, 15, 1.0);
    auto fv = grid_values(f);
    auto hv = grid_values(h);
    cx grid_ip(0.0);
    for (size_t i = 0; i < fv.size(); ++i) grid_ip += fv[i] * std::conj(hv[i]);
    grid_ip /= static_cast<double>(fv.size());
    CHECK(std::abs(grid_ip - l2_inner(f, h)) < 1e-12 * (1.0 + std::abs(grid_ip)));
}

TEST_CASE("multiplier composition is exact") {
    std::mt19937_64 rng(5);
    SpectralField f = random_real_field(g32, rng, 12, 1.0);
    auto s1 = [](int k) { return cx(1.0 + k * k, 0.0); };
    auto s2 = [](int k) { return cx(0.0, static_cast<double>(k)); };
    SpectralField a = apply_multiplier(apply_multiplier(f, s1), s2);
    SpectralField b = apply_multiplier(f, [&](int k) { return s1(k) * s2(k); });
    CHECK(l2_norm(a - b) < 1e-13 * l2_norm(f));
}

TEST_CASE("derivative inverts antiderivative on mean-zero fields") {
    std::mt19937_64 rng(9);
    SpectralField f = random_real_field(g32, rng, 12, 1.0);
    f.zero_mean();
    CHECK(l2_norm(derivative(antiderivative(f)) - f) < 1e-14 * l2_norm(f));
}

TEST_CASE("hilbert squared is minus identity off the mean") {
    std::mt19937_64 rng(13);
    SpectralField f = random_real_field(g32, rng, 12, 1.0);
    SpectralField hh = hilbert(hilbert(f));
    SpectralField expect = -1.0 * f;
    expect.set_coeff(0, 0.0);
    expect.set_coeff(g32.n_modes / 2, 0.0);  // Nyquist annihilated for real fields
    CHECK(l2_norm(hh - expect) == 0.0);
}

TEST_CASE("dealiased product of cosines") {
    SpectralField c1 = cosine_field(g32, 1, 1.0);
    SpectralField p = product(c1, c1);  // cos^2 = 1/2 + cos(2x)/2
    CHECK(std::abs(p.coeff(0) - cx(0.5, 0.0)) < 1e-15);
    CHECK(std::abs(p.coeff(2) - cx(0.25, 0.0)) < 1e-15);
    CHECK(std::abs(p.coeff(1)) < 1e-15);
}

TEST_CASE("serialization round trips") {
    std::mt19937_64 rng(17);
    SpectralField f = random_real_field(g32, rng, 10, 0.7);
    SpectralField c = field_from_csv(g32, field_to_csv(f));
    CHECK(l2_norm(c - f) == 0.0);
    SpectralField j = field_from_json(field_to_json(f));
    CHECK(l2_norm(j - f) == 0.0);
    CHECK(j.grid().infinite_depth());
    std::string gcsv = field_grid_csv(f);
    CHECK(gcsv.find("x,value") == 0);
}

TEST_CASE("grid spec invariants") {
    CHECK_THROWS_AS(GridSpec(7, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(GridSpec(6, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(GridSpec(16, -1.0), std::invalid_argument);
    CHECK_NOTHROW(GridSpec(8, kInfiniteDepth));
}

TEST_CASE("named dispersion symbols") {
    CHECK(tau_symbol(0, 1.0, 1.0, 1.0) == 0.0);
    CHECK(std::abs(tau_symbol(2, 1.0, 1.0, 1.0) - std::sqrt(2.0 * 17.0)) < 1e-14);
    CHECK(std::abs(dispersion_L_symbol(2, g32, 1.0, 1.0) - tau_symbol(2, 1.0, 1.0, 1.0)) < 1e-14);
    CHECK(lambda_symbol(0, 1.0, 1.0) == 1.0);
    CHECK(std::abs(lambda_symbol(3, 2.0, 0.5) - std::sqrt((2.0 + 0.5 * 81.0) / 3.0)) < 1e-14);
}
