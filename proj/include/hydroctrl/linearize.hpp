#ifndef HYDROCTRL_LINEARIZE_HPP
#define HYDROCTRL_LINEARIZE_HPP

#include <memory>

#include "hydroctrl/model.hpp"

// Linearized operator P'(u) about a trajectory, the good-unknown conjugation,
// the operator L0, and discrete adjoints in the H^0 pair inner product.

namespace hydroctrl {

// Pairs of (possibly complex) spectral fields; the linearized state.
struct PairField {
    SpectralField a;  // eta-like component
    SpectralField b;  // psi-like component

    PairField() = default;
    PairField(SpectralField x, SpectralField y) : a(std::move(x)), b(std::move(y)) {}

    PairField& operator+=(const PairField& o) { a += o.a; b += o.b; return *this; }
    PairField& operator-=(const PairField& o) { a -= o.a; b -= o.b; return *this; }
    PairField& operator*=(double s) { a *= s; b *= s; return *this; }
    PairField& operator*=(cx s) { a *= s; b *= s; return *this; }
    friend PairField operator+(PairField x, const PairField& y) { return x += y; }
    friend PairField operator-(PairField x, const PairField& y) { return x -= y; }
    friend PairField operator*(double s, PairField x) { return x *= s; }
    friend PairField operator*(cx s, PairField x) { return x *= s; }
};

PairField zero_pair(const GridSpec& g);

// H^0 = H^{3/2} x L^2 inner product; eta mean slots are projected out.
cx h0_inner(const PairField& x, const PairField& y);
double h0_norm(const PairField& x);
double l2_pair_norm(const PairField& x);
double hs_pair_norm(const PairField& x, double s);  // H^{s+3/2} x H^s, inhomogeneous

// Everything the linearized operator needs at one trajectory time.
struct TimeSlice {
    double t = 0.0;
    StatePair u;
    SpectralField B, V;
    SpectralField Bt;       // centered time difference along the trajectory
    SpectralField a_coeff;  // g + B_t + V B_x
    ElasticCoeffs ecoeffs;
    bool flat = false;
};

// One time slice of a 2x2 block operator: compositional closure plus an
// explicit dense matrix on the 2N spectral unknowns (built on demand).
class LinearOperatorSlice {
  public:
    using Apply = std::function<PairField(const PairField&)>;

    LinearOperatorSlice() = default;
    LinearOperatorSlice(GridSpec g, Apply apply, bool flat = false)
        : grid_(g), apply_(std::move(apply)), flat_(flat) {}

    const GridSpec& grid() const { return grid_; }
    bool flat() const { return flat_; }

    PairField operator()(const PairField& x) const { return apply_(x); }
    PairField apply_dense(const PairField& x) const;

    const std::vector<cx>& dense() const;  // row-major 2N x 2N, eta block first

  private:
    GridSpec grid_;
    Apply apply_;
    bool flat_ = false;
    mutable std::shared_ptr<std::vector<cx>> dense_;
};

// Spatial part of P'(u) at a slice: applying it and adding d_t reproduces the
// Gateaux derivative of the nonlinear right-hand side (up to sign convention
// d_t u + A u = forcing).
LinearOperatorSlice pprime_slice(const TimeSlice& s, const PhysParams& p, const DnoConfig& cfg);

// Spatial part of L0 = Z^{-1} P'(u) Z.
LinearOperatorSlice l0_slice(const TimeSlice& s, const PhysParams& p, const DnoConfig& cfg);

enum class ConjugationDirection { Forward, Inverse };

// Z maps (e, p) to (e, p + B e); inverse uses -B.
PairField good_unknown(const TimeSlice& s, const PairField& x, ConjugationDirection dir);

// Build slices from sampled states on a uniform grid (B_t by centered
// differences, one-sided 2nd order at the ends). Requires >= 3 samples.
std::vector<TimeSlice> prepare_slices(const std::vector<double>& times,
                                      const std::vector<StatePair>& states, const PhysParams& p,
                                      const DnoConfig& cfg);

std::vector<LinearOperatorSlice> assemble_Pprime(const std::vector<TimeSlice>& slices,
                                                 const PhysParams& p, const DnoConfig& cfg);
std::vector<LinearOperatorSlice> assemble_L0(const std::vector<TimeSlice>& slices,
                                             const PhysParams& p, const DnoConfig& cfg);

// Adjoint with respect to the weighted H^0 inner product, via the dense form.
LinearOperatorSlice discrete_adjoint(const LinearOperatorSlice& op, const PhysParams& p);

// H^0 weight of component c (0 = eta, 1 = psi) at wavenumber k.
double h0_weight(int c, int k);

}  // namespace hydroctrl

#endif
