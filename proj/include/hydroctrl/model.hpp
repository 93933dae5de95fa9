#ifndef HYDROCTRL_MODEL_HPP
#define HYDROCTRL_MODEL_HPP

#include "hydroctrl/dno.hpp"
#include "hydroctrl/spectral.hpp"

// Nonlinear hydroelastic right-hand side, the elastic operator with its
// linearization coefficients, and the flat-state diagonalizing variable.

namespace hydroctrl {

struct PhysParams {
    double grav = 1.0;   // g > 0
    double sigma = 1.0;  // flexural rigidity > 0

    void validate() const {
        if (!(grav > 0.0)) throw std::invalid_argument("PhysParams: g must be positive");
        if (!(sigma > 0.0)) throw std::invalid_argument("PhysParams: sigma must be positive");
    }
};

// Coefficients of E'(eta)[h] = sum E_{5-a} d_x^{5-a} h (sigma factored out).
struct ElasticCoeffs {
    SpectralField E1, E2, E3, E4;
};

// sigma { (eta_xx/(1+eta_x^2)^{5/2})_xx + (5/2)(eta_x eta_xx^2/(1+eta_x^2)^{7/2})_x }
SpectralField elastic_force(const SpectralField& eta, const PhysParams& p, const DnoConfig& cfg);

// First displayed (curvature) form; equal to elastic_force analytically.
SpectralField elastic_force_curvature_form(const SpectralField& eta, const PhysParams& p,
                                           const DnoConfig& cfg);

// elastic_force(eta) - sigma eta_xxxx without cancellation; used by the
// integrating-factor stepper.
SpectralField elastic_force_minus_flat(const SpectralField& eta, const PhysParams& p,
                                       const DnoConfig& cfg);

ElasticCoeffs elastic_linearization(const SpectralField& eta, const PhysParams& p, const DnoConfig& cfg);

// Apply sigma * sum E_{5-a} d_x^{5-a} to h.
SpectralField apply_elastic_linearization(const ElasticCoeffs& ec, const SpectralField& h, double sigma);

// Time derivative of (eta, psi) under the hydroelastic system with exterior
// pressure pext acting on the psi equation.
StatePair nonlinear_rhs(const StatePair& u, const SpectralField& pext, const PhysParams& p,
                        const DnoConfig& cfg);

// u = psi - i L G(0)^{-1} eta diagonalizes the flat-state linear system.
SpectralField flat_diagonal_variable(const StatePair& u, const PhysParams& p);
StatePair flat_diagonal_inverse(const SpectralField& w, const PhysParams& p);

}  // namespace hydroctrl

#endif
