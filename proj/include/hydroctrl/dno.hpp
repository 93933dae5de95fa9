#ifndef HYDROCTRL_DNO_HPP
#define HYDROCTRL_DNO_HPP

#include "hydroctrl/spectral.hpp"

// Dirichlet-Neumann operator G(eta) via the truncated Taylor expansion in eta,
// its shape derivative, and the surface velocity traces B and V.

namespace hydroctrl {

struct DnoConfig {
    int expansion_order = 4;   // K, capped at 8
    double fd_epsilon = 1e-4;  // step for finite-difference checks
    double slope_guard = 0.3;  // max allowed ||eta_x||_inf

    void validate() const;
};

class GuardViolation : public std::runtime_error {
  public:
    GuardViolation(const std::string& what, double t = -1.0)
        : std::runtime_error(what), time(t) {}
    double time;  // violation time when known, else -1
};

void check_slope_guard(const SpectralField& eta, const DnoConfig& cfg);

// G(eta)psi truncated at order K in eta. skip_flat omits the G(0) term, giving
// the nonlinear correction G(eta)psi - G(0)psi without cancellation.
SpectralField dn_apply(const SpectralField& eta, const SpectralField& psi, const DnoConfig& cfg,
                       bool skip_flat = false);

// G'(eta)[eta_tilde]psi = -G(eta)(B eta_tilde) - d_x(V eta_tilde)
SpectralField shape_derivative(const SpectralField& eta, const SpectralField& psi,
                               const SpectralField& eta_tilde, const DnoConfig& cfg);

struct VelocityTrace {
    SpectralField B;  // vertical component on the surface
    SpectralField V;  // horizontal component
};

VelocityTrace velocity_trace(const SpectralField& eta, const SpectralField& psi, const DnoConfig& cfg);

}  // namespace hydroctrl

#endif
