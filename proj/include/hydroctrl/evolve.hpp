#ifndef HYDROCTRL_EVOLVE_HPP
#define HYDROCTRL_EVOLVE_HPP

#include "hydroctrl/linearize.hpp"

// Time integration: nonlinear system, linearized system (forward/backward),
// and the backward adjoint flow. Exponential ETDRK4 with the flat-state
// linear operator integrated exactly per mode.

namespace hydroctrl {

struct StepperConfig {
    double dt = 0.0;  // 0 means the default budget below
    DnoConfig dno;

    static double default_dt(const GridSpec& g, const PhysParams& p, double T);
};

struct Trajectory {
    GridSpec grid;
    PhysParams params;
    double dt = 0.0;
    std::vector<double> times;
    std::vector<StatePair> states;
    std::vector<SpectralField> forcing;  // P_ext at each sample

    double horizon() const { return times.empty() ? 0.0 : times.back(); }
    size_t size() const { return times.size(); }
};

using ForcingFn = std::function<SpectralField(double)>;  // P_ext(t)
using PairForcingFn = std::function<PairField(double)>;

Trajectory solve_nonlinear(const StatePair& u0, const ForcingFn& pext, double T,
                           const StepperConfig& cfg, const PhysParams& p, const GridSpec& g);

Trajectory flat_trajectory(const GridSpec& g, const PhysParams& p, double T, double dt);

// Uniformly sampled pair field with cubic evaluation between samples.
struct PairSeries {
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<PairField> samples;

    PairField eval(double t) const;
    double sup_h0_norm() const;
};

// Slices and operator forms prepared on a half-step grid so the stepper's
// stage times always land on stored slices.
class LinearizedSystem {
  public:
    LinearizedSystem(const Trajectory& traj, const PhysParams& p, const DnoConfig& cfg);

    const GridSpec& grid() const { return g_; }
    const PhysParams& params() const { return p_; }
    double dt() const { return dt_; }          // stepper step (trajectory spacing)
    double horizon() const { return T_; }
    size_t steps() const { return nsteps_; }
    bool flat() const { return all_flat_; }

    // Variable part (A(t) - A_flat) x at half-grid slice index.
    PairField apply_variable(size_t half_idx, const PairField& x) const;
    // Variable part of the adjoint (A*(t) - A*_flat) x.
    PairField apply_variable_adjoint(size_t half_idx, const PairField& x) const;

    const std::vector<TimeSlice>& slices() const { return slices_; }

  private:
    GridSpec g_;
    PhysParams p_;
    double dt_ = 0.0, T_ = 0.0;
    size_t nsteps_ = 0;
    bool all_flat_ = true;
    std::vector<TimeSlice> slices_;                 // on the half grid
    std::vector<LinearOperatorSlice> ops_;          // P'(u) spatial part
    mutable std::vector<LinearOperatorSlice> adj_;  // adjoints, built on demand
    mutable std::vector<char> adj_built_;
};

// d_t h + A(t) h = f, h(0) = h0; returns samples on the trajectory grid.
PairSeries solve_linearized(const LinearizedSystem& sys, const PairField& h0,
                            const PairForcingFn& f);
// d_t h + A(t) h = 0 integrated backward from h(T) = hT.
PairSeries solve_linearized_backward(const LinearizedSystem& sys, const PairField& hT);
// [P'(u)]* f = 0 backward from f(T) = fT (adjoint in the weighted H^0 product).
PairSeries solve_adjoint_backward(const LinearizedSystem& sys, const PairField& fT);

// Trapezoidal space-time pairing int_0^T <x, y>_{H^0} dt on a common grid.
double spacetime_h0_pairing(const PairSeries& x, const PairSeries& y);

// Measured stability constant sup_t ||h|| / (||h0|| + sup_t ||f||).
double linearized_energy_constant(const LinearizedSystem& sys, const PairField& h0,
                                  const PairForcingFn& f);

std::string trajectory_to_text(const Trajectory& tr);
Trajectory trajectory_from_text(const std::string& text);

}  // namespace hydroctrl

#endif
