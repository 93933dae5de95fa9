#ifndef HYDROCTRL_CONTROL_HPP
#define HYDROCTRL_CONTROL_HPP

#include <random>

#include "hydroctrl/reduction.hpp"

// Ingham-inequality measurement, observability, HUM control synthesis for the
// linearized system, and the smoothed Newton loop for the nonlinear control.

namespace hydroctrl {

struct Interval {
    double lo = 0.0, hi = 0.0;
};

struct ControlProblem {
    double T = 1.0;
    std::vector<Interval> omega;        // union of open subintervals of [0, 2pi)
    double cutoff_width = 0.0981747704246810387;  // 2 pi / 64 raised-cosine ramp
    double cg_tol = 1e-10;
    int cg_maxiter = 400;
    double newton_tol = 1e-6;
    int newton_maxiter = 12;
    int smoothing_j0 = 3;               // dyadic level schedule j(n) = n + j0
    bool tikhonov = false;              // optional 1e-12 shift for near-singular Gramians

    void validate() const;
};

// Smoothed indicator sampled on the collocation grid; identically zero
// outside omega, 1 on the core, raised-cosine ramps of the given width.
std::vector<double> smoothed_indicator(const GridSpec& g, const std::vector<Interval>& omega,
                                       double width);
double indicator_measure(const std::vector<double>& chi);  // (1/2pi) integral -> mean

struct IngamReport {
    double min_ratio = 0.0;
    std::vector<double> ratios;
    size_t quadrature_points = 0;
};

// min over random coefficient draws of
//   int_0^T |sum_n w_n e^{-i t(n) s}|^2 ds / sum |w_n|^2.
IngamReport ingham_ratio(double T, int n_max, int trials, double m, const PhysParams& p,
                         uint64_t seed);

// Exact two-sided quadrature of the same functional (test oracle).
double ingham_integral_closed_form(double T, const std::vector<cx>& w, double m,
                                   const PhysParams& p);

// HUM Gramian f1 -> h(T): backward adjoint solve, cutoff, forward solve.
PairField gramian_apply(const LinearizedSystem& sys, const PairField& f1,
                        const std::vector<double>& chi);

struct CgResult {
    PairField x;
    std::vector<double> residuals;
    bool converged = false;
};

struct ControlResult {
    PairSeries control;        // (0, chi_omega f) on the solver grid
    PairSeries state;          // certified forward solution
    PairField terminal_datum;  // adjoint terminal datum f1
    double final_error_h0 = 0.0;
    double final_error_hs = 0.0;   // at s = 2
    double control_sup_h0 = 0.0;
    double control_constant = 0.0;
    double support_tail = 0.0;     // max |control| outside the smoothed omega
    int gramian_iters = 0;
    bool converged = false;
    std::vector<double> cg_residuals;
};

ControlResult hum_control(const LinearizedSystem& sys, const PairField& h_in,
                          const PairField& h_end, const PairForcingFn& q,
                          const ControlProblem& prob);

struct ObservabilityReport {
    double min_ratio = 0.0;
    std::vector<double> ratios;
    double reading_ratio = 1.0;  // localize-after vs localize-before diagnostics
};

ObservabilityReport observability_estimate(const LinearizedSystem& sys, int trials,
                                           const ControlProblem& prob, uint64_t seed);

struct NonlinearControlResult {
    Trajectory trajectory;
    std::vector<SpectralField> pext;  // P_ext samples on the trajectory grid
    std::vector<double> error_log;    // final-state H^0 error per iteration
    bool converged = false;
    int iterations = 0;
};

class BudgetExhausted : public std::runtime_error {
  public:
    explicit BudgetExhausted(const std::string& what) : std::runtime_error(what) {}
};

NonlinearControlResult nonlinear_control(const StatePair& u_in, const StatePair& u_end,
                                         const ControlProblem& prob, const PhysParams& p,
                                         const GridSpec& g, const StepperConfig& scfg);

// Seeded random real pair with smooth spectrum, eta mean-zero, unit H^0 norm.
PairField random_real_pair(const GridSpec& g, std::mt19937_64& rng, int kmax, double decay = 1.0);

}  // namespace hydroctrl

#endif
