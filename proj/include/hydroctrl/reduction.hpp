#ifndef HYDROCTRL_REDUCTION_HPP
#define HYDROCTRL_REDUCTION_HPP

#include "hydroctrl/evolve.hpp"

// Reduction of the linearized operator to constant coefficients: the
// time/space changes of variables, the coefficient table a1..a33, the
// symmetrizing transformations, the Fourier integral operators, and
// numerical verification that each conjugation drops the operator order.

namespace hydroctrl {

// Pair fields sampled on a uniform time grid over [0, T].
struct SampledPair {
    double dt = 0.0;
    std::vector<PairField> slices;

    size_t size() const { return slices.size(); }
};

SampledPair constant_probe(const GridSpec& g, double dt, size_t n, int k);

// 4th-order interior finite-difference time derivative, slice by slice.
SampledPair time_derivative(const SampledPair& u);

struct CoeffTable {
    GridSpec grid;
    PhysParams params;
    double dt = 0.0;
    size_t nt = 0;

    double m = 1.0;
    std::vector<double> alpha, alphap;    // time reparametrization, t grid
    std::vector<SpectralField> beta;      // space change, t grid
    std::vector<SpectralField> beta_t;

    std::vector<double> t_of_tau;         // inverse reparametrization on the tau grid
    std::vector<double> a9;               // 1 + alpha'(t(tau)); y-independent

    // Coefficient fields on the t grid (a1..a8) and tau grid (a10..a33).
    std::vector<SpectralField> a1, a2, a3, a4, a5, a6, a7, a8;
    std::vector<SpectralField> a10, a11, a12, a13, a14, a15, a16, a17;
    std::vector<SpectralField> a18, a19, a20, a21, a22, a23, a24, a25, a26, a27;
    std::vector<SpectralField> a28, a29, a30, ell1, v1, v2;

    std::vector<double> p_shift, p_prime;          // spatial translation
    std::vector<SpectralField> a31, a32, a33;      // after the translation
    std::vector<cx> gamma0;                        // FIO phase, complex as displayed
    std::vector<double> gamma0_prime;
    std::vector<SpectralField> pm1_plus, pm1_minus;        // |j|^{-1/2} amplitude corrections
    std::vector<SpectralField> pm2_pos, pm2_neg;           // |j|^{-1} corrections per sign(j)

    // Construction diagnostics.
    double alphabeta_residual = 0.0;   // pointwise residual of the alpha/beta constraint
    double eq_residual[5] = {0, 0, 0, 0, 0};
    double a31_mean_max = 0.0;
    double gamma0_imag_max = 0.0;
    double uniform_bound_margin = 0.0;  // min over t of the 1+alpha' bound slack
};

// (m, alpha, beta) from the trajectory; quadratures are spectral in x and
// trapezoidal in t.
void compute_time_space_change(const Trajectory& traj, const DnoConfig& cfg, CoeffTable& tbl);

enum class WarpDirection { Forward, Inverse };

// (B h)(x) = h(x + beta(x)); the inverse solves y = x + beta(x) by fixed
// point iteration and interpolates trigonometrically.
SpectralField space_change_apply(const SpectralField& f, const SpectralField& beta,
                                 WarpDirection dir);

CoeffTable build_coeff_table(const Trajectory& traj, const DnoConfig& cfg);

// (eq1)-(eq5) closure with a29 = 0; fills ell1, v1, v2, a28, a30 and the
// substituted-back residuals.
void solve_M_coefficients(CoeffTable& tbl);

// p(tau) removing the spatial average of the transport coefficient.
void build_translation(CoeffTable& tbl);

enum class FioBranch { Plus, Minus };

class FioOperator {
  public:
    FioOperator() = default;
    FioOperator(const CoeffTable* tbl, FioBranch branch);

    SpectralField apply(const SpectralField& h, size_t tau_idx) const;
    SpectralField apply_inverse(const SpectralField& h, size_t tau_idx) const;
    double correction_norm() const { return correction_norm_; }

  private:
    const CoeffTable* tbl_ = nullptr;
    double sign_ = 1.0;
    double correction_norm_ = 0.0;
};

// One reduction step: u -> left(L_prev(right(u))), with a declared skeleton
// and remainder-order ceiling.
struct Stage {
    std::string name;
    std::function<SampledPair(const SampledPair&)> right;      // e.g. X
    std::function<SampledPair(const SampledPair&)> left;       // e.g. X^{-1}
    std::function<SampledPair(const SampledPair&)> right_inv;  // for round-trip tests
    std::function<SampledPair(const SampledPair&)> left_inv;
    std::function<SampledPair(const SampledPair&)> skeleton;   // declared L_k, with d_t
    double declared_order = 0.0;
};

struct Pipeline {
    GridSpec grid;
    PhysParams params;
    double dt = 0.0;
    size_t nt = 0;
    std::shared_ptr<CoeffTable> table;
    std::function<SampledPair(const SampledPair&)> base;  // full L0 (exact, with d_t)
    std::vector<Stage> stages;

    // Exact operator after conjugating through stages 1..k.
    std::function<SampledPair(const SampledPair&)> full_operator(size_t k) const;
};

Pipeline assemble_stage_operators(const Trajectory& traj, const DnoConfig& cfg);

struct ResidualReport {
    std::string stage;
    std::vector<int> probe_k;
    std::vector<double> residual;
    double fitted_slope = 0.0;
    double declared_order = 0.0;
};

// ||(X^{-1} L_{k-1} X - L_k)(e^{iky})|| / ||probe|| at the middle time slice,
// plus the log-log slope over the probe set.
ResidualReport conjugation_residual(const Pipeline& pipe, size_t stage_idx,
                                    const std::vector<int>& probe_ks);

}  // namespace hydroctrl

#endif
