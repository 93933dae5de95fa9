#ifndef HYDROCTRL_SPECTRAL_HPP
#define HYDROCTRL_SPECTRAL_HPP

#include <complex>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

// Periodic scalar fields on [0,2pi) stored as Fourier amplitudes c_k,
// f(x) = sum_{k in (-N/2, N/2]} c_k e^{ikx}, plus the constant-coefficient
// operator algebra (multipliers, Hilbert transform, antiderivative, Sobolev
// norms, dyadic truncations) everything else is built from.

namespace hydroctrl {

using cx = std::complex<double>;

constexpr double kInfiniteDepth = std::numeric_limits<double>::infinity();

struct GridSpec {
    int n_modes = 0;        // N, even, >= 8
    double depth = kInfiniteDepth;  // h > 0 or infinite

    GridSpec() = default;
    GridSpec(int n, double h);

    bool infinite_depth() const { return std::isinf(depth); }
    bool operator==(const GridSpec& o) const {
        return n_modes == o.n_modes &&
               (depth == o.depth || (infinite_depth() && o.infinite_depth()));
    }
};

// Wavenumber of storage slot i (FFTW layout: 0,1,...,N/2,-N/2+1,...,-1).
inline int slot_wavenumber(int i, int n) { return (i <= n / 2) ? i : i - n; }

class SpectralField {
  public:
    SpectralField() = default;
    explicit SpectralField(const GridSpec& g, bool real_valued = true);

    const GridSpec& grid() const { return grid_; }
    int n() const { return grid_.n_modes; }
    bool is_real() const { return real_; }
    void set_real(bool r) { real_ = r; }

    cx coeff(int k) const;         // k in (-N/2, N/2]
    void set_coeff(int k, cx v);
    const std::vector<cx>& raw() const { return c_; }
    std::vector<cx>& raw() { return c_; }

    cx mean() const { return c_[0]; }
    void zero_mean() { c_[0] = 0.0; }

    // Enforce c_{-k} = conj(c_k), real Nyquist slot; used after grid round trips.
    void enforce_reality();

    double linf_grid() const;      // max |f(x_i)| over the collocation grid
    cx eval(double x) const;       // direct evaluation of the trig polynomial

    SpectralField& operator+=(const SpectralField& o);
    SpectralField& operator-=(const SpectralField& o);
    SpectralField& operator*=(double s);
    SpectralField& operator*=(cx s);

    friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
    friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
    friend SpectralField operator*(double s, SpectralField a) { return a *= s; }
    friend SpectralField operator*(cx s, SpectralField a) { return a *= s; }

  private:
    GridSpec grid_;
    std::vector<cx> c_;
    bool real_ = true;
};

// ---- grid <-> spectral ----

std::vector<cx> grid_values(const SpectralField& f);              // N points x_j = 2pi j/N
std::vector<double> grid_values_real(const SpectralField& f);
SpectralField field_from_grid(const GridSpec& g, const std::vector<cx>& v, bool real_valued);
SpectralField field_from_grid_real(const GridSpec& g, const std::vector<double>& v);
std::vector<double> grid_points(const GridSpec& g);

// ---- constructors ----

SpectralField zero_field(const GridSpec& g);
SpectralField mode_field(const GridSpec& g, int k, cx amp);           // amp * e^{ikx}, complex
SpectralField cosine_field(const GridSpec& g, int k, double amp);     // amp * cos(kx)
SpectralField sine_field(const GridSpec& g, int k, double amp);       // amp * sin(kx)
SpectralField constant_field(const GridSpec& g, double v);

// ---- operator algebra ----

using Symbol = std::function<cx(int)>;

// coeff_out(k) = symbol(k) coeff_in(k); throws on non-finite symbol values.
SpectralField apply_multiplier(const SpectralField& f, const Symbol& symbol);

SpectralField derivative(const SpectralField& f, int order = 1);
SpectralField hilbert(const SpectralField& f);        // symbol -i sign(k), so d/dx = -|D| H
SpectralField antiderivative(const SpectralField& f); // zero-mean primitive
SpectralField abs_derivative_pow(const SpectralField& f, double alpha);  // |D|^alpha, kills k=0

// Named dispersion symbols.
double dno_flat_symbol(int k, const GridSpec& g);                  // |k| tanh(h|k|), or |k|
double dispersion_L_symbol(int k, const GridSpec& g, double grav, double sigma);  // sqrt((g+sigma k^4) d(k))
double tau_symbol(int k, double m, double grav, double sigma);     // sqrt(m|k|(g+sigma k^4)), 0 at k=0
double lambda_symbol(int k, double grav, double sigma);            // sqrt((g+sigma k^4)/|k|), 1 at k=0

// ---- products (2/3-rule dealiased) ----

SpectralField product(const SpectralField& a, const SpectralField& b);
// Pointwise map applied on the padded grid, e.g. w -> (1+w)^{-5/2}.
SpectralField pointwise_map(const SpectralField& a, const std::function<double(double)>& fn);
// Pointwise product with grid-sampled weights (no padding; preserves grid support).
SpectralField grid_weight_product(const SpectralField& f, const std::vector<double>& w);

// ---- norms ----

struct SobolevExponent {
    double s = 0.0;
};

double sobolev_norm(const SpectralField& f, SobolevExponent s, bool homogeneous = true);
double l2_norm(const SpectralField& f);   // sqrt(sum |c_k|^2) = ||f||_{L^2}/sqrt(2pi)
cx l2_inner(const SpectralField& a, const SpectralField& b);  // sum a_k conj(b_k)

struct StatePair {
    SpectralField eta;  // zero mean, real
    SpectralField psi;  // real
};

// ||(eta,psi)||_{H^s} = sqrt(||eta||_{H^{s+3/2}}^2 + ||psi||_{H^s}^2)
double pair_norm(const StatePair& u, SobolevExponent s, bool homogeneous = false);

// ---- smoothing ----

SpectralField smoothing_projector(const SpectralField& f, int j);  // keep |k| <= 2^j

// ---- serialization ----

std::string field_to_csv(const SpectralField& f);                // k,Re,Im
SpectralField field_from_csv(const GridSpec& g, const std::string& csv, bool real_valued = true);
std::string field_to_json(const SpectralField& f);               // {n_modes, depth, coeffs}
SpectralField field_from_json(const std::string& json_text);
std::string field_grid_csv(const SpectralField& f);              // x,value samples for plotting

// Round-trip safe double formatting used by all writers.
std::string format_double(double v);

}  // namespace hydroctrl

#endif
