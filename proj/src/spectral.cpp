#include "hydroctrl/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <mutex>
#include <sstream>

#include "json.hpp"

namespace hydroctrl {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Plan cache keyed by transform size. Plans are created once under a lock and
// executed on caller-owned buffers via the new-array interface.
struct FftPlans {
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
};

std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

FftPlans& plans_for(int n) {
    static std::map<int, FftPlans> cache;
    std::lock_guard<std::mutex> lock(plan_mutex());
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    FftPlans p;
    fftw_complex* buf = fftw_alloc_complex(static_cast<size_t>(n));
    p.fwd = fftw_plan_dft_1d(n, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    p.bwd = fftw_plan_dft_1d(n, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(buf);
    return cache.emplace(n, p).first->second;
}

void dft(std::vector<cx>& data, bool forward) {
    const int n = static_cast<int>(data.size());
    FftPlans& p = plans_for(n);
    auto* raw = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(forward ? p.fwd : p.bwd, raw, raw);
    if (forward) {
        const double s = 1.0 / n;
        for (auto& v : data) v *= s;
    }
}

int padded_size(int n) {
    int m = (3 * n) / 2;
    if (m % 2 != 0) ++m;
    return m;
}

// Scatter amplitudes of an N-mode field into an M-slot array (M >= N).
std::vector<cx> embed(const std::vector<cx>& c, int n, int m) {
    std::vector<cx> out(static_cast<size_t>(m), cx(0.0));
    for (int i = 0; i < n; ++i) {
        int k = slot_wavenumber(i, n);
        int j = (k >= 0) ? k : k + m;
        out[static_cast<size_t>(j)] = c[static_cast<size_t>(i)];
    }
    return out;
}

std::vector<cx> restrict_modes(const std::vector<cx>& c, int m, int n) {
    std::vector<cx> out(static_cast<size_t>(n), cx(0.0));
    for (int i = 0; i < n; ++i) {
        int k = slot_wavenumber(i, n);
        int j = (k >= 0) ? k : k + m;
        out[static_cast<size_t>(i)] = c[static_cast<size_t>(j)];
    }
    return out;
}

}  // namespace

GridSpec::GridSpec(int n, double h) : n_modes(n), depth(h) {
    if (n < 8 || n % 2 != 0) throw std::invalid_argument("GridSpec: N must be even and >= 8");
    if (!(h > 0.0)) throw std::invalid_argument("GridSpec: depth must be positive or infinite");
}

SpectralField::SpectralField(const GridSpec& g, bool real_valued)
    : grid_(g), c_(static_cast<size_t>(g.n_modes), cx(0.0)), real_(real_valued) {}

cx SpectralField::coeff(int k) const {
    const int n = grid_.n_modes;
    if (k > n / 2 || k <= -n / 2) return cx(0.0);
    return c_[static_cast<size_t>(k >= 0 ? k : k + n)];
}

void SpectralField::set_coeff(int k, cx v) {
    const int n = grid_.n_modes;
    if (k > n / 2 || k <= -n / 2) throw std::out_of_range("set_coeff: wavenumber outside grid");
    c_[static_cast<size_t>(k >= 0 ? k : k + n)] = v;
}

void SpectralField::enforce_reality() {
    const int n = grid_.n_modes;
    c_[0] = cx(c_[0].real(), 0.0);
    c_[static_cast<size_t>(n / 2)] = cx(c_[static_cast<size_t>(n / 2)].real(), 0.0);
    for (int k = 1; k < n / 2; ++k) {
        cx a = c_[static_cast<size_t>(k)];
        cx b = c_[static_cast<size_t>(n - k)];
        cx half = 0.5 * (a + std::conj(b));
        c_[static_cast<size_t>(k)] = half;
        c_[static_cast<size_t>(n - k)] = std::conj(half);
    }
    real_ = true;
}

double SpectralField::linf_grid() const {
    auto v = grid_values(*this);
    double m = 0.0;
    for (auto& z : v) m = std::max(m, std::abs(z));
    return m;
}

cx SpectralField::eval(double x) const {
    cx acc(0.0);
    const int n = grid_.n_modes;
    for (int i = 0; i < n; ++i) {
        int k = slot_wavenumber(i, n);
        acc += c_[static_cast<size_t>(i)] * std::polar(1.0, k * x);
    }
    return acc;
}

SpectralField& SpectralField::operator+=(const SpectralField& o) {
    for (size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    real_ = real_ && o.real_;
    return *this;
}

SpectralField& SpectralField::operator-=(const SpectralField& o) {
    for (size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    real_ = real_ && o.real_;
    return *this;
}

SpectralField& SpectralField::operator*=(double s) {
    for (auto& v : c_) v *= s;
    return *this;
}

SpectralField& SpectralField::operator*=(cx s) {
    for (auto& v : c_) v *= s;
    if (s.imag() != 0.0) real_ = false;
    return *this;
}

std::vector<cx> grid_values(const SpectralField& f) {
    std::vector<cx> v = f.raw();
    dft(v, false);
    return v;
}

std::vector<double> grid_values_real(const SpectralField& f) {
    auto v = grid_values(f);
    std::vector<double> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = v[i].real();
    return out;
}

SpectralField field_from_grid(const GridSpec& g, const std::vector<cx>& v, bool real_valued) {
    if (static_cast<int>(v.size()) != g.n_modes)
        throw std::invalid_argument("field_from_grid: size mismatch");
    SpectralField f(g, real_valued);
    f.raw() = v;
    dft(f.raw(), true);
    if (real_valued) f.enforce_reality();
    return f;
}

SpectralField field_from_grid_real(const GridSpec& g, const std::vector<double>& v) {
    std::vector<cx> w(v.begin(), v.end());
    return field_from_grid(g, w, true);
}

std::vector<double> grid_points(const GridSpec& g) {
    std::vector<double> x(static_cast<size_t>(g.n_modes));
    for (int i = 0; i < g.n_modes; ++i) x[static_cast<size_t>(i)] = kTwoPi * i / g.n_modes;
    return x;
}

SpectralField zero_field(const GridSpec& g) { return SpectralField(g, true); }

SpectralField mode_field(const GridSpec& g, int k, cx amp) {
    SpectralField f(g, false);
    f.set_coeff(k, amp);
    return f;
}

SpectralField cosine_field(const GridSpec& g, int k, double amp) {
    SpectralField f(g, true);
    if (k == 0) {
        f.set_coeff(0, amp);
    } else {
        f.set_coeff(k, 0.5 * amp);
        f.set_coeff(-k, 0.5 * amp);
    }
    return f;
}

SpectralField sine_field(const GridSpec& g, int k, double amp) {
    SpectralField f(g, true);
    if (k != 0) {
        f.set_coeff(k, cx(0.0, -0.5 * amp));
        f.set_coeff(-k, cx(0.0, 0.5 * amp));
    }
    return f;
}

SpectralField constant_field(const GridSpec& g, double v) {
    SpectralField f(g, true);
    f.set_coeff(0, v);
    return f;
}

SpectralField apply_multiplier(const SpectralField& f, const Symbol& symbol) {
    SpectralField out(f.grid(), f.is_real());
    const int n = f.n();
    bool hermitian = true;
    for (int i = 0; i < n; ++i) {
        int k = slot_wavenumber(i, n);
        cx s = symbol(k);
        if (!std::isfinite(s.real()) || !std::isfinite(s.imag()))
            throw std::invalid_argument("apply_multiplier: non-finite symbol at k=" + std::to_string(k));
        out.raw()[static_cast<size_t>(i)] = s * f.raw()[static_cast<size_t>(i)];
        if (k > 0 && k < n / 2) {
            cx sm = symbol(-k);
            if (std::abs(sm - std::conj(s)) > 1e-14 * (1.0 + std::abs(s))) hermitian = false;
        }
    }
    out.set_real(f.is_real() && hermitian);
    return out;
}

SpectralField derivative(const SpectralField& f, int order) {
    SpectralField out(f.grid(), f.is_real());
    const int n = f.n();
    for (int i = 0; i < n; ++i) {
        int k = slot_wavenumber(i, n);
        cx ik = std::pow(cx(0.0, k), order);
        out.raw()[static_cast<size_t>(i)] = ik * f.raw()[static_cast<size_t>(i)];
    }
    // Nyquist slot of an odd derivative has no conjugate partner; zero it for
    // real fields so reality is preserved.
    if (f.is_real() && order % 2 == 1) out.raw()[static_cast<size_t>(n / 2)] = 0.0;
    return out;
}

SpectralField hilbert(const SpectralField& f) {
    return apply_multiplier(f, [](int k) {
        if (k == 0) return cx(0.0);
        return cx(0.0, k > 0 ? -1.0 : 1.0);
    });
}

SpectralField antiderivative(const SpectralField& f) {
    SpectralField out(f.grid(), f.is_real());
    const int n = f.n();
    for (int i = 0; i < n; ++i) {
        int k = slot_wavenumber(i, n);
        out.raw()[static_cast<size_t>(i)] =
            (k == 0) ? cx(0.0) : f.raw()[static_cast<size_t>(i)] / cx(0.0, k);
    }
    if (f.is_real()) out.raw()[static_cast<size_t>(n / 2)] = 0.0;
    return out;
}

SpectralField abs_derivative_pow(const SpectralField& f, double alpha) {
    return apply_multiplier(f, [alpha](int k) {
        if (k == 0) return cx(0.0);
        return cx(std::pow(std::abs(static_cast<double>(k)), alpha), 0.0);
    });
}

double dno_flat_symbol(int k, const GridSpec& g) {
    double ak = std::abs(static_cast<double>(k));
    if (g.infinite_depth()) return ak;
    if (k == 0) return 0.0;
    return ak * std::tanh(g.depth * ak);
}

double dispersion_L_symbol(int k, const GridSpec& g, double grav, double sigma) {
    double k4 = std::pow(static_cast<double>(k), 4);
    return std::sqrt((grav + sigma * k4) * dno_flat_symbol(k, g));
}

double tau_symbol(int k, double m, double grav, double sigma) {
    if (k == 0) return 0.0;
    double ak = std::abs(static_cast<double>(k));
    return std::sqrt(m * ak * (grav + sigma * ak * ak * ak * ak));
}

double lambda_symbol(int k, double grav, double sigma) {
    if (k == 0) return 1.0;
    double ak = std::abs(static_cast<double>(k));
    return std::sqrt((grav + sigma * ak * ak * ak * ak) / ak);
}

namespace {

bool is_pure_constant(const SpectralField& f) {
    const auto& c = f.raw();
    for (size_t i = 1; i < c.size(); ++i)
        if (c[i] != cx(0.0)) return false;
    return true;
}

}  // namespace

SpectralField product(const SpectralField& a, const SpectralField& b) {
    if (!(a.grid() == b.grid())) throw std::invalid_argument("product: grid mismatch");
    // constant factors multiply exactly
    if (is_pure_constant(a)) {
        SpectralField out = b;
        out *= a.raw()[0];
        out.set_real(out.is_real() && a.is_real());
        return out;
    }
    if (is_pure_constant(b)) {
        SpectralField out = a;
        out *= b.raw()[0];
        out.set_real(out.is_real() && b.is_real());
        return out;
    }
    const int n = a.n();
    const int m = padded_size(n);
    std::vector<cx> pa = embed(a.raw(), n, m);
    std::vector<cx> pb = embed(b.raw(), n, m);
    dft(pa, false);
    dft(pb, false);
    for (int i = 0; i < m; ++i) pa[static_cast<size_t>(i)] *= pb[static_cast<size_t>(i)];
    dft(pa, true);
    SpectralField out(a.grid(), a.is_real() && b.is_real());
    out.raw() = restrict_modes(pa, m, n);
    if (out.is_real()) out.enforce_reality();
    return out;
}

SpectralField pointwise_map(const SpectralField& a, const std::function<double(double)>& fn) {
    const int n = a.n();
    const int m = padded_size(n);
    std::vector<cx> pa = embed(a.raw(), n, m);
    dft(pa, false);
    for (int i = 0; i < m; ++i) pa[static_cast<size_t>(i)] = cx(fn(pa[static_cast<size_t>(i)].real()), 0.0);
    dft(pa, true);
    SpectralField out(a.grid(), true);
    out.raw() = restrict_modes(pa, m, n);
    out.enforce_reality();
    return out;
}

SpectralField grid_weight_product(const SpectralField& f, const std::vector<double>& w) {
    auto v = grid_values(f);
    if (w.size() != v.size()) throw std::invalid_argument("grid_weight_product: size mismatch");
    for (size_t i = 0; i < v.size(); ++i) v[i] *= w[i];
    return field_from_grid(f.grid(), v, f.is_real());
}

double sobolev_norm(const SpectralField& f, SobolevExponent s, bool homogeneous) {
    if (!std::isfinite(s.s)) throw std::invalid_argument("sobolev_norm: exponent must be finite");
    const int n = f.n();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        int k = slot_wavenumber(i, n);
        double w;
        if (homogeneous) {
            if (k == 0) continue;
            w = std::pow(std::abs(static_cast<double>(k)), 2.0 * s.s);
        } else {
            w = std::pow(1.0 + static_cast<double>(k) * k, s.s);
        }
        acc += w * std::norm(f.raw()[static_cast<size_t>(i)]);
    }
    return std::sqrt(acc);
}

double l2_norm(const SpectralField& f) {
    double acc = 0.0;
    for (auto& v : f.raw()) acc += std::norm(v);
    return std::sqrt(acc);
}

cx l2_inner(const SpectralField& a, const SpectralField& b) {
    cx acc(0.0);
    for (size_t i = 0; i < a.raw().size(); ++i) acc += a.raw()[i] * std::conj(b.raw()[i]);
    return acc;
}

double pair_norm(const StatePair& u, SobolevExponent s, bool homogeneous) {
    double a = sobolev_norm(u.eta, {s.s + 1.5}, homogeneous);
    double b = sobolev_norm(u.psi, s, homogeneous);
    return std::sqrt(a * a + b * b);
}

SpectralField smoothing_projector(const SpectralField& f, int j) {
    if (j < 0) throw std::invalid_argument("smoothing_projector: j must be nonnegative");
    double cutoff = std::pow(2.0, j);
    SpectralField out = f;
    const int n = f.n();
    for (int i = 0; i < n; ++i) {
        if (std::abs(static_cast<double>(slot_wavenumber(i, n))) > cutoff)
            out.raw()[static_cast<size_t>(i)] = 0.0;
    }
    return out;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string field_to_csv(const SpectralField& f) {
    std::ostringstream os;
    os << "k,re,im\n";
    const int n = f.n();
    for (int k = -n / 2 + 1; k <= n / 2; ++k) {
        cx c = f.coeff(k);
        os << k << "," << format_double(c.real()) << "," << format_double(c.imag()) << "\n";
    }
    return os.str();
}

SpectralField field_from_csv(const GridSpec& g, const std::string& csv, bool real_valued) {
    SpectralField f(g, real_valued);
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        std::getline(ls, tok, ',');
        int k = std::stoi(tok);
        std::getline(ls, tok, ',');
        double re = std::stod(tok);
        std::getline(ls, tok, ',');
        double im = std::stod(tok);
        f.set_coeff(k, cx(re, im));
    }
    return f;
}

std::string field_to_json(const SpectralField& f) {
    nlohmann::json j;
    j["n_modes"] = f.n();
    j["depth"] = f.grid().infinite_depth() ? nlohmann::json("infinite") : nlohmann::json(f.grid().depth);
    j["real"] = f.is_real();
    nlohmann::json coeffs = nlohmann::json::array();
    const int n = f.n();
    for (int k = -n / 2 + 1; k <= n / 2; ++k) {
        cx c = f.coeff(k);
        coeffs.push_back({k, c.real(), c.imag()});
    }
    j["coeffs"] = coeffs;
    return j.dump();
}

SpectralField field_from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    double depth = kInfiniteDepth;
    if (!j["depth"].is_string()) depth = j["depth"].get<double>();
    GridSpec g(j["n_modes"].get<int>(), depth);
    SpectralField f(g, j.value("real", true));
    for (auto& row : j["coeffs"]) {
        f.set_coeff(row[0].get<int>(), cx(row[1].get<double>(), row[2].get<double>()));
    }
    return f;
}

std::string field_grid_csv(const SpectralField& f) {
    std::ostringstream os;
    os << "x,value\n";
    auto x = grid_points(f.grid());
    auto v = grid_values(f);
    for (size_t i = 0; i < x.size(); ++i)
        os << format_double(x[i]) << "," << format_double(v[i].real()) << "\n";
    return os.str();
}

}  // namespace hydroctrl
