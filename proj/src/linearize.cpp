#include "hydroctrl/linearize.hpp"

#include <cmath>

namespace hydroctrl {

PairField zero_pair(const GridSpec& g) { return {zero_field(g), zero_field(g)}; }

double h0_weight(int c, int k) {
    if (c == 1) return 1.0;
    if (k == 0) return 0.0;
    double ak = std::abs(static_cast<double>(k));
    return ak * ak * ak;
}

cx h0_inner(const PairField& x, const PairField& y) {
    const int n = x.a.n();
    cx acc(0.0);
    for (int i = 0; i < n; ++i) {
        int k = slot_wavenumber(i, n);
        acc += h0_weight(0, k) * x.a.raw()[static_cast<size_t>(i)] *
               std::conj(y.a.raw()[static_cast<size_t>(i)]);
        acc += x.b.raw()[static_cast<size_t>(i)] * std::conj(y.b.raw()[static_cast<size_t>(i)]);
    }
    return acc;
}

double h0_norm(const PairField& x) { return std::sqrt(std::abs(h0_inner(x, x).real())); }

double l2_pair_norm(const PairField& x) {
    double a = l2_norm(x.a), b = l2_norm(x.b);
    return std::sqrt(a * a + b * b);
}

double hs_pair_norm(const PairField& x, double s) {
    double a = sobolev_norm(x.a, {s + 1.5}, false);
    double b = sobolev_norm(x.b, {s}, false);
    return std::sqrt(a * a + b * b);
}

PairField LinearOperatorSlice::apply_dense(const PairField& x) const {
    const auto& m = dense();
    const int n = grid_.n_modes;
    const int dim = 2 * n;
    std::vector<cx> in(static_cast<size_t>(dim));
    for (int i = 0; i < n; ++i) {
        in[static_cast<size_t>(i)] = x.a.raw()[static_cast<size_t>(i)];
        in[static_cast<size_t>(n + i)] = x.b.raw()[static_cast<size_t>(i)];
    }
    std::vector<cx> out(static_cast<size_t>(dim), cx(0.0));
    for (int r = 0; r < dim; ++r) {
        cx acc(0.0);
        const cx* row = m.data() + static_cast<size_t>(r) * dim;
        for (int c = 0; c < dim; ++c) acc += row[c] * in[static_cast<size_t>(c)];
        out[static_cast<size_t>(r)] = acc;
    }
    PairField y = zero_pair(grid_);
    y.a.set_real(false);
    y.b.set_real(false);
    for (int i = 0; i < n; ++i) {
        y.a.raw()[static_cast<size_t>(i)] = out[static_cast<size_t>(i)];
        y.b.raw()[static_cast<size_t>(i)] = out[static_cast<size_t>(n + i)];
    }
    return y;
}

const std::vector<cx>& LinearOperatorSlice::dense() const {
    if (dense_) return *dense_;
    const int n = grid_.n_modes;
    const int dim = 2 * n;
    auto m = std::make_shared<std::vector<cx>>(static_cast<size_t>(dim) * dim, cx(0.0));
    for (int c = 0; c < dim; ++c) {
        PairField e = zero_pair(grid_);
        e.a.set_real(false);
        e.b.set_real(false);
        if (c < n)
            e.a.raw()[static_cast<size_t>(c)] = 1.0;
        else
            e.b.raw()[static_cast<size_t>(c - n)] = 1.0;
        PairField col = apply_(e);
        for (int r = 0; r < n; ++r) {
            (*m)[static_cast<size_t>(r) * dim + c] = col.a.raw()[static_cast<size_t>(r)];
            (*m)[static_cast<size_t>(n + r) * dim + c] = col.b.raw()[static_cast<size_t>(r)];
        }
    }
    dense_ = m;
    return *dense_;
}

namespace {

TimeSlice make_slice(double t, const StatePair& u, const PhysParams& p, const DnoConfig& cfg) {
    TimeSlice s;
    s.t = t;
    s.u = u;
    double sz = l2_norm(u.eta) + l2_norm(u.psi);
    s.flat = (sz == 0.0);
    const GridSpec& g = u.eta.grid();
    if (s.flat) {
        s.B = zero_field(g);
        s.V = zero_field(g);
        s.Bt = zero_field(g);
        s.a_coeff = constant_field(g, p.grav);
        s.ecoeffs = {zero_field(g), zero_field(g), zero_field(g), constant_field(g, 1.0)};
    } else {
        VelocityTrace tr = velocity_trace(u.eta, u.psi, cfg);
        s.B = tr.B;
        s.V = tr.V;
        s.Bt = zero_field(g);  // filled by prepare_slices
        s.a_coeff = constant_field(g, p.grav);
        s.ecoeffs = elastic_linearization(u.eta, p, cfg);
    }
    return s;
}

}  // namespace

std::vector<TimeSlice> prepare_slices(const std::vector<double>& times,
                                      const std::vector<StatePair>& states, const PhysParams& p,
                                      const DnoConfig& cfg) {
    if (times.size() < 3) throw std::invalid_argument("prepare_slices: need at least 3 samples");
    if (times.size() != states.size())
        throw std::invalid_argument("prepare_slices: times/states size mismatch");
    const size_t n = times.size();
    const double dt = times[1] - times[0];
    std::vector<TimeSlice> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) out.push_back(make_slice(times[i], states[i], p, cfg));
    for (size_t i = 0; i < n; ++i) {
        SpectralField bt = zero_field(states[0].eta.grid());
        if (i == 0) {
            bt = (-1.5) * out[0].B + 2.0 * out[1].B + (-0.5) * out[2].B;
        } else if (i + 1 == n) {
            bt = 1.5 * out[n - 1].B + (-2.0) * out[n - 2].B + 0.5 * out[n - 3].B;
        } else {
            bt = 0.5 * (out[i + 1].B - out[i - 1].B);
        }
        bt *= 1.0 / dt;
        out[i].Bt = bt;
        if (!out[i].flat) {
            out[i].a_coeff = constant_field(states[0].eta.grid(), p.grav) + bt +
                             product(out[i].V, derivative(out[i].B));
        }
    }
    return out;
}

LinearOperatorSlice pprime_slice(const TimeSlice& s, const PhysParams& p, const DnoConfig& cfg) {
    const GridSpec& g = s.u.eta.grid();
    if (s.flat) {
        PhysParams pp = p;
        auto apply = [g, pp](const PairField& x) {
            PairField y = zero_pair(g);
            y.a = apply_multiplier(x.b, [&](int k) { return cx(-dno_flat_symbol(k, g), 0.0); });
            y.b = apply_multiplier(x.a, [&](int k) {
                double k4 = std::pow(static_cast<double>(k), 4);
                return cx(pp.grav + pp.sigma * k4, 0.0);
            });
            return y;
        };
        return LinearOperatorSlice(g, apply, true);
    }
    TimeSlice sc = s;
    PhysParams pp = p;
    DnoConfig dc = cfg;
    auto apply = [sc, pp, dc, g](const PairField& x) {
        // Row 1: G(eta)(B e) + d_x(V e) - G(eta) p
        // Row 2: (g + B V_x) e + B G(eta)(B e) + sigma sum E d^j e + V d_x p - B G(eta) p
        SpectralField gbe = dn_apply(sc.u.eta, product(sc.B, x.a), dc);
        SpectralField gp = dn_apply(sc.u.eta, x.b, dc);
        PairField y = zero_pair(g);
        y.a = gbe + derivative(product(sc.V, x.a)) - gp;
        SpectralField gvx = constant_field(g, pp.grav) + product(sc.B, derivative(sc.V));
        y.b = product(gvx, x.a) + product(sc.B, gbe) +
              apply_elastic_linearization(sc.ecoeffs, x.a, pp.sigma) +
              product(sc.V, derivative(x.b)) - product(sc.B, gp);
        return y;
    };
    return LinearOperatorSlice(g, apply, false);
}

LinearOperatorSlice l0_slice(const TimeSlice& s, const PhysParams& p, const DnoConfig& cfg) {
    const GridSpec& g = s.u.eta.grid();
    if (s.flat) return pprime_slice(s, p, cfg);
    TimeSlice sc = s;
    PhysParams pp = p;
    DnoConfig dc = cfg;
    auto apply = [sc, pp, dc, g](const PairField& x) {
        PairField y = zero_pair(g);
        y.a = derivative(product(sc.V, x.a)) - dn_apply(sc.u.eta, x.b, dc);
        y.b = product(sc.a_coeff, x.a) + apply_elastic_linearization(sc.ecoeffs, x.a, pp.sigma) +
              product(sc.V, derivative(x.b));
        return y;
    };
    return LinearOperatorSlice(g, apply, false);
}

PairField good_unknown(const TimeSlice& s, const PairField& x, ConjugationDirection dir) {
    PairField y = x;
    SpectralField be = product(s.B, x.a);
    if (dir == ConjugationDirection::Forward)
        y.b += be;
    else
        y.b -= be;
    return y;
}

std::vector<LinearOperatorSlice> assemble_Pprime(const std::vector<TimeSlice>& slices,
                                                 const PhysParams& p, const DnoConfig& cfg) {
    std::vector<LinearOperatorSlice> out;
    out.reserve(slices.size());
    for (const auto& s : slices) out.push_back(pprime_slice(s, p, cfg));
    return out;
}

std::vector<LinearOperatorSlice> assemble_L0(const std::vector<TimeSlice>& slices,
                                             const PhysParams& p, const DnoConfig& cfg) {
    std::vector<LinearOperatorSlice> out;
    out.reserve(slices.size());
    for (const auto& s : slices) out.push_back(l0_slice(s, p, cfg));
    return out;
}

LinearOperatorSlice discrete_adjoint(const LinearOperatorSlice& op, const PhysParams& p) {
    const GridSpec g = op.grid();
    const int n = g.n_modes;
    const int dim = 2 * n;
    if (op.flat()) {
        PhysParams pp = p;
        auto apply = [g, pp](const PairField& x) {
            // W^{-1} A^T W for the flat multiplier matrix.
            PairField y = zero_pair(g);
            y.a = apply_multiplier(x.b, [&](int k) {
                if (k == 0) return cx(0.0);
                double k4 = std::pow(static_cast<double>(k), 4);
                return cx((pp.grav + pp.sigma * k4) / h0_weight(0, k), 0.0);
            });
            y.b = apply_multiplier(x.a, [&](int k) {
                return cx(-dno_flat_symbol(k, g) * h0_weight(0, k), 0.0);
            });
            return y;
        };
        return LinearOperatorSlice(g, apply, true);
    }
    const auto& m = op.dense();
    auto adj = std::make_shared<std::vector<cx>>(static_cast<size_t>(dim) * dim, cx(0.0));
    auto weight = [n](int idx) {
        int c = idx < n ? 0 : 1;
        int k = slot_wavenumber(idx % n, n);
        return h0_weight(c, k);
    };
    for (int i = 0; i < dim; ++i) {
        double wi = weight(i);
        for (int j = 0; j < dim; ++j) {
            double wj = weight(j);
            cx v = (wi == 0.0 || wj == 0.0) ? cx(0.0)
                                            : std::conj(m[static_cast<size_t>(j) * dim + i]) * wj / wi;
            (*adj)[static_cast<size_t>(i) * dim + j] = v;
        }
    }
    auto apply = [adj, g, n, dim](const PairField& x) {
        std::vector<cx> in(static_cast<size_t>(dim));
        for (int i = 0; i < n; ++i) {
            in[static_cast<size_t>(i)] = x.a.raw()[static_cast<size_t>(i)];
            in[static_cast<size_t>(n + i)] = x.b.raw()[static_cast<size_t>(i)];
        }
        PairField y = zero_pair(g);
        y.a.set_real(false);
        y.b.set_real(false);
        for (int r = 0; r < dim; ++r) {
            cx acc(0.0);
            const cx* row = adj->data() + static_cast<size_t>(r) * dim;
            for (int c = 0; c < dim; ++c) acc += row[c] * in[static_cast<size_t>(c)];
            if (r < n)
                y.a.raw()[static_cast<size_t>(r)] = acc;
            else
                y.b.raw()[static_cast<size_t>(r - n)] = acc;
        }
        return y;
    };
    return LinearOperatorSlice(g, apply, false);
}

}  // namespace hydroctrl
