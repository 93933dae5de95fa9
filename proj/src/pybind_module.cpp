#include <pybind11/complex.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hydroctrl/control.hpp"
#include "hydroctrl/harness.hpp"

namespace py = pybind11;
using namespace hydroctrl;

namespace {

GridSpec make_grid(int n, double depth) { return GridSpec(n, depth); }

SpectralField field_from_array(const GridSpec& g, py::array_t<std::complex<double>> coeffs,
                               bool real_valued) {
    auto buf = coeffs.request();
    if (buf.ndim != 1 || buf.shape[0] != g.n_modes)
        throw std::invalid_argument("coefficient array must have length n_modes");
    SpectralField f(g, real_valued);
    auto* ptr = static_cast<std::complex<double>*>(buf.ptr);
    for (int i = 0; i < g.n_modes; ++i) f.raw()[static_cast<size_t>(i)] = ptr[i];
    return f;
}

py::array_t<std::complex<double>> field_to_array(const SpectralField& f) {
    py::array_t<std::complex<double>> out(static_cast<size_t>(f.n()));
    auto buf = out.request();
    auto* ptr = static_cast<std::complex<double>*>(buf.ptr);
    for (int i = 0; i < f.n(); ++i) ptr[i] = f.raw()[static_cast<size_t>(i)];
    return out;
}

}  // namespace

PYBIND11_MODULE(_hydroctrl, m) {
    m.doc() = "Pseudospectral periodic hydroelastic waves: operators, reduction, and control";

    py::class_<GridSpec>(m, "GridSpec")
        .def(py::init(&make_grid), py::arg("n_modes"), py::arg("depth") = kInfiniteDepth)
        .def_readonly("n_modes", &GridSpec::n_modes)
        .def_readonly("depth", &GridSpec::depth)
        .def("infinite_depth", &GridSpec::infinite_depth);

    py::class_<PhysParams>(m, "PhysParams")
        .def(py::init([](double g, double s) {
                 PhysParams p{g, s};
                 p.validate();
                 return p;
             }),
             py::arg("g") = 1.0, py::arg("sigma") = 1.0)
        .def_readwrite("g", &PhysParams::grav)
        .def_readwrite("sigma", &PhysParams::sigma);

    py::class_<SpectralField>(m, "SpectralField")
        .def(py::init(&field_from_array), py::arg("grid"), py::arg("coeffs"),
             py::arg("real_valued") = true)
        .def("coeffs", &field_to_array)
        .def("grid_values",
             [](const SpectralField& f) {
                 auto v = grid_values(f);
                 py::array_t<std::complex<double>> out(v.size());
                 std::copy(v.begin(), v.end(),
                           static_cast<std::complex<double>*>(out.request().ptr));
                 return out;
             })
        .def("coeff", &SpectralField::coeff)
        .def("is_real", &SpectralField::is_real);

    m.def("zero_field", &zero_field);
    m.def("cosine_field", &cosine_field);
    m.def("sine_field", &sine_field);
    m.def("mode_field", &mode_field);
    m.def(
        "field_from_grid",
        [](const GridSpec& g, py::array_t<double> vals) {
            auto buf = vals.request();
            std::vector<double> v(static_cast<double*>(buf.ptr),
                                  static_cast<double*>(buf.ptr) + buf.shape[0]);
            return field_from_grid_real(g, v);
        },
        py::arg("grid"), py::arg("values"));

    m.def(
        "apply_multiplier",
        [](const SpectralField& f, const std::function<std::complex<double>(int)>& sym) {
            return apply_multiplier(f, sym);
        },
        py::arg("field"), py::arg("symbol"));
    m.def("hilbert", &hilbert);
    m.def("antiderivative", &antiderivative);
    m.def("derivative", &derivative, py::arg("field"), py::arg("order") = 1);
    m.def(
        "sobolev_norm",
        [](const SpectralField& f, double s, bool hom) { return sobolev_norm(f, {s}, hom); },
        py::arg("field"), py::arg("s"), py::arg("homogeneous") = true);
    m.def("smoothing_projector", &smoothing_projector);
    m.def("product", &product);
    m.def("dno_flat_symbol", &dno_flat_symbol);
    m.def("tau_symbol", &tau_symbol);

    py::class_<DnoConfig>(m, "DnoConfig")
        .def(py::init<>())
        .def_readwrite("expansion_order", &DnoConfig::expansion_order)
        .def_readwrite("slope_guard", &DnoConfig::slope_guard);

    m.def(
        "dn_apply",
        [](const SpectralField& eta, const SpectralField& psi, const DnoConfig& cfg) {
            return dn_apply(eta, psi, cfg);
        },
        py::arg("eta"), py::arg("psi"), py::arg("cfg") = DnoConfig());
    m.def(
        "shape_derivative",
        [](const SpectralField& eta, const SpectralField& psi, const SpectralField& etat,
           const DnoConfig& cfg) { return shape_derivative(eta, psi, etat, cfg); },
        py::arg("eta"), py::arg("psi"), py::arg("eta_tilde"), py::arg("cfg") = DnoConfig());
    m.def(
        "velocity_trace",
        [](const SpectralField& eta, const SpectralField& psi, const DnoConfig& cfg) {
            VelocityTrace tr = velocity_trace(eta, psi, cfg);
            return py::make_tuple(tr.B, tr.V);
        },
        py::arg("eta"), py::arg("psi"), py::arg("cfg") = DnoConfig());

    m.def(
        "elastic_force",
        [](const SpectralField& eta, const PhysParams& p) {
            return elastic_force(eta, p, DnoConfig());
        },
        py::arg("eta"), py::arg("params"));

    m.def(
        "simulate",
        [](const GridSpec& g, const PhysParams& p, const SpectralField& eta0,
           const SpectralField& psi0, double T, double dt) {
            StepperConfig cfg;
            cfg.dt = dt;
            auto zero = [g](double) { return zero_field(g); };
            Trajectory tr = solve_nonlinear({eta0, psi0}, zero, T, cfg, p, g);
            return py::make_tuple(tr.states.back().eta, tr.states.back().psi, tr.dt,
                                  tr.size());
        },
        py::arg("grid"), py::arg("params"), py::arg("eta0"), py::arg("psi0"), py::arg("T"),
        py::arg("dt") = 0.0);

    m.def(
        "ingham_ratio",
        [](double T, int n_max, int trials, double mconst, const PhysParams& p, uint64_t seed) {
            IngamReport rep = ingham_ratio(T, n_max, trials, mconst, p, seed);
            return py::make_tuple(rep.min_ratio, rep.ratios);
        },
        py::arg("T"), py::arg("n_max"), py::arg("trials"), py::arg("m") = 1.0,
        py::arg("params") = PhysParams(), py::arg("seed") = 1234);

    m.def(
        "hum_control_flat",
        [](const GridSpec& g, const PhysParams& p, double T, double dt,
           std::vector<std::pair<double, double>> omega, const SpectralField& eta_in,
           const SpectralField& psi_in, double cg_tol) {
            ControlProblem prob;
            prob.T = T;
            for (auto& iv : omega) prob.omega.push_back({iv.first, iv.second});
            prob.cg_tol = cg_tol;
            Trajectory traj = flat_trajectory(g, p, T, dt);
            LinearizedSystem sys(traj, p, DnoConfig());
            ControlResult res = hum_control(sys, {eta_in, psi_in}, zero_pair(g), nullptr, prob);
            return py::make_tuple(res.final_error_h0, res.gramian_iters, res.control_sup_h0);
        },
        py::arg("grid"), py::arg("params"), py::arg("T"), py::arg("dt"), py::arg("omega"),
        py::arg("eta_in"), py::arg("psi_in"), py::arg("cg_tol") = 1e-10);
}
