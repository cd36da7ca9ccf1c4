#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dyntomo/common.hpp"
#include "dyntomo/io.hpp"
#include "dyntomo/metrics.hpp"
#include "dyntomo/pipeline.hpp"

namespace py = pybind11;
using namespace dyntomo;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array image_to_array(const ImageSequence& u) {
    Array a({u.n_t, u.n, u.n});
    std::copy(u.data.begin(), u.data.end(), a.mutable_data());
    return a;
}

ImageSequence array_to_image(const Array& a) {
    if (a.ndim() != 3 || a.shape(1) != a.shape(2))
        throw DimensionError("expected an array of shape (n_t, n, n)");
    ImageSequence u(a.shape(0), a.shape(1));
    std::copy(a.data(), a.data() + a.size(), u.data.begin());
    return u;
}

Array flow_to_array(const FlowSequence& v) {
    Array a({v.count, std::size_t{2}, v.n, v.n});
    std::copy(v.data.begin(), v.data.end(), a.mutable_data());
    return a;
}

py::list sinogram_to_list(const SinogramStack& m) {
    py::list steps;
    for (const auto& st : m.steps) {
        Array angles(static_cast<py::ssize_t>(st.angles.size()));
        std::copy(st.angles.begin(), st.angles.end(), angles.mutable_data());
        Array values({st.angles.size(), st.n_bins});
        std::copy(st.values.begin(), st.values.end(), values.mutable_data());
        steps.append(py::make_tuple(angles, values));
    }
    return steps;
}

SinogramStack list_to_sinogram(const py::list& steps) {
    SinogramStack m;
    for (const auto& item : steps) {
        const auto pair = item.cast<py::tuple>();
        const auto angles = pair[0].cast<Array>();
        const auto values = pair[1].cast<Array>();
        if (values.ndim() != 2 || values.shape(0) != angles.shape(0))
            throw DimensionError("sinogram step values must have shape (n_angles, n_bins)");
        SinogramStep st;
        st.angles.assign(angles.data(), angles.data() + angles.size());
        st.n_bins = values.shape(1);
        st.values.assign(values.data(), values.data() + values.size());
        m.steps.push_back(std::move(st));
    }
    return m;
}

RunConfig parse(const std::string& text) { return config_from_json(json::parse(text)); }

}  // namespace

PYBIND11_MODULE(_dyntomo, m) {
    m.doc() = "Dynamic sparse-angle tomography with joint motion estimation";

    py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);

    m.def("default_config", [] { return to_json(RunConfig{}).dump(); });
    m.def("normalize_config", [](const std::string& c) { return to_json(parse(c)).dump(); });
    m.def("set_num_threads", &set_num_threads);

    m.def("schedule", [](const std::string& c) {
        const auto s = build_schedule(parse(c));
        return s.per_step;
    });

    m.def("simulate", [](const std::string& c) {
        SimulateOutput out;
        {
            py::gil_scoped_release release;
            out = simulate(parse(c));
        }
        py::dict d;
        d["sinogram"] = sinogram_to_list(out.sinogram);
        d["truth"] = image_to_array(out.truth);
        d["summary"] = out.summary;
        return d;
    });

    m.def("reconstruct", [](const std::string& c, const py::list& sinogram) {
        const RunConfig cfg = parse(c);
        const SinogramStack data = list_to_sinogram(sinogram);
        JointResult r;
        {
            py::gil_scoped_release release;
            r = reconstruct(cfg, data);
        }
        py::dict d;
        d["u"] = image_to_array(r.u);
        d["v"] = flow_to_array(r.v);
        d["energy"] = r.energy_trace;
        d["r_main"] = r.outer_residual_trace;
        d["converged"] = r.converged;
        return d;
    });

    m.def("forward", [](const std::string& c, const std::vector<std::vector<double>>& angles, const Array& u) {
        const RunConfig cfg = parse(c);
        const auto op = build_operator(cfg.grid, cfg.effective_detector(), angles);
        return sinogram_to_list(forward(op, array_to_image(u)));
    });

    m.def("evaluate", [](const Array& recon, const Array& truth) {
        const auto r = evaluate(array_to_image(recon), array_to_image(truth));
        py::dict d;
        d["rel_l1"] = r.rel_l1;
        d["rel_l2"] = r.rel_l2;
        d["ssim"] = r.ssim;
        d["per_frame_ssim"] = r.per_frame_ssim;
        return d;
    });

    m.def("table", [](const std::string& c, const std::vector<std::pair<std::string, int>>& cells) {
        std::vector<TableCell> tc;
        for (const auto& [proto, p] : cells) tc.push_back({proto, p});
        const RunConfig cfg = parse(c);
        std::string csv;
        {
            py::gil_scoped_release release;
            csv = table_csv(run_table_rows(cfg, tc.empty() ? default_table_cells() : tc));
        }
        return csv;
    });
}
