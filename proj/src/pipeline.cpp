#include "dyntomo/pipeline.hpp"

#include <cmath>
#include <sstream>

#include "dyntomo/common.hpp"
#include "dyntomo/geometry.hpp"
#include "dyntomo/phantom.hpp"

namespace dyntomo {

json sinogram_header(const RunConfig& c, const AngleSchedule& schedule) {
    const DetectorSpec det = c.effective_detector();
    json h;
    h["protocol"] = c.schedule.protocol;
    h["schedule_label"] = schedule.label;
    h["seed"] = schedule.seed ? *schedule.seed : c.seed;
    h["global_seed"] = c.seed;
    h["n_t"] = schedule.n_t();
    h["grid"] = {{"n", c.grid.n}, {"pixel_size", c.grid.pixel_size}, {"origin", {c.grid.origin_x, c.grid.origin_y}}};
    h["detector"] = {{"n_bins", det.n_bins}, {"bin_spacing", det.bin_spacing}};
    h["angle_convention"] = "ray direction (cos t, sin t), offset along (-sin t, cos t), bin b at (b - (n_bins-1)/2) * spacing";
    return h;
}

SimulateOutput simulate(const RunConfig& c) {
    c.validate();
    SimulateOutput out;
    out.schedule = build_schedule(c);
    const DetectorSpec det = c.effective_detector();
    out.sinogram = simulate_sinogram(c.phantom, out.schedule, c.grid, det, c.noise_level, c.noise_seed());
    out.truth = render_sequence(c.phantom);
    std::ostringstream s;
    s << out.schedule.n_t() << " steps, " << out.schedule.total_angles() * det.n_bins << " rays, noise level "
      << format_double(c.noise_level);
    out.summary = s.str();
    return out;
}

SimulateOutput run_simulate(const RunConfig& c, const fs::path& out_dir) {
    SimulateOutput out = simulate(c);
    json meta = sinogram_header(c, out.schedule);
    meta["config"] = to_json(c);
    write_sinogram(out_dir / kSinogramFile, out.sinogram, meta);
    write_image_sequence(out_dir / kTruthFile, out.truth, {{"kind", "truth"}});
    return out;
}

namespace {

void expect_equal(const json& header, const std::string& key, const json& want, const std::string& label) {
    if (!header.contains(key)) throw std::invalid_argument("sinogram header lacks " + label);
    if (header.at(key) != want)
        throw std::invalid_argument("geometry mismatch: " + label + " is " + header.at(key).dump() +
                                    " in the sinogram header but " + want.dump() + " in the config");
}

}  // namespace

void check_header_geometry(const json& header, const RunConfig& c) {
    const DetectorSpec det = c.effective_detector();
    if (!header.contains("grid") || !header.contains("detector"))
        throw std::invalid_argument("sinogram header lacks grid/detector geometry");
    expect_equal(header["grid"], "n", c.grid.n, "grid.n");
    expect_equal(header["grid"], "pixel_size", c.grid.pixel_size, "grid.pixel_size");
    expect_equal(header["grid"], "origin", json::array({c.grid.origin_x, c.grid.origin_y}), "grid.origin");
    expect_equal(header["detector"], "n_bins", det.n_bins, "detector.n_bins");
    expect_equal(header["detector"], "bin_spacing", det.bin_spacing, "detector.bin_spacing");
}

JointResult reconstruct(const RunConfig& c, const SinogramStack& m, const OuterCallback& cb) {
    c.solver.validate();
    const DetectorSpec det = c.effective_detector();
    std::vector<std::vector<double>> angles;
    for (const auto& st : m.steps) {
        if (st.n_bins != det.n_bins)
            throw std::invalid_argument("sinogram has " + std::to_string(st.n_bins) + " bins, config detector " +
                                        std::to_string(det.n_bins));
        angles.push_back(st.angles);
    }
    if (angles.empty()) throw std::invalid_argument("sinogram has no time steps");
    const BlockDiagonalOperator op = build_operator(c.grid, det, angles);
    if (c.solver.pyramid_levels > 1) return joint_solve_pyramid(op, m, c.solver, cb);
    return joint_solve(op, m, c.solver, nullptr, nullptr, cb);
}

JointResult run_reconstruct(const RunConfig& c, const fs::path& sinogram_path, const fs::path& out_dir,
                            const OuterCallback& cb) {
    json header;
    const SinogramStack m = read_sinogram(sinogram_path, &header);
    check_header_geometry(header, c);
    JointResult r = reconstruct(c, m, cb);
    json meta = {{"kind", "reconstruction"}, {"converged", r.converged}, {"outer_iterations", r.records.size()}};
    write_image_sequence(out_dir / kReconFile, r.u, meta);
    write_flow(out_dir / kFlowFile, r.v, {{"kind", "flow"}, {"units", "pixels per step"}});
    atomic_write(out_dir / kTraceFile, trace_csv(r.records));
    return r;
}

MetricReport run_evaluate(const fs::path& recon_path, const fs::path& truth_path, const fs::path& out_dir,
                          const std::string& label) {
    const ImageSequence recon = read_image_sequence(recon_path);
    const ImageSequence truth = read_image_sequence(truth_path);
    MetricReport r = evaluate(recon, truth, label);
    atomic_write(out_dir / kMetricsCsvFile, metric_csv({r}));
    atomic_write(out_dir / kMetricsJsonFile, metric_json(r).dump(2) + "\n");
    return r;
}

std::vector<TableCell> default_table_cells() {
    std::vector<TableCell> cells;
    for (const char* proto : {"small_incr_1", "small_incr_2", "tracking", "randomized"})
        for (int p : {1, 2}) cells.push_back({proto, p});
    return cells;
}

void apply_protocol(ScheduleConfig& s, const std::string& name) {
    constexpr std::string_view prefix = "small_incr_";
    if (name.starts_with(prefix)) {
        const std::string digits = name.substr(prefix.size());
        std::size_t k = 0, used = 0;
        try {
            k = std::stoul(digits, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != digits.size() || k == 0)
            throw std::invalid_argument("unknown protocol '" + name + "'");
        s.protocol = "small_increments";
        s.k = k;
    } else if (name == "small_increments" || name == "tracking" || name == "randomized") {
        s.protocol = name;
    } else {
        throw std::invalid_argument("unknown protocol '" + name +
                                    "' (expected small_incr_<k>, tracking or randomized)");
    }
}

RunConfig cell_config(const RunConfig& base, const TableCell& cell) {
    RunConfig c = base;
    apply_protocol(c.schedule, cell.protocol);
    const SolverParams ref = reference_params(cell.p);
    c.solver.p = ref.p;
    c.solver.alpha = ref.alpha;
    c.solver.beta = ref.beta;
    c.solver.gamma = ref.gamma;
    return c;
}

std::vector<TableRow> run_table_rows(const RunConfig& base, const std::vector<TableCell>& cells) {
    std::vector<TableRow> rows;
    for (const auto& cell : cells) {
        TableRow row;
        row.cell = cell;
        try {
            const RunConfig c = cell_config(base, cell);
            const SimulateOutput sim = simulate(c);
            const JointResult r = reconstruct(c, sim.sinogram);
            row.report = evaluate(r.u, sim.truth, c.schedule.label());
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string table_csv(const std::vector<TableRow>& rows) {
    std::string out = "protocol,fidelity,rel_l1,rel_l2,ssim,status\n";
    for (const auto& r : rows) {
        out += r.cell.protocol + "," + (r.cell.p == 2 ? "L2" : "L1") + ",";
        if (r.ok)
            out += format_double(r.report.rel_l1) + "," + format_double(r.report.rel_l2) + "," +
                   format_double(r.report.ssim) + ",ok\n";
        else
            out += "nan,nan,nan,failed\n";
    }
    return out;
}

}  // namespace dyntomo
