#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "dyntomo/common.hpp"
#include "dyntomo/io.hpp"
#include "dyntomo/pipeline.hpp"

namespace fs = std::filesystem;
using namespace dyntomo;

namespace {

enum Exit { kOk = 0, kValidation = 1, kIo = 2, kSolver = 3 };

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::string protocol;
    std::string fidelity;
    std::string input;
    std::string recon;
    std::string truth;
    std::string label = "recon";
};

int fidelity_p(const std::string& f) {
    if (f == "l1") return 1;
    if (f == "l2") return 2;
    throw std::invalid_argument("--fidelity must be l1 or l2");
}

RunConfig load(const Options& o) {
    RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (!o.protocol.empty()) apply_protocol(c.schedule, o.protocol);
    if (!o.fidelity.empty()) {
        const SolverParams ref = reference_params(fidelity_p(o.fidelity));
        c.solver.p = ref.p;
        c.solver.alpha = ref.alpha;
        c.solver.beta = ref.beta;
        c.solver.gamma = ref.gamma;
    }
    c.validate();
    return c;
}

fs::path out_dir(const Options& o, const RunConfig& c) {
    if (!o.out.empty()) return o.out;
    if (const char* env = std::getenv("DYNTOMO_OUT"); env && *env) return env;
    return c.output_dir;
}

int cmd_simulate(const Options& o) {
    const RunConfig c = load(o);
    const fs::path dir = out_dir(o, c);
    const SimulateOutput s = run_simulate(c, dir);
    std::cout << s.summary << " -> " << (dir / kSinogramFile).string() << "\n";
    return kOk;
}

int cmd_reconstruct(const Options& o) {
    const RunConfig c = load(o);
    const fs::path dir = out_dir(o, c);
    const fs::path input = o.input.empty() ? dir / kSinogramFile : fs::path(o.input);
    const JointResult r = run_reconstruct(c, input, dir, [](const OuterRecord& rec) {
        std::cerr << "outer " << rec.iteration << "  energy " << format_double(rec.joint_energy) << "  r_main "
                  << format_double(rec.r_main) << "\n";
    });
    std::cout << r.u.n_t << " frames, " << r.v.count << " flow fields, " << r.records.size()
              << " outer iterations" << (r.converged ? "" : " (iteration cap reached)") << " -> "
              << (dir / kReconFile).string() << "\n";
    return kOk;
}

int cmd_evaluate(const Options& o) {
    fs::path dir = o.out;
    if (dir.empty()) {
        const char* env = std::getenv("DYNTOMO_OUT");
        dir = env && *env ? env : "out";
    }
    const fs::path recon = o.recon.empty() ? dir / kReconFile : fs::path(o.recon);
    const fs::path truth = o.truth.empty() ? dir / kTruthFile : fs::path(o.truth);
    const MetricReport r = run_evaluate(recon, truth, dir, o.label);
    std::cout << format_double(r.rel_l1) << " " << format_double(r.rel_l2) << " " << format_double(r.ssim) << "\n";
    return kOk;
}

int cmd_table(const Options& o) {
    Options base_opts = o;
    base_opts.protocol.clear();
    base_opts.fidelity.clear();
    const RunConfig base = load(base_opts);
    std::vector<TableCell> cells;
    for (const auto& cell : default_table_cells()) {
        if (!o.protocol.empty() && cell.protocol != o.protocol) continue;
        if (!o.fidelity.empty() && cell.p != fidelity_p(o.fidelity)) continue;
        cells.push_back(cell);
    }
    if (cells.empty()) {
        ScheduleConfig probe;
        apply_protocol(probe, o.protocol);
        for (int p : {1, 2})
            if (o.fidelity.empty() || p == fidelity_p(o.fidelity)) cells.push_back({o.protocol, p});
    }
    const auto rows = run_table_rows(base, cells);
    const fs::path dir = out_dir(o, base);
    const std::string csv = table_csv(rows);
    atomic_write(dir / kTableFile, csv);
    std::cout << csv;
    int failed = 0;
    for (const auto& r : rows)
        if (!r.ok) {
            ++failed;
            std::cerr << "cell " << r.cell.protocol << " p=" << r.cell.p << " failed: " << r.error << "\n";
        }
    return failed ? kSolver : kOk;
}

int cmd_schedule(const Options& o) {
    const RunConfig c = load(o);
    std::cout << format_schedule(build_schedule(c));
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic sparse-angle tomography with joint motion estimation"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--config", o.config, "Run configuration (JSON)");
    app.add_option("--out", o.out, "Output directory (default: $DYNTOMO_OUT, then the config's output_dir)");
    app.add_option("--seed", o.seed, "Global seed");
    app.add_option("--threads", o.threads, "Worker thread cap")->check(CLI::PositiveNumber);
    app.add_option("--protocol", o.protocol, "small_incr_<k>, tracking or randomized");
    app.add_option("--fidelity", o.fidelity, "Data fidelity")->check(CLI::IsMember({"l1", "l2"}));

    auto* sim = app.add_subcommand("simulate", "Simulate a noisy sinogram and the ground truth");
    auto* rec = app.add_subcommand("reconstruct", "Joint reconstruction of images and motion");
    rec->add_option("--input", o.input, "Sinogram file (default: <out>/sinogram.bin)");
    auto* ev = app.add_subcommand("evaluate", "Compare a reconstruction with the ground truth");
    ev->add_option("--recon", o.recon, "Reconstruction file (default: <out>/recon.bin)");
    ev->add_option("--truth", o.truth, "Ground-truth file (default: <out>/truth.bin)");
    ev->add_option("--label", o.label, "Row label");
    auto* tab = app.add_subcommand("table", "Protocol x fidelity error table");
    auto* sch = app.add_subcommand("schedule", "Print the angle schedule");
    for (auto* sub : {sim, rec, ev, tab, sch}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kValidation;
    }

    try {
        set_num_threads(o.threads);
        if (*sim) return cmd_simulate(o);
        if (*rec) return cmd_reconstruct(o);
        if (*ev) return cmd_evaluate(o);
        if (*tab) return cmd_table(o);
        return cmd_schedule(o);
    } catch (const SolverError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kSolver;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    }
}
