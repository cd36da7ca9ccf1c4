#include "doctest.h"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <unistd.h>

#include "dyntomo/common.hpp"
#include "dyntomo/io.hpp"
#include "dyntomo/pipeline.hpp"

using namespace dyntomo;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("dyntomo_pl_" + std::to_string(::getpid()) + "_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

struct Run {
    int code;
    std::string out;
};

Run cli(const std::string& args) {
    const std::string cmd = std::string(DYNTOMO_CLI) + " " + args + " 2>&1";
    FILE* f = popen(cmd.c_str(), "r");
    REQUIRE(f != nullptr);
    std::string out;
    std::array<char, 4096> buf;
    while (std::size_t k = fread(buf.data(), 1, buf.size(), f)) out.append(buf.data(), k);
    const int status = pclose(f);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

RunConfig small_config() {
    RunConfig c;
    c.grid = {16, 1.0};
    c.phantom = PhantomSpec::pinball(16, 4);
    c.solver.outer_max_iters = 2;
    c.solver.inner_max_iters = 100;
    c.seed = 3;
    return c;
}

}  // namespace

TEST_CASE("simulate writes header metadata and is deterministic") {
    const auto dir = scratch("sim");
    auto c = small_config();
    c.schedule.seed = 7;
    save_config(dir / "c.json", c);
    const auto r = cli("simulate --config " + (dir / "c.json").string() + " --out " + (dir / "a").string());
    CHECK(r.code == 0);
    CHECK(r.out.find("4 steps, 92 rays, noise level 0.01") != std::string::npos);
    json h;
    read_sinogram(dir / "a" / kSinogramFile, &h);
    CHECK(h["protocol"] == "randomized");
    CHECK(h["seed"] == 7);
    CHECK(cli("simulate --config " + (dir / "c.json").string() + " --out " + (dir / "b").string()).code == 0);
    CHECK(read_file(dir / "a" / kSinogramFile) == read_file(dir / "b" / kSinogramFile));
    CHECK(read_file(dir / "a" / kTruthFile) == read_file(dir / "b" / kTruthFile));
    fs::remove_all(dir);
}

TEST_CASE("schedule length mismatch is a validation error naming both values") {
    const auto dir = scratch("len");
    auto j = to_json(small_config());
    j["schedule"]["steps"] = 5;
    atomic_write(dir / "c.json", j.dump());
    const auto r = cli("simulate --config " + (dir / "c.json").string() + " --out " + dir.string());
    CHECK(r.code == 1);
    CHECK(r.out.find('5') != std::string::npos);
    CHECK(r.out.find('4') != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("single-step full-angle constant reconstruction") {
    const auto dir = scratch("const");
    RunConfig c;
    c.grid = {16, 1.0};
    c.phantom = PhantomSpec::pinball(16, 1);
    c.schedule.protocol = "small_increments";
    c.schedule.k = 60;
    c.solver = reference_params(2);
    const auto sched = build_schedule(c);
    const auto det = c.effective_detector();
    const auto op = build_operator(c.grid, det, sched.per_step);
    const ImageSequence truth(1, 16, 0.7);
    write_sinogram(dir / kSinogramFile, forward(op, truth), sinogram_header(c, sched));
    const auto r = run_reconstruct(c, dir / kSinogramFile, dir);
    CHECK(relative_error(r.u, truth, 2) <= 0.05);
    CHECK(read_image_sequence(dir / kReconFile).n_t == 1);
    CHECK(read_flow(dir / kFlowFile).count == 0);
    fs::remove_all(dir);
}

TEST_CASE("reconstruct checks geometry and file integrity") {
    const auto dir = scratch("geom");
    const auto c = small_config();
    run_simulate(c, dir);
    auto other = c;
    other.grid.pixel_size = 0.5;
    other.detector = c.effective_detector();
    try {
        run_reconstruct(other, dir / kSinogramFile, dir);
        FAIL("expected a geometry mismatch");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("grid.pixel_size") != std::string::npos);
    }
    auto bytes = read_file(dir / kSinogramFile);
    bytes[bytes.size() / 2] ^= 1;
    atomic_write(dir / "bad.bin", bytes);
    save_config(dir / "c.json", c);
    const auto r = cli("reconstruct --config " + (dir / "c.json").string() + " --input " + (dir / "bad.bin").string() +
                       " --out " + dir.string());
    CHECK(r.code == 2);
    CHECK(r.out.find("checksum") != std::string::npos);
    const auto miss = cli("reconstruct --config " + (dir / "c.json").string() + " --input " +
                          (dir / "missing.bin").string());
    CHECK(miss.code == 2);
    CHECK(miss.out.find((dir / "missing.bin").string()) != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("full-size pinball run writes every frame and flow field") {
    const auto dir = scratch("full");
    RunConfig c;
    c.solver.outer_max_iters = 1;
    c.solver.inner_max_iters = 20;
    run_simulate(c, dir);
    const auto r = run_reconstruct(c, dir / kSinogramFile, dir);
    CHECK(read_image_sequence(dir / kReconFile).n_t == 30);
    CHECK(read_flow(dir / kFlowFile).count == 29);
    const auto trace = read_file(dir / kTraceFile);
    CHECK(trace.find("iteration,joint_energy,r_main,wall_seconds\n1,") != std::string::npos);
    CHECK(r.records.size() == 1);
    fs::remove_all(dir);
}

TEST_CASE("cli end to end: simulate, reconstruct, evaluate") {
    const auto dir = scratch("e2e");
    save_config(dir / "c.json", small_config());
    const std::string cfg = " --config " + (dir / "c.json").string();
    ::setenv("DYNTOMO_OUT", dir.c_str(), 1);
    CHECK(cli("simulate" + cfg).code == 0);
    CHECK(fs::exists(dir / kSinogramFile));
    const auto rec = cli("reconstruct" + cfg + " --fidelity l2 --threads 2");
    CHECK(rec.code == 0);
    CHECK(rec.out.find("4 frames, 3 flow fields") != std::string::npos);
    const auto ev = cli("evaluate --recon " + (dir / kTruthFile).string());
    CHECK(ev.code == 0);
    CHECK(ev.out == "0 0 1\n");
    const auto csv = read_file(dir / kMetricsCsvFile);
    CHECK(csv.rfind("label,rel_l1,rel_l2,ssim\n", 0) == 0);
    const auto ev2 = cli("evaluate");
    CHECK(ev2.code == 0);
    ::unsetenv("DYNTOMO_OUT");

    write_image_sequence(dir / "small.bin", ImageSequence(2, 16));
    const auto bad = cli("evaluate --recon " + (dir / "small.bin").string() + " --out " + dir.string());
    CHECK(bad.code == 1);
    CHECK(bad.out.find("2x16x16") != std::string::npos);
    CHECK(bad.out.find("4x16x16") != std::string::npos);

    CHECK(cli("simulate --fidelity l3").code == 1);
    CHECK(cli("simulate --protocol spiral").code == 1);
    CHECK(cli("bogus").code == 1);
    CHECK(cli("--help").code == 0);
    const auto sch = cli("schedule" + cfg + " --protocol small_incr_2");
    CHECK(sch.code == 0);
    CHECK(sch.out.rfind("0: 0 1.57079632679\n", 0) == 0);
    fs::remove_all(dir);
}

TEST_CASE("table rows, failure marking and determinism") {
    auto c = small_config();
    c.solver.outer_max_iters = 1;
    c.solver.inner_max_iters = 30;
    const auto cells = default_table_cells();
    CHECK(cells.size() == 8);
    const auto rows = run_table_rows(c, cells);
    const auto csv = table_csv(rows);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
    CHECK(csv.rfind("protocol,fidelity,rel_l1,rel_l2,ssim,status\n", 0) == 0);
    CHECK(table_csv(run_table_rows(c, cells)) == csv);

    const auto one = table_csv(run_table_rows(c, {{"randomized", 2}}));
    CHECK(std::count(one.begin(), one.end(), '\n') == 2);
    CHECK(one.find("randomized,L2,") != std::string::npos);

    auto single = c;
    single.phantom = PhantomSpec::pinball(16, 1);
    const auto mixed = run_table_rows(single, {{"tracking", 1}, {"randomized", 1}});
    CHECK(!mixed[0].ok);
    CHECK(mixed[1].ok);
    CHECK(table_csv(mixed).find("tracking,L1,nan,nan,nan,failed") != std::string::npos);
}

TEST_CASE("table csv is independent of the thread count") {
    const auto dir = scratch("thr");
    auto c = small_config();
    c.solver.outer_max_iters = 1;
    c.solver.inner_max_iters = 30;
    save_config(dir / "c.json", c);
    const std::string base = "table --config " + (dir / "c.json").string() + " --protocol randomized";
    CHECK(cli(base + " --threads 1 --out " + (dir / "t1").string()).code == 0);
    CHECK(cli(base + " --threads 3 --out " + (dir / "t3").string()).code == 0);
    CHECK(read_file(dir / "t1" / kTableFile) == read_file(dir / "t3" / kTableFile));
    fs::remove_all(dir);
}
