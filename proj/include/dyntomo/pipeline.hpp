#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dyntomo/io.hpp"
#include "dyntomo/metrics.hpp"
#include "dyntomo/solver.hpp"

namespace dyntomo {

inline constexpr const char* kSinogramFile = "sinogram.bin";
inline constexpr const char* kTruthFile = "truth.bin";
inline constexpr const char* kReconFile = "recon.bin";
inline constexpr const char* kFlowFile = "flow.bin";
inline constexpr const char* kTraceFile = "trace.csv";
inline constexpr const char* kMetricsCsvFile = "metrics.csv";
inline constexpr const char* kMetricsJsonFile = "metrics.json";
inline constexpr const char* kTableFile = "table.csv";

/// Header metadata written alongside a simulated sinogram.
json sinogram_header(const RunConfig& c, const AngleSchedule& schedule);

struct SimulateOutput {
    SinogramStack sinogram;
    ImageSequence truth;
    AngleSchedule schedule;
    std::string summary;  // "<steps> steps, <rays> rays, noise level <x>"
};

/// Pure part of simulate: no files touched.
SimulateOutput simulate(const RunConfig& c);

/// Writes sinogram.bin and truth.bin into out_dir.
SimulateOutput run_simulate(const RunConfig& c, const fs::path& out_dir);

/// Checks that a sinogram header matches the geometry of `c`; throws
/// std::invalid_argument naming the first differing field.
void check_header_geometry(const json& header, const RunConfig& c);

JointResult reconstruct(const RunConfig& c, const SinogramStack& m, const OuterCallback& cb = {});

/// Reads the sinogram, solves and writes recon.bin, flow.bin and trace.csv into out_dir.
JointResult run_reconstruct(const RunConfig& c, const fs::path& sinogram_path, const fs::path& out_dir,
                            const OuterCallback& cb = {});

/// Writes metrics.csv and metrics.json into out_dir.
MetricReport run_evaluate(const fs::path& recon_path, const fs::path& truth_path, const fs::path& out_dir,
                          const std::string& label = "recon");

struct TableCell {
    std::string protocol;  // "small_incr_<k>", "tracking" or "randomized"
    int p = 1;
};

struct TableRow {
    TableCell cell;
    bool ok = false;
    MetricReport report;
    std::string error;
};

/// small_incr_1, small_incr_2, tracking, randomized crossed with p = 1, 2.
std::vector<TableCell> default_table_cells();

/// Parses "small_incr_<k>", "small_increments", "tracking", "randomized".
void apply_protocol(ScheduleConfig& s, const std::string& name);

/// The cell's configuration: base with protocol and reference weights for p;
/// iteration limits and tolerances are kept from base.
RunConfig cell_config(const RunConfig& base, const TableCell& cell);

/// Runs simulate, reconstruct and evaluate per cell. A failing cell is
/// recorded and the remaining cells still run.
std::vector<TableRow> run_table_rows(const RunConfig& base, const std::vector<TableCell>& cells);

/// Columns protocol,fidelity,rel_l1,rel_l2,ssim,status; no timings.
std::string table_csv(const std::vector<TableRow>& rows);

}  // namespace dyntomo
