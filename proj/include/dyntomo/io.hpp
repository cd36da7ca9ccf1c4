#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dyntomo/geometry.hpp"
#include "dyntomo/metrics.hpp"
#include "dyntomo/phantom.hpp"
#include "dyntomo/schedule.hpp"
#include "dyntomo/sequences.hpp"
#include "dyntomo/solver.hpp"

namespace dyntomo {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Binary container, all integers and floats little-endian:
//
//   magic      8 bytes   "DTOMOIMG" | "DTOMOFLW" | "DTOMOSIN"
//   version    u32       kFormatVersion
//   reserved   u32       0
//   meta_len   u64
//   meta       meta_len bytes of UTF-8 JSON (sorted keys)
//   body       format specific, see below
//   crc32      u32       CRC-32 (IEEE) of every preceding byte
//
// Image sequence body: u64 n_t, u64 n, f64[n_t * n * n] (frame, row, col).
// Flow body:           u64 count, u64 n, f64[count * 2 * n * n] (field, component, row, col).
// Sinogram body:       u64 n_t, u64 n_bins, u64[n_t] angle counts,
//                      f64[sum counts] angles, f64[sum counts * n_bins] values.
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr char kMagicImage[9] = "DTOMOIMG";
inline constexpr char kMagicFlow[9] = "DTOMOFLW";
inline constexpr char kMagicSinogram[9] = "DTOMOSIN";

std::string encode_image_sequence(const ImageSequence& u, const json& meta = json::object());
ImageSequence decode_image_sequence(const std::string& bytes, json* meta = nullptr);
std::string encode_flow(const FlowSequence& v, const json& meta = json::object());
FlowSequence decode_flow(const std::string& bytes, json* meta = nullptr);
/// noise_level and seed are stored in the metadata under "noise_level" and "noise_seed".
std::string encode_sinogram(const SinogramStack& m, const json& meta = json::object());
SinogramStack decode_sinogram(const std::string& bytes, json* meta = nullptr);

/// Writes to `path.tmp` and renames over `path`.
void atomic_write(const fs::path& path, const std::string& bytes);
std::string read_file(const fs::path& path);

void write_image_sequence(const fs::path& path, const ImageSequence& u, const json& meta = json::object());
ImageSequence read_image_sequence(const fs::path& path, json* meta = nullptr);
void write_flow(const fs::path& path, const FlowSequence& v, const json& meta = json::object());
FlowSequence read_flow(const fs::path& path, json* meta = nullptr);
void write_sinogram(const fs::path& path, const SinogramStack& m, const json& meta = json::object());
SinogramStack read_sinogram(const fs::path& path, json* meta = nullptr);

/// Measurement protocol selection. `protocol` is one of
/// "small_increments" (k angles per step), "tracking", "randomized".
struct ScheduleConfig {
    std::string protocol = "randomized";
    double increment = 0.0;  // 0 means pi / n_t
    std::size_t k = 1;
    std::size_t full_count = 60;
    std::size_t quantize = 0;
    std::optional<std::uint64_t> seed;  // randomized only; derived from the global seed if absent
    std::optional<std::size_t> steps;   // schedule length; must equal phantom.n_t when given

    /// "small_incr_<k>", "tracking" or "randomized".
    std::string label() const;
};

struct RunConfig {
    GridSpec grid{42, 1.0, 0.0, 0.0};
    std::optional<DetectorSpec> detector;  // default: DetectorSpec::covering(grid)
    PhantomSpec phantom = PhantomSpec::pinball();
    ScheduleConfig schedule;
    SolverParams solver;
    double noise_level = 0.01;
    std::string output_dir = "out";
    std::uint64_t seed = 0;

    DetectorSpec effective_detector() const;
    std::uint64_t schedule_seed() const;
    std::uint64_t noise_seed() const;
    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

json to_json(const RunConfig& c);
/// Missing keys keep their defaults; unknown keys and bad values are rejected
/// with the key path in the message.
RunConfig config_from_json(const json& j);
RunConfig load_config(const fs::path& path);
void save_config(const fs::path& path, const RunConfig& c);

/// Solver parameters with the reference weights for fidelity p.
SolverParams reference_params(int p);

AngleSchedule build_schedule(const RunConfig& c);

std::string format_double(double x);

// CSV
std::string trace_csv(const std::vector<OuterRecord>& records);
std::string metric_csv(const std::vector<MetricReport>& rows);
std::vector<MetricReport> parse_metric_csv(const std::string& text);
json metric_json(const MetricReport& r);

}  // namespace dyntomo
