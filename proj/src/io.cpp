#include "dyntomo/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <zlib.h>

#include "dyntomo/common.hpp"

namespace dyntomo {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

class Writer {
public:
    explicit Writer(const char* magic, const json& meta) {
        buf_.append(magic, 8);
        put<std::uint32_t>(kFormatVersion);
        put<std::uint32_t>(0);
        const std::string m = meta.dump();
        put<std::uint64_t>(m.size());
        buf_ += m;
    }
    template <class T>
    void put(T v) {
        v = to_little(v);
        buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void put_doubles(std::span<const double> xs) {
        for (double x : xs) put<double>(x);
    }
    std::string finish() {
        const auto crc = static_cast<std::uint32_t>(
            crc32(0L, reinterpret_cast<const Bytef*>(buf_.data()), static_cast<uInt>(buf_.size())));
        put<std::uint32_t>(crc);
        return std::move(buf_);
    }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& bytes, const char* magic, const char* what) : b_(bytes), what_(what) {
        if (b_.size() < 28) fail("file too short");
        if (std::memcmp(b_.data(), magic, 8) != 0) fail("bad magic (not a " + what_ + " file)");
        const std::size_t body_end = b_.size() - 4;
        std::uint32_t stored;
        std::memcpy(&stored, b_.data() + body_end, 4);
        stored = to_little(stored);
        const auto crc = static_cast<std::uint32_t>(
            crc32(0L, reinterpret_cast<const Bytef*>(b_.data()), static_cast<uInt>(body_end)));
        if (crc != stored) fail("checksum mismatch");
        end_ = body_end;
        pos_ = 8;
        const auto version = get<std::uint32_t>();
        if (version != kFormatVersion) fail("unsupported format version " + std::to_string(version));
        get<std::uint32_t>();
        const auto mlen = get<std::uint64_t>();
        if (mlen > end_ - pos_) fail("metadata length exceeds file");
        meta_text_ = b_.substr(pos_, mlen);
        pos_ += mlen;
    }

    template <class T>
    T get() {
        if (end_ - pos_ < sizeof(T)) fail("truncated body");
        T v;
        std::memcpy(&v, b_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return to_little(v);
    }
    void get_doubles(std::span<double> out) {
        if ((end_ - pos_) / sizeof(double) < out.size()) fail("truncated payload");
        for (auto& x : out) x = get<double>();
    }
    std::size_t get_size(std::uint64_t limit) {
        const auto v = get<std::uint64_t>();
        if (v > limit) fail("implausible dimension " + std::to_string(v));
        return static_cast<std::size_t>(v);
    }
    std::size_t remaining() const { return end_ - pos_; }
    void finish() {
        if (pos_ != end_) fail("trailing bytes after payload");
    }
    json meta() const {
        try {
            return json::parse(meta_text_);
        } catch (const json::exception& e) {
            throw IoError(what_ + ": corrupt metadata: " + e.what());
        }
    }
    [[noreturn]] void fail(const std::string& msg) const { throw IoError(what_ + ": " + msg); }

private:
    const std::string& b_;
    std::string what_;
    std::string meta_text_;
    std::size_t pos_ = 0;
    std::size_t end_ = 0;
};

}  // namespace

std::string encode_image_sequence(const ImageSequence& u, const json& meta) {
    if (u.data.size() != u.n_t * u.pixels()) throw DimensionError("encode_image_sequence: inconsistent shape");
    Writer w(kMagicImage, meta);
    w.put<std::uint64_t>(u.n_t);
    w.put<std::uint64_t>(u.n);
    w.put_doubles(u.data);
    return w.finish();
}

ImageSequence decode_image_sequence(const std::string& bytes, json* meta) {
    Reader r(bytes, kMagicImage, "image sequence");
    const std::size_t nt = r.get_size(1u << 30), n = r.get_size(1u << 20);
    if (nt * n * n > r.remaining() / sizeof(double)) r.fail("truncated payload");
    ImageSequence u(nt, n);
    r.get_doubles(u.data);
    r.finish();
    if (meta) *meta = r.meta();
    return u;
}

std::string encode_flow(const FlowSequence& v, const json& meta) {
    if (v.data.size() != v.count * 2 * v.pixels()) throw DimensionError("encode_flow: inconsistent shape");
    Writer w(kMagicFlow, meta);
    w.put<std::uint64_t>(v.count);
    w.put<std::uint64_t>(v.n);
    w.put_doubles(v.data);
    return w.finish();
}

FlowSequence decode_flow(const std::string& bytes, json* meta) {
    Reader r(bytes, kMagicFlow, "flow");
    const std::size_t count = r.get_size(1u << 30), n = r.get_size(1u << 20);
    if (count * 2 * n * n > r.remaining() / sizeof(double)) r.fail("truncated payload");
    FlowSequence v(count, n);
    r.get_doubles(v.data);
    r.finish();
    if (meta) *meta = r.meta();
    return v;
}

std::string encode_sinogram(const SinogramStack& m, const json& meta_in) {
    const std::size_t n_bins = m.steps.empty() ? 0 : m.steps.front().n_bins;
    for (const auto& st : m.steps)
        if (st.n_bins != n_bins || st.values.size() != st.angles.size() * st.n_bins)
            throw DimensionError("encode_sinogram: inconsistent step shapes");
    json meta = meta_in;
    meta["noise_level"] = m.noise_level;
    meta["noise_seed"] = m.seed;
    Writer w(kMagicSinogram, meta);
    w.put<std::uint64_t>(m.steps.size());
    w.put<std::uint64_t>(n_bins);
    for (const auto& st : m.steps) w.put<std::uint64_t>(st.angles.size());
    for (const auto& st : m.steps) w.put_doubles(st.angles);
    for (const auto& st : m.steps) w.put_doubles(st.values);
    return w.finish();
}

SinogramStack decode_sinogram(const std::string& bytes, json* meta_out) {
    Reader r(bytes, kMagicSinogram, "sinogram");
    const std::size_t nt = r.get_size(1u << 30), n_bins = r.get_size(1u << 30);
    SinogramStack m;
    m.steps.resize(nt);
    std::size_t total = 0;
    for (auto& st : m.steps) {
        st.angles.resize(r.get_size(1u << 30));
        st.n_bins = n_bins;
        total += st.angles.size();
    }
    if (total * (n_bins + 1) > r.remaining() / sizeof(double)) r.fail("truncated payload");
    for (auto& st : m.steps) r.get_doubles(st.angles);
    for (auto& st : m.steps) {
        st.values.resize(st.angles.size() * n_bins);
        r.get_doubles(st.values);
    }
    r.finish();
    json meta = r.meta();
    if (meta.contains("noise_level") && meta["noise_level"].is_number()) m.noise_level = meta["noise_level"].get<double>();
    if (meta.contains("noise_seed") && meta["noise_seed"].is_number_unsigned())
        m.seed = meta["noise_seed"].get<std::uint64_t>();
    if (meta_out) *meta_out = std::move(meta);
    return m;
}

void atomic_write(const fs::path& path, const std::string& bytes) {
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot rename into " + path.string());
    }
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

IoError with_path(const fs::path& path, const IoError& e) {
    const std::string msg = e.what();
    if (msg.find(path.string()) != std::string::npos) return e;
    return IoError(path.string() + ": " + msg);
}

}  // namespace

void write_image_sequence(const fs::path& path, const ImageSequence& u, const json& meta) {
    atomic_write(path, encode_image_sequence(u, meta));
}
ImageSequence read_image_sequence(const fs::path& path, json* meta) {
    try {
        return decode_image_sequence(read_file(path), meta);
    } catch (const IoError& e) {
        throw with_path(path, e);
    }
}
void write_flow(const fs::path& path, const FlowSequence& v, const json& meta) {
    atomic_write(path, encode_flow(v, meta));
}
FlowSequence read_flow(const fs::path& path, json* meta) {
    try {
        return decode_flow(read_file(path), meta);
    } catch (const IoError& e) {
        throw with_path(path, e);
    }
}
void write_sinogram(const fs::path& path, const SinogramStack& m, const json& meta) {
    atomic_write(path, encode_sinogram(m, meta));
}
SinogramStack read_sinogram(const fs::path& path, json* meta) {
    try {
        return decode_sinogram(read_file(path), meta);
    } catch (const IoError& e) {
        throw with_path(path, e);
    }
}

// ---- configuration ----

std::string ScheduleConfig::label() const {
    if (protocol == "small_increments") return "small_incr_" + std::to_string(k);
    return protocol;
}

DetectorSpec RunConfig::effective_detector() const {
    return detector ? *detector : DetectorSpec::covering(grid);
}

std::uint64_t RunConfig::schedule_seed() const {
    return schedule.seed ? *schedule.seed : derive_seed(seed, "schedule");
}

std::uint64_t RunConfig::noise_seed() const { return derive_seed(seed, "noise"); }

namespace {

void field_check(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw std::invalid_argument("config: " + field + ": " + what);
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw std::invalid_argument("config: " + where + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, _] : obj.items())
        if (!ok.count(k)) throw std::invalid_argument("config: unknown field " + (where.empty() ? k : where + "." + k));
}

template <class T>
void read_into(const json& obj, const char* key, const std::string& where, T& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    const std::string name = where.empty() ? key : where + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
        field_check(v.is_boolean(), name, "expected a boolean");
        out = v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
        field_check(v.is_string(), name, "expected a string");
        out = v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
        field_check(v.is_number(), name, "expected a number");
        out = v.get<T>();
        field_check(std::isfinite(out), name, "must be finite");
    } else {
        field_check(v.is_number_integer() && (std::is_signed_v<T> || v.is_number_unsigned() || v.get<long long>() >= 0),
                    name, "expected a non-negative integer");
        out = v.get<T>();
    }
}

void read_pair(const json& obj, const char* key, const std::string& where, double& a, double& b) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    const std::string name = where + "." + key;
    field_check(v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number(), name,
                "expected [number, number]");
    a = v[0].get<double>();
    b = v[1].get<double>();
}

// Runs a sub-validator and prefixes its message with the section name.
template <class F>
void validate_section(const std::string& section, F&& f) {
    try {
        f();
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("config: " + section + ": " + e.what());
    }
}

}  // namespace

void RunConfig::validate() const {
    validate_section("grid", [&] { grid.validate(); });
    validate_section("detector", [&] { effective_detector().validate(); });
    validate_section("phantom", [&] { phantom.validate(); });
    validate_section("solver", [&] { solver.validate(); });
    field_check(phantom.n == grid.n, "phantom.n",
                "phantom n=" + std::to_string(phantom.n) + " differs from grid n=" + std::to_string(grid.n));
    const auto& s = schedule;
    field_check(s.protocol == "small_increments" || s.protocol == "tracking" || s.protocol == "randomized",
                "schedule.protocol", "unknown protocol '" + s.protocol + "'");
    field_check(s.increment >= 0 && std::isfinite(s.increment), "schedule.increment", "must be >= 0");
    field_check(s.k >= 1, "schedule.k", "must be >= 1");
    field_check(s.full_count >= 1, "schedule.full_count", "must be >= 1");
    if (s.steps)
        field_check(*s.steps == phantom.n_t, "schedule.steps",
                    "schedule length " + std::to_string(*s.steps) + " differs from phantom n_t " +
                        std::to_string(phantom.n_t));
    if (s.protocol == "tracking") field_check(phantom.n_t >= 2, "phantom.n_t", "tracking needs n_t >= 2");
    field_check(noise_level >= 0 && std::isfinite(noise_level), "noise_level", "must be >= 0");
}

json to_json(const RunConfig& c) {
    json j;
    j["grid"] = {{"n", c.grid.n}, {"pixel_size", c.grid.pixel_size}, {"origin", {c.grid.origin_x, c.grid.origin_y}}};
    if (c.detector) j["detector"] = {{"n_bins", c.detector->n_bins}, {"bin_spacing", c.detector->bin_spacing}};
    const auto& p = c.phantom;
    j["phantom"] = {{"n", p.n},
                    {"n_t", p.n_t},
                    {"supersample", p.supersample},
                    {"ball_radius", p.ball_radius},
                    {"ball_intensity", p.ball_intensity},
                    {"ball_start_x", p.ball_start_x},
                    {"ball_end_x", p.ball_end_x},
                    {"ball_y", p.ball_y},
                    {"ellipse_center", {p.ellipse_center_x, p.ellipse_center_y}},
                    {"ellipse_semi_axes", {p.ellipse_semi_x, p.ellipse_semi_y}},
                    {"ellipse_intensity", p.ellipse_intensity}};
    json s = {{"protocol", c.schedule.protocol},
              {"increment", c.schedule.increment},
              {"k", c.schedule.k},
              {"full_count", c.schedule.full_count},
              {"quantize", c.schedule.quantize}};
    if (c.schedule.seed) s["seed"] = *c.schedule.seed;
    if (c.schedule.steps) s["steps"] = *c.schedule.steps;
    j["schedule"] = s;
    const auto& sp = c.solver;
    j["solver"] = {{"p", sp.p},
                   {"alpha", sp.alpha},
                   {"beta", sp.beta},
                   {"gamma", sp.gamma},
                   {"inner_max_iters", sp.inner_max_iters},
                   {"inner_tol", sp.inner_tol},
                   {"outer_max_iters", sp.outer_max_iters},
                   {"outer_tol", sp.outer_tol},
                   {"pyramid_levels", sp.pyramid_levels},
                   {"pyramid_scale", sp.pyramid_scale},
                   {"step_rule", sp.step_rule},
                   {"clamp_nonnegative", sp.clamp_nonnegative}};
    j["noise_level"] = c.noise_level;
    j["output_dir"] = c.output_dir;
    j["seed"] = c.seed;
    return j;
}

RunConfig config_from_json(const json& j) {
    RunConfig c;
    check_keys(j, "", {"grid", "detector", "phantom", "schedule", "solver", "noise_level", "output_dir", "seed"});
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        check_keys(g, "grid", {"n", "pixel_size", "origin"});
        read_into(g, "n", "grid", c.grid.n);
        read_into(g, "pixel_size", "grid", c.grid.pixel_size);
        read_pair(g, "origin", "grid", c.grid.origin_x, c.grid.origin_y);
        // the phantom follows the grid size unless given explicitly
        c.phantom = PhantomSpec::pinball(c.grid.n, c.phantom.n_t);
    }
    if (j.contains("detector")) {
        const auto& d = j["detector"];
        check_keys(d, "detector", {"n_bins", "bin_spacing"});
        DetectorSpec det = DetectorSpec::covering(c.grid);
        read_into(d, "n_bins", "detector", det.n_bins);
        read_into(d, "bin_spacing", "detector", det.bin_spacing);
        c.detector = det;
    }
    if (j.contains("phantom")) {
        const auto& p = j["phantom"];
        check_keys(p, "phantom",
                   {"n", "n_t", "supersample", "ball_radius", "ball_intensity", "ball_start_x", "ball_end_x",
                    "ball_y", "ellipse_center", "ellipse_semi_axes", "ellipse_intensity"});
        auto& ph = c.phantom;
        read_into(p, "n", "phantom", ph.n);
        read_into(p, "n_t", "phantom", ph.n_t);
        read_into(p, "supersample", "phantom", ph.supersample);
        read_into(p, "ball_radius", "phantom", ph.ball_radius);
        read_into(p, "ball_intensity", "phantom", ph.ball_intensity);
        read_into(p, "ball_start_x", "phantom", ph.ball_start_x);
        read_into(p, "ball_end_x", "phantom", ph.ball_end_x);
        read_into(p, "ball_y", "phantom", ph.ball_y);
        read_pair(p, "ellipse_center", "phantom", ph.ellipse_center_x, ph.ellipse_center_y);
        read_pair(p, "ellipse_semi_axes", "phantom", ph.ellipse_semi_x, ph.ellipse_semi_y);
        read_into(p, "ellipse_intensity", "phantom", ph.ellipse_intensity);
    }
    if (j.contains("schedule")) {
        const auto& s = j["schedule"];
        check_keys(s, "schedule", {"protocol", "increment", "k", "full_count", "quantize", "seed", "steps"});
        read_into(s, "protocol", "schedule", c.schedule.protocol);
        read_into(s, "increment", "schedule", c.schedule.increment);
        read_into(s, "k", "schedule", c.schedule.k);
        read_into(s, "full_count", "schedule", c.schedule.full_count);
        read_into(s, "quantize", "schedule", c.schedule.quantize);
        if (s.contains("seed")) {
            std::uint64_t seed = 0;
            read_into(s, "seed", "schedule", seed);
            c.schedule.seed = seed;
        }
        if (s.contains("steps")) {
            std::size_t steps = 0;
            read_into(s, "steps", "schedule", steps);
            c.schedule.steps = steps;
        }
    }
    if (j.contains("solver")) {
        const auto& s = j["solver"];
        check_keys(s, "solver",
                   {"p", "alpha", "beta", "gamma", "inner_max_iters", "inner_tol", "outer_max_iters", "outer_tol",
                    "pyramid_levels", "pyramid_scale", "step_rule", "clamp_nonnegative"});
        auto& sp = c.solver;
        read_into(s, "p", "solver", sp.p);
        // weights default to the reference set of the chosen fidelity
        const SolverParams ref = reference_params(sp.p == 2 ? 2 : 1);
        sp.alpha = ref.alpha;
        sp.beta = ref.beta;
        sp.gamma = ref.gamma;
        read_into(s, "alpha", "solver", sp.alpha);
        read_into(s, "beta", "solver", sp.beta);
        read_into(s, "gamma", "solver", sp.gamma);
        read_into(s, "inner_max_iters", "solver", sp.inner_max_iters);
        read_into(s, "inner_tol", "solver", sp.inner_tol);
        read_into(s, "outer_max_iters", "solver", sp.outer_max_iters);
        read_into(s, "outer_tol", "solver", sp.outer_tol);
        read_into(s, "pyramid_levels", "solver", sp.pyramid_levels);
        read_into(s, "pyramid_scale", "solver", sp.pyramid_scale);
        read_into(s, "step_rule", "solver", sp.step_rule);
        read_into(s, "clamp_nonnegative", "solver", sp.clamp_nonnegative);
    }
    read_into(j, "noise_level", "", c.noise_level);
    read_into(j, "output_dir", "", c.output_dir);
    read_into(j, "seed", "", c.seed);
    c.validate();
    return c;
}

RunConfig load_config(const fs::path& path) {
    const std::string text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

void save_config(const fs::path& path, const RunConfig& c) { atomic_write(path, to_json(c).dump(2) + "\n"); }

SolverParams reference_params(int p) {
    SolverParams s;
    s.p = p;
    if (p == 2) {
        s.alpha = 0.05;
        s.beta = 0.2;
        s.gamma = 8.0;
    } else {
        s.alpha = 0.1;
        s.beta = 0.2;
        s.gamma = 0.5;
    }
    return s;
}

AngleSchedule build_schedule(const RunConfig& c) {
    c.validate();
    const std::size_t nt = c.phantom.n_t;
    const double inc = c.schedule.increment > 0 ? c.schedule.increment : kPi / static_cast<double>(nt);
    const auto& s = c.schedule;
    if (s.protocol == "small_increments") return schedule_small_increments(nt, inc, s.k);
    if (s.protocol == "tracking") return schedule_tracking(nt, s.full_count, inc);
    return schedule_randomized(nt, c.schedule_seed(), s.quantize);
}

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string trace_csv(const std::vector<OuterRecord>& records) {
    std::string out = "# r_main = ||u - u_old||_2 + ||v - v_old||_2\n";
    out += "iteration,joint_energy,r_main,wall_seconds\n";
    for (const auto& r : records)
        out += std::to_string(r.iteration) + "," + format_double(r.joint_energy) + "," + format_double(r.r_main) +
               "," + format_double(r.wall_seconds) + "\n";
    return out;
}

std::string metric_csv(const std::vector<MetricReport>& rows) {
    std::string out = "label,rel_l1,rel_l2,ssim\n";
    for (const auto& r : rows)
        out += r.label + "," + format_double(r.rel_l1) + "," + format_double(r.rel_l2) + "," +
               format_double(r.ssim) + "\n";
    return out;
}

std::vector<MetricReport> parse_metric_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "label,rel_l1,rel_l2,ssim") throw IoError("metric csv: bad header");
    std::vector<MetricReport> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != 4) throw IoError("metric csv: expected 4 columns in '" + line + "'");
        MetricReport r;
        r.label = cells[0];
        r.rel_l1 = std::strtod(cells[1].c_str(), nullptr);
        r.rel_l2 = std::strtod(cells[2].c_str(), nullptr);
        r.ssim = std::strtod(cells[3].c_str(), nullptr);
        rows.push_back(std::move(r));
    }
    return rows;
}

json metric_json(const MetricReport& r) {
    return {{"label", r.label},
            {"rel_l1", r.rel_l1},
            {"rel_l2", r.rel_l2},
            {"ssim", r.ssim},
            {"per_frame_ssim", r.per_frame_ssim},
            {"c1", r.c1},
            {"c2", r.c2},
            {"ssim_statistics", "global per frame, population (1/N) variance"}};
}

}  // namespace dyntomo
