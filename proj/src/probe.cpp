#include "stprobe/probe.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>
#include <tbb/parallel_for.h>

#include "stprobe/io_util.hpp"

namespace stprobe {

using Eigen::MatrixXd;

namespace {

constexpr double kRadToDeg = 180.0 / kPi;

std::string json_escape(std::string_view s) {
    std::string out;
    out.reserve(s.size() + 8);
    for (char c : s) {
        switch (c) {
            case '"':
                out += "\\\"";
                break;
            case '\\':
                out += "\\\\";
                break;
            case '\n':
                out += "\\n";
                break;
            case '\t':
                out += "\\t";
                break;
            default:
                out += c;
        }
    }
    return out;
}

// Accumulates bytes into the running FNV-1a state while writing.
class HashingWriter {
public:
    explicit HashingWriter(std::ostream& out) : out_(out) {}
    void write(std::string_view s) {
        for (unsigned char c : s) {
            h_ ^= c;
            h_ *= 0x100000001b3ull;
        }
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    std::uint64_t hash() const { return h_; }

private:
    std::ostream& out_;
    std::uint64_t h_ = 0xcbf29ce484222325ull;
};

const char* motion_param_name(MotionKind k) {
    switch (k) {
        case MotionKind::translation:
            return "temporal_frequency";
        case MotionKind::dilation:
            return "scale";
        case MotionKind::rotation:
            return "angular_velocity";
    }
    return "motion";
}

const char* motion_list_unit(MotionKind k) {
    switch (k) {
        case MotionKind::translation:
            return "cycles/frame";
        case MotionKind::dilation:
            return "unitless";
        case MotionKind::rotation:
            return "rad/frame";
    }
    return "";
}

std::string header_record(const std::string& label, MotionKind kind, std::uint64_t hash, std::size_t count,
                          const Extent& e, const std::string& description, const std::string& units) {
    return fmt::format(
        "{{\"record\":\"header\",\"format\":\"stprobe-manifest\",\"version\":1,\"label\":\"{}\","
        "\"motion_kind\":\"{}\",\"grid_spec_hash\":\"{}\",\"stimulus_count\":{},\"extent\":[{},{},{}],"
        "\"units\":{{{}}},\"grid_spec\":\"{}\"}}\n",
        label, to_string(kind), format_hash(hash), count, e.width, e.height, e.frames, units, json_escape(description));
}

std::string stimulus_record(std::size_t id, const Stimulus& s, const double ext[4], MotionKind kind,
                            const Extent& e) {
    return fmt::format(
        "{{\"stimulus_id\":{},\"motion_kind\":\"{}\",\"params\":{{\"half_wavelength\":{},\"orientation\":{},"
        "\"{}\":{},\"phase\":{}}},\"spatial_frequency_cpp\":{},\"orientation_rad\":{},\"motion\":{},"
        "\"phase_rad\":{},\"extent\":[{},{},{}]}}\n",
        id, to_string(kind), ext[0], ext[1], motion_param_name(kind), ext[2], ext[3], s.F, s.theta, s.motion, s.phi,
        e.width, e.height, e.frames);
}

std::string list_canonical(const std::vector<Stimulus>& stimuli, MotionKind kind, const Extent& extent) {
    std::string text = fmt::format("kind = {}\nextent = {}\n", to_string(kind), to_string(extent));
    for (const auto& s : stimuli) {
        text += fmt::format("{} {} {} {}\n", s.F, s.theta, s.motion, s.phi);
    }
    return text;
}

}  // namespace

// --- providers ---------------------------------------------------------------

MatrixXd ResponseProvider::respond(std::span<const Stimulus> batch) const {
    const Extent e = required_extent();
    std::vector<Volume> volumes;
    volumes.reserve(batch.size());
    for (const auto& s : batch) {
        volumes.push_back(render(s, e));
    }
    return respond(std::span<const Volume>(volumes));
}

SyntheticBank::SyntheticBank(std::vector<GaborParams> filters, const Extent& extent)
    : extent_(extent), planted_(std::move(filters)) {
    require_centered(extent, "synthetic bank");
    kernels_.reserve(planted_.size());
    for (const auto& g : planted_) {
        validate(g);
        kernels_.push_back(gabor_kernel(g, extent));
        gains_.push_back(g.K);
        biases_.push_back(g.b);
    }
}

SyntheticBank::SyntheticBank(std::vector<Volume> kernels, std::vector<double> gains, std::vector<double> biases)
    : kernels_(std::move(kernels)), gains_(std::move(gains)), biases_(std::move(biases)) {
    if (kernels_.empty()) {
        throw InvalidArgument("a kernel bank needs at least one kernel");
    }
    if (gains_.size() != kernels_.size() || biases_.size() != kernels_.size()) {
        throw InvalidArgument("gain and bias lists must match the kernel count");
    }
    extent_ = kernels_.front().extent();
    require_centered(extent_, "synthetic bank");
    for (const auto& k : kernels_) {
        if (k.extent() != extent_) {
            throw InvalidArgument("all kernels must share one extent");
        }
    }
}

MatrixXd SyntheticBank::respond(std::span<const Volume> batch) const {
    for (const auto& v : batch) {
        if (v.extent() != extent_) {
            throw InvalidArgument(
                fmt::format("stimulus extent {} differs from bank extent {}", to_string(v.extent()), to_string(extent_)));
        }
    }
    MatrixXd out(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(kernels_.size()));
    tbb::parallel_for(std::size_t{0}, batch.size(), [&](std::size_t i) {
        for (std::size_t j = 0; j < kernels_.size(); ++j) {
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                relu(gains_[j] * (dot(batch[i], kernels_[j]) + biases_[j]));
        }
    });
    return out;
}

MatrixXd SyntheticBank::respond(std::span<const Stimulus> batch) const {
    using cd = std::complex<double>;
    // Group on the phase-free part of each stimulus.
    using GroupKey = std::tuple<int, double, double, double>;
    std::map<GroupKey, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& s = batch[i];
        if (!(s.F > 0.0) || !std::isfinite(s.F)) {
            throw InvalidArgument(fmt::format("stimulus {}: spatial frequency must be positive", i));
        }
        if (s.kind == MotionKind::translation && std::abs(s.motion) > 0.5) {
            throw InvalidArgument(fmt::format("stimulus {}: temporal frequency {} exceeds Nyquist", i, s.motion));
        }
        if (s.kind == MotionKind::dilation && s.motion == 0.0) {
            throw InvalidArgument(fmt::format("stimulus {}: scale factor h = 0", i));
        }
        const double motion_key = s.kind == MotionKind::translation ? 0.0 : s.motion;
        groups[{static_cast<int>(s.kind), s.F, s.theta, motion_key}].push_back(i);
    }
    std::vector<const std::pair<const GroupKey, std::vector<std::size_t>>*> order;
    order.reserve(groups.size());
    for (const auto& g : groups) {
        order.push_back(&g);
    }

    const int W = extent_.width;
    const int H = extent_.height;
    const int T = extent_.frames;
    const int hw = (W - 1) / 2;
    const int hh = (H - 1) / 2;
    const std::size_t plane = static_cast<std::size_t>(W) * H;
    MatrixXd out(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(kernels_.size()));

    tbb::parallel_for(std::size_t{0}, order.size(), [&](std::size_t gi) {
        const auto& [key, members] = *order[gi];
        const auto kind = static_cast<MotionKind>(std::get<0>(key));
        const double F = std::get<1>(key);
        const double theta = std::get<2>(key);
        const double motion = std::get<3>(key);

        if (kind == MotionKind::translation) {
            // Z_t = sum_xy k_t(x, y) exp(i 2 pi F x_r); wave = Re(exp(i(phi - 2 pi f t)) exp(i 2 pi F x_r)).
            std::vector<cd> carrier(plane);
            const double c = std::cos(theta);
            const double sn = std::sin(theta);
            for (int iy = 0; iy < H; ++iy) {
                for (int ix = 0; ix < W; ++ix) {
                    const double xr = (ix - hw) * c + (iy - hh) * sn;
                    carrier[static_cast<std::size_t>(iy) * W + ix] = std::polar(1.0, kTwoPi * F * xr);
                }
            }
            std::vector<cd> z(static_cast<std::size_t>(T));
            for (std::size_t j = 0; j < kernels_.size(); ++j) {
                const auto k = kernels_[j].samples();
                for (int t = 0; t < T; ++t) {
                    cd acc = 0.0;
                    const double* kt = k.data() + static_cast<std::size_t>(t) * plane;
                    for (std::size_t p = 0; p < plane; ++p) {
                        acc += kt[p] * carrier[p];
                    }
                    z[static_cast<std::size_t>(t)] = acc;
                }
                for (std::size_t i : members) {
                    const auto& s = batch[i];
                    double pre = 0.0;
                    for (int t = 0; t < T; ++t) {
                        pre += (std::polar(1.0, s.phi - kTwoPi * s.motion * t) * z[static_cast<std::size_t>(t)]).real();
                    }
                    out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                        relu(gains_[j] * (pre + biases_[j]));
                }
            }
            return;
        }

        // Dilation / rotation: the full complex carrier, phase applied last.
        std::vector<cd> carrier(plane * static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) {
            double c = std::cos(theta);
            double sn = std::sin(theta);
            double factor = 1.0;
            if (kind == MotionKind::rotation) {
                c = std::cos(theta + motion * t);
                sn = std::sin(theta + motion * t);
            } else {
                factor = 1.0 - (1.0 - 1.0 / motion) * t;
            }
            for (int iy = 0; iy < H; ++iy) {
                for (int ix = 0; ix < W; ++ix) {
                    const double xr = (ix - hw) * c + (iy - hh) * sn;
                    carrier[static_cast<std::size_t>(t) * plane + static_cast<std::size_t>(iy) * W + ix] =
                        std::polar(1.0, kTwoPi * F * xr * factor);
                }
            }
        }
        for (std::size_t j = 0; j < kernels_.size(); ++j) {
            const auto k = kernels_[j].samples();
            cd z = 0.0;
            for (std::size_t p = 0; p < carrier.size(); ++p) {
                z += k[p] * carrier[p];
            }
            for (std::size_t i : members) {
                const double pre = (std::polar(1.0, batch[i].phi) * z).real();
                out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = relu(gains_[j] * (pre + biases_[j]));
            }
        }
    });
    return out;
}

std::vector<GaborParams> load_bank_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open bank file " + path);
    }
    std::string line;
    std::vector<GaborParams> bank;
    bool header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = io::trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        if (!header) {
            if (t != gabor_csv_header()) {
                throw InvalidArgument(fmt::format("{}: expected header '{}'", path, gabor_csv_header()));
            }
            header = true;
            continue;
        }
        try {
            bank.push_back(parse_gabor_row(line));
        } catch (const InvalidArgument& e) {
            throw InvalidArgument(fmt::format("{} line {}: {}", path, line_no, e.what()));
        }
    }
    if (bank.empty()) {
        throw InvalidArgument(path + ": bank has no filters");
    }
    return bank;
}

void save_bank_csv(const std::vector<GaborParams>& bank, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    out << gabor_csv_header() << '\n';
    for (const auto& g : bank) {
        out << to_csv_row(g) << '\n';
    }
}

// --- manifests -----------------------------------------------------------------

StimulusSet stimulus_set_from_grid(const GridSpec& spec, const Extent& extent) {
    StimulusSet set;
    set.label = "grid";
    set.kind = spec.kind;
    set.extent = extent;
    set.hash = spec.hash();
    set.description = spec.canonical();
    set.stimuli = build_grid(spec);
    return set;
}

StimulusSet stimulus_set_from_list(std::vector<Stimulus> stimuli, MotionKind kind, const Extent& extent) {
    for (const auto& s : stimuli) {
        if (s.kind != kind) {
            throw InvalidArgument("stimulus list mixes motion kinds");
        }
    }
    StimulusSet set;
    set.label = "profile";
    set.kind = kind;
    set.extent = extent;
    set.hash = fnv1a64(list_canonical(stimuli, kind, extent));
    set.stimuli = std::move(stimuli);
    return set;
}

std::uint64_t export_manifest(const GridSpec& spec, const Extent& extent, std::ostream& out) {
    spec.validate();
    HashingWriter w(out);
    std::string units;
    for (const auto& a : spec.axes) {
        if (!units.empty()) {
            units += ',';
        }
        units += fmt::format("\"{}\":\"{}\"", to_string(a.param), a.unit);
    }
    const std::size_t n = spec.size();
    w.write(header_record("grid", spec.kind, spec.hash(), n, extent, spec.canonical(), units));

    const int ax[4] = {spec.axis_of(AxisParam::half_wavelength), spec.axis_of(AxisParam::orientation),
                       spec.axis_of(motion_axis_for(spec.kind)), spec.axis_of(AxisParam::phase)};
    std::string buffer;
    for (std::size_t id = 0; id < n; ++id) {
        const auto idx = spec.unravel(id);
        double ext[4];
        for (int k = 0; k < 4; ++k) {
            ext[k] = spec.axes[static_cast<std::size_t>(ax[k])].value(idx[static_cast<std::size_t>(ax[k])]);
        }
        buffer += stimulus_record(id, spec.at(id), ext, spec.kind, extent);
        if (buffer.size() > (1u << 20)) {
            w.write(buffer);
            buffer.clear();
        }
    }
    w.write(buffer);
    if (!out) {
        throw IoError("failed writing manifest");
    }
    return w.hash();
}

std::uint64_t export_manifest(const StimulusSet& set, std::ostream& out) {
    if (set.label == "grid") {
        return export_manifest(parse_grid_spec(set.description), set.extent, out);
    }
    HashingWriter w(out);
    const std::string units = fmt::format(
        "\"half_wavelength\":\"px\",\"orientation\":\"deg\",\"{}\":\"{}\",\"phase\":\"deg\"",
        motion_param_name(set.kind), motion_list_unit(set.kind));
    w.write(header_record(set.label, set.kind, set.hash, set.stimuli.size(), set.extent, set.description, units));
    for (std::size_t id = 0; id < set.stimuli.size(); ++id) {
        const auto& s = set.stimuli[id];
        const double ext[4] = {1.0 / (2.0 * s.F), s.theta * kRadToDeg, s.motion, s.phi * kRadToDeg};
        w.write(stimulus_record(id, s, ext, set.kind, set.extent));
    }
    if (!out) {
        throw IoError("failed writing manifest");
    }
    return w.hash();
}

void export_manifest_file(const StimulusSet& set, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    export_manifest(set, out);
}

StimulusSet read_manifest(std::istream& in) {
    using nlohmann::json;
    StimulusSet set;
    std::string line;
    std::size_t line_no = 0;
    std::size_t expected = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (io::trim(line).empty()) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError(fmt::format("manifest line {}: {}", line_no, e.what()));
        }
        try {
            if (!header) {
                if (j.value("record", "") != "header") {
                    throw IoError("manifest does not start with a header record");
                }
                set.label = j.at("label").get<std::string>();
                set.kind = parse_motion_kind(j.at("motion_kind").get<std::string>());
                const auto hash_text = j.at("grid_spec_hash").get<std::string>();
                std::uint64_t h = 0;
                if (hash_text.size() != 18 ||
                    std::from_chars(hash_text.data() + 2, hash_text.data() + hash_text.size(), h, 16).ec !=
                        std::errc()) {
                    throw IoError("manifest header has a malformed hash");
                }
                set.hash = h;
                const auto e = j.at("extent");
                set.extent = Extent{e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<int>()};
                set.description = j.value("grid_spec", "");
                expected = j.at("stimulus_count").get<std::size_t>();
                set.stimuli.reserve(expected);
                header = true;
                continue;
            }
            const auto id = j.at("stimulus_id").get<std::size_t>();
            if (id != set.stimuli.size()) {
                throw IoError(fmt::format("manifest line {}: stimulus_id {} out of order", line_no, id));
            }
            Stimulus s;
            s.kind = parse_motion_kind(j.at("motion_kind").get<std::string>());
            s.F = j.at("spatial_frequency_cpp").get<double>();
            s.theta = j.at("orientation_rad").get<double>();
            s.motion = j.at("motion").get<double>();
            s.phi = j.at("phase_rad").get<double>();
            set.stimuli.push_back(s);
        } catch (const json::exception& e) {
            throw IoError(fmt::format("manifest line {}: {}", line_no, e.what()));
        }
    }
    if (!header) {
        throw IoError("empty manifest");
    }
    if (set.stimuli.size() != expected) {
        throw IoError(fmt::format("manifest declares {} stimuli but holds {}", expected, set.stimuli.size()));
    }
    return set;
}

StimulusSet load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open manifest " + path);
    }
    return read_manifest(in);
}

// --- response tables ---------------------------------------------------------------

ResponseTable::ResponseTable(std::uint64_t hash, std::size_t stimulus_count, std::size_t filter_count)
    : hash_(hash),
      stimuli_(stimulus_count),
      filters_(filter_count),
      missing_(stimulus_count * filter_count),
      values_(stimulus_count * filter_count, 0.0f),
      present_(stimulus_count * filter_count, 0) {}

void ResponseTable::set(std::size_t stimulus, std::size_t filter, float activation) {
    if (stimulus >= stimuli_ || filter >= filters_) {
        throw InvalidArgument(fmt::format("row ({}, {}) outside the {}x{} table", stimulus, filter, stimuli_, filters_));
    }
    if (!std::isfinite(activation) || activation < 0.0f) {
        throw InvalidActivation(
            fmt::format("stimulus {} filter {}: activation {} is not a finite nonnegative value", stimulus, filter,
                        activation));
    }
    const std::size_t i = idx(stimulus, filter);
    if (present_[i]) {
        throw DuplicateRow(fmt::format("duplicate row for stimulus {} filter {}", stimulus, filter));
    }
    present_[i] = 1;
    values_[i] = activation;
    --missing_;
}

bool ResponseTable::filter_complete(std::size_t filter) const {
    for (std::size_t s = 0; s < stimuli_; ++s) {
        if (!present_[idx(s, filter)]) {
            return false;
        }
    }
    return true;
}

ResponseTable ResponseTable::from_matrix(std::uint64_t hash, const MatrixXd& m) {
    ResponseTable t(hash, static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            t.set(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<float>(m(i, j)));
        }
    }
    return t;
}

void write_responses(const ResponseTable& table, std::ostream& out) {
    out << "# grid_spec_hash=" << format_hash(table.grid_hash()) << '\n';
    out << "stimulus_id,filter_id,activation\n";
    std::string buffer;
    for (std::size_t s = 0; s < table.stimulus_count(); ++s) {
        for (std::size_t f = 0; f < table.filter_count(); ++f) {
            if (table.has(s, f)) {
                buffer += fmt::format("{},{},{:.9g}\n", s, f, table.get(s, f));
            }
        }
        if (buffer.size() > (1u << 20)) {
            out << buffer;
            buffer.clear();
        }
    }
    out << buffer;
    if (!out) {
        throw IoError("failed writing responses");
    }
}

void save_responses(const ResponseTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    write_responses(table, out);
}

ResponseTable read_responses(std::istream& in, std::uint64_t expected_hash, std::size_t stimulus_count,
                             std::size_t filter_count) {
    struct Row {
        std::size_t s;
        std::size_t f;
        float a;
        std::size_t line;
    };
    std::vector<Row> rows;
    std::string line;
    std::size_t line_no = 0;
    bool have_hash = false;
    bool have_header = false;
    std::size_t max_filter = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = io::trim(line);
        if (t.empty()) {
            continue;
        }
        if (!have_hash) {
            constexpr std::string_view prefix = "# grid_spec_hash=";
            if (t.substr(0, prefix.size()) != prefix) {
                throw MalformedResponses("responses must start with '# grid_spec_hash=0x...'");
            }
            const auto hex = t.substr(prefix.size());
            std::uint64_t h = 0;
            if (hex.size() != 18 || hex.substr(0, 2) != "0x" ||
                std::from_chars(hex.data() + 2, hex.data() + hex.size(), h, 16).ec != std::errc()) {
                throw MalformedResponses("malformed grid_spec_hash comment");
            }
            if (h != expected_hash) {
                throw HashMismatch(fmt::format("responses were produced for grid {} but {} was expected",
                                               format_hash(h), format_hash(expected_hash)));
            }
            have_hash = true;
            continue;
        }
        if (!have_header) {
            if (t != "stimulus_id,filter_id,activation") {
                throw MalformedResponses(fmt::format("line {}: expected header stimulus_id,filter_id,activation", line_no));
            }
            have_header = true;
            continue;
        }
        const auto fields = io::split(t, ',');
        Row r{};
        r.line = line_no;
        if (fields.size() != 3 || !io::parse_number(fields[0], r.s) || !io::parse_number(fields[1], r.f)) {
            throw MalformedResponses(fmt::format("line {}: expected 'stimulus_id,filter_id,activation'", line_no));
        }
        const auto a = io::trim(fields[2]);
        const auto res = std::from_chars(a.data(), a.data() + a.size(), r.a);
        if (res.ec != std::errc() || res.ptr != a.data() + a.size()) {
            throw MalformedResponses(fmt::format("line {}: activation '{}' is not a number", line_no, a));
        }
        if (!std::isfinite(r.a) || r.a < 0.0f) {
            throw InvalidActivation(fmt::format("line {} (stimulus {}, filter {}): activation {} is negative or not finite",
                                                line_no, r.s, r.f, a));
        }
        if (r.s >= stimulus_count) {
            throw MalformedResponses(
                fmt::format("line {}: stimulus_id {} outside the grid of {}", line_no, r.s, stimulus_count));
        }
        max_filter = std::max(max_filter, r.f);
        rows.push_back(r);
    }
    if (!have_header) {
        throw MalformedResponses("responses file lacks the hash comment or the header");
    }
    if (filter_count == 0) {
        filter_count = rows.empty() ? 0 : max_filter + 1;
    } else if (!rows.empty() && max_filter >= filter_count) {
        throw MalformedResponses(fmt::format("filter_id {} exceeds the declared count {}", max_filter, filter_count));
    }
    ResponseTable table(expected_hash, stimulus_count, filter_count);
    for (const auto& r : rows) {
        if (table.has(r.s, r.f)) {
            throw DuplicateRow(fmt::format("line {}: duplicate row for stimulus {} filter {}", r.line, r.s, r.f));
        }
        table.set(r.s, r.f, r.a);
    }
    return table;
}

ResponseTable ingest_responses(const std::string& path, const GridSpec& spec, std::size_t filter_count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open responses " + path);
    }
    return read_responses(in, spec.hash(), spec.size(), filter_count);
}

ResponseTable ingest_responses(const std::string& path, const StimulusSet& set, std::size_t filter_count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open responses " + path);
    }
    return read_responses(in, set.hash, set.stimuli.size(), filter_count);
}

std::vector<std::size_t> active_filters(const ResponseTable& table) {
    if (!table.complete()) {
        throw IncompleteTable(fmt::format("response table misses {} rows", table.missing()));
    }
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < table.filter_count(); ++f) {
        for (std::size_t s = 0; s < table.stimulus_count(); ++s) {
            if (table.get(s, f) > 0.0f) {
                out.push_back(f);
                break;
            }
        }
    }
    return out;
}

FileProvider::FileProvider(StimulusSet set, ResponseTable table) : set_(std::move(set)), table_(std::move(table)) {
    if (table_.grid_hash() != set_.hash || table_.stimulus_count() != set_.stimuli.size()) {
        throw HashMismatch("response table does not belong to the manifest");
    }
    for (std::size_t i = 0; i < set_.stimuli.size(); ++i) {
        const auto& s = set_.stimuli[i];
        index_.emplace(Key{static_cast<int>(s.kind), s.F, s.theta, s.motion, s.phi}, i);
    }
}

MatrixXd FileProvider::respond(std::span<const Volume>) const {
    throw ProviderError("a file provider replays recorded responses and cannot score raw volumes");
}

MatrixXd FileProvider::respond(std::span<const Stimulus> batch) const {
    MatrixXd out(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(table_.filter_count()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& s = batch[i];
        const auto it = index_.find(Key{static_cast<int>(s.kind), s.F, s.theta, s.motion, s.phi});
        if (it == index_.end()) {
            throw ProviderError(fmt::format(
                "stimulus (F={}, theta={}, motion={}, phi={}) is not in the manifest; export it and rerun the adapter",
                s.F, s.theta, s.motion, s.phi));
        }
        for (std::size_t f = 0; f < table_.filter_count(); ++f) {
            if (!table_.has(it->second, f)) {
                throw ProviderError(fmt::format("no recorded response for stimulus {} filter {}", it->second, f));
            }
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = table_.get(it->second, f);
        }
    }
    return out;
}

ResponseTable run_stimulus_set(const ResponseProvider& provider, const StimulusSet& set, std::size_t batch_size) {
    if (provider.required_extent() != set.extent) {
        throw InvalidArgument(fmt::format("provider needs extent {} but the stimulus set uses {}",
                                          to_string(provider.required_extent()), to_string(set.extent)));
    }
    ResponseTable table(set.hash, set.stimuli.size(), provider.filter_count());
    batch_size = std::max<std::size_t>(batch_size, 1);
    for (std::size_t start = 0; start < set.stimuli.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, set.stimuli.size() - start);
        const MatrixXd m = provider.respond(std::span<const Stimulus>(set.stimuli.data() + start, n));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t f = 0; f < table.filter_count(); ++f) {
                table.set(start + i, f, static_cast<float>(m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f))));
            }
        }
    }
    return table;
}

}  // namespace stprobe
