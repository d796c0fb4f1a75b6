#include "patan/data.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "patan/errors.hpp"
#include "patan/format.hpp"

namespace patan {

namespace audit {

namespace {
thread_local int g_section_depth = 0;
std::atomic<std::uint64_t> g_violations{0};
} // namespace

TrainingSection::TrainingSection() { ++g_section_depth; }
TrainingSection::~TrainingSection() { --g_section_depth; }
bool in_training_section() { return g_section_depth > 0; }
std::uint64_t quarantine_violations() { return g_violations.load(); }
void reset_quarantine_violations() { g_violations.store(0); }

namespace {
void note_violation() { g_violations.fetch_add(1); }
} // namespace

} // namespace audit

VideoSample::VideoSample(Matrix frames, Domain domain, int label, std::string id)
    : frames_(std::move(frames)), domain_(domain), label_(label), id_(std::move(id)) {
    if (label_ < 0)
        throw InputError("sample '" + id_ + "' has negative label");
    for (double v : frames_.values())
        if (!std::isfinite(v))
            throw InputError("sample '" + id_ + "' contains a non-finite feature value");
}

int VideoSample::source_label() const {
    if (domain_ == Domain::target)
        throw UsageError("target labels are quarantined; evaluation code must use eval_label()");
    return label_;
}

int VideoSample::eval_label() const {
    if (domain_ == Domain::target && audit::in_training_section())
        audit::note_violation();
    return label_;
}

int SplitDataset::frame_count() const {
    if (!source.empty())
        return source.front().frame_count();
    if (!target.empty())
        return target.front().frame_count();
    return 0;
}

int SplitDataset::feature_dim() const {
    if (!source.empty())
        return source.front().feature_dim();
    if (!target.empty())
        return target.front().feature_dim();
    return 0;
}

namespace {

std::uint64_t fnv1a(std::uint64_t h, const char* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ULL;
    }
    return h;
}

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;

void validate_spec(const GeneratorSpec& spec) {
    auto fail = [](const std::string& what) { throw ConfigError("generator spec: " + what); };
    if (spec.num_source_classes < 1)
        fail("num_source_classes must be at least 1");
    if (spec.num_target_classes < 1 || spec.num_target_classes > spec.num_source_classes)
        fail("num_target_classes must lie in [1, num_source_classes]");
    if (spec.d_in < 2)
        fail("d_in must be at least 2 (the domain shift rotates a 2-plane)");
    if (spec.k < 2)
        fail("k must be at least 2");
    if (spec.samples_per_class_source < 1 || spec.samples_per_class_target < 1)
        fail("samples per class must be at least 1");
    if (spec.noise_std < 0)
        fail("noise_std must be non-negative");
    if (spec.target_shift.noise_multiplier < 0)
        fail("noise_multiplier must be non-negative");
    if (spec.target_shift.offset_scale < 0)
        fail("offset_scale must be non-negative");
    for (const auto& [outlier, shared] : spec.temporal_confusion_pairs) {
        if (outlier < spec.num_target_classes || outlier >= spec.num_source_classes)
            fail("confusion pair outlier class must be source-only");
        if (shared < 0 || shared >= spec.num_target_classes)
            fail("confusion pair shared class must be a target class");
    }
}

std::string class_name(int c) {
    std::ostringstream os;
    os << "class_";
    if (c < 10)
        os << '0';
    os << c;
    return os.str();
}

std::string sample_id(const char* prefix, int c, int s) {
    std::ostringstream os;
    os << prefix << "_c" << (c < 10 ? "0" : "") << c << "_s" << (s < 10 ? "00" : s < 100 ? "0" : "")
       << s;
    return os.str();
}

std::vector<double> gauss_vec(std::mt19937_64& rng, int d) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(d);
    for (double& x : v)
        x = g(rng);
    return v;
}

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v)
        s += x * x;
    return std::sqrt(s);
}

void scale_to(std::vector<double>& v, double target_norm) {
    const double n = norm(v);
    if (n < 1e-12) {
        v[0] = target_norm; // degenerate draw; keep deterministic
        return;
    }
    for (double& x : v)
        x *= target_norm / n;
}

} // namespace

std::uint64_t fingerprint(const GeneratorSpec& spec) {
    std::ostringstream os;
    os << "cs=" << spec.num_source_classes << ";ct=" << spec.num_target_classes
       << ";d=" << spec.d_in << ";k=" << spec.k << ";ns=" << spec.samples_per_class_source
       << ";nt=" << spec.samples_per_class_target << ";noise=" << g17(spec.noise_std)
       << ";rot=" << g17(spec.target_shift.rotation_angle)
       << ";off=" << g17(spec.target_shift.offset_scale)
       << ";mult=" << g17(spec.target_shift.noise_multiplier) << ";pairs=";
    for (const auto& [o, s] : spec.temporal_confusion_pairs)
        os << o << '>' << s << ',';
    os << ";seed=" << spec.seed;
    const std::string canon = os.str();
    return fnv1a(kFnvOffset, canon.data(), canon.size());
}

SplitDataset generate(const GeneratorSpec& spec) {
    validate_spec(spec);
    const int cs = spec.num_source_classes;
    const int ct = spec.num_target_classes;
    const int d = spec.d_in;
    const int k = spec.k;

    // Independent seeded streams so e.g. a noise change never reshuffles the
    // class geometry.
    std::mt19937_64 proto_rng(spec.seed * 6364136223846793005ULL + 1);
    std::mt19937_64 motion_rng(spec.seed * 6364136223846793005ULL + 2);
    std::mt19937_64 shift_rng(spec.seed * 6364136223846793005ULL + 3);
    std::mt19937_64 src_noise_rng(spec.seed * 6364136223846793005ULL + 4);
    std::mt19937_64 tgt_noise_rng(spec.seed * 6364136223846793005ULL + 5);

    std::vector<std::vector<double>> proto(cs), motion(cs);
    for (int c = 0; c < cs; ++c) {
        proto[c] = gauss_vec(proto_rng, d);
        scale_to(proto[c], 1.0);
    }
    for (int c = 0; c < cs; ++c) {
        motion[c] = gauss_vec(motion_rng, d);
        scale_to(motion[c], 0.5);
    }
    for (const auto& [outlier, shared] : spec.temporal_confusion_pairs)
        motion[outlier] = motion[shared]; // shared motion, distinct prototype

    // Rotation plane (orthonormal u, v) and constant offset for the target
    // domain.
    std::vector<double> u = gauss_vec(shift_rng, d);
    scale_to(u, 1.0);
    std::vector<double> v = gauss_vec(shift_rng, d);
    double uv = 0.0;
    for (int i = 0; i < d; ++i)
        uv += v[i] * u[i];
    for (int i = 0; i < d; ++i)
        v[i] -= uv * u[i];
    scale_to(v, 1.0);
    std::vector<double> offset = gauss_vec(shift_rng, d);
    scale_to(offset, spec.target_shift.offset_scale);

    const double angle = spec.target_shift.rotation_angle;
    const double cos_a = std::cos(angle), sin_a = std::sin(angle);
    auto shift_frame = [&](std::vector<double>& x) {
        if (angle != 0.0) {
            double p = 0.0, q = 0.0;
            for (int i = 0; i < d; ++i) {
                p += x[i] * u[i];
                q += x[i] * v[i];
            }
            for (int i = 0; i < d; ++i)
                x[i] += (cos_a - 1.0) * (p * u[i] + q * v[i]) + sin_a * (p * v[i] - q * u[i]);
        }
        if (spec.target_shift.offset_scale != 0.0)
            for (int i = 0; i < d; ++i)
                x[i] += offset[i];
    };

    auto make_sample = [&](int c, int s, bool target) {
        Matrix frames(k, d);
        const double sd =
            target ? spec.noise_std * spec.target_shift.noise_multiplier : spec.noise_std;
        std::mt19937_64& rng = target ? tgt_noise_rng : src_noise_rng;
        std::normal_distribution<double> g(0.0, 1.0);
        std::vector<double> x(d);
        for (int j = 0; j < k; ++j) {
            const double t = static_cast<double>(j) / (k - 1);
            for (int i = 0; i < d; ++i)
                x[i] = proto[c][i] + t * motion[c][i];
            if (target)
                shift_frame(x);
            for (int i = 0; i < d; ++i)
                frames(j, i) = sd > 0.0 ? x[i] + sd * g(rng) : x[i];
        }
        return VideoSample(std::move(frames), target ? Domain::target : Domain::source, c,
                           sample_id(target ? "tgt" : "src", c, s));
    };

    SplitDataset data;
    for (int c = 0; c < cs; ++c)
        for (int s = 0; s < spec.samples_per_class_source; ++s)
            data.source.push_back(make_sample(c, s, false));
    for (int c = 0; c < ct; ++c)
        for (int s = 0; s < spec.samples_per_class_target; ++s)
            data.target.push_back(make_sample(c, s, true));
    for (int c = 0; c < cs; ++c)
        data.class_names.push_back(class_name(c));
    data.num_target_classes = ct;
    data.spec_fingerprint = fingerprint(spec);
    return data;
}

GeneratorSpec default_benchmark(const std::string& name) {
    GeneratorSpec s;
    s.d_in = 12;
    if (name == "easy-7of14") {
        s.num_source_classes = 14;
        s.num_target_classes = 7;
        s.k = 4;
        s.samples_per_class_source = 20;
        s.samples_per_class_target = 20;
        s.noise_std = 0.05;
        s.target_shift = {0.15, 0.2, 1.0};
        s.seed = 17;
    } else if (name == "hard-5of10-confused") {
        s.num_source_classes = 10;
        s.num_target_classes = 5;
        s.k = 5;
        s.samples_per_class_source = 40;
        s.samples_per_class_target = 40;
        s.noise_std = 0.05;
        s.target_shift = {0.6, 1.0, 2.0};
        s.temporal_confusion_pairs = {{5, 0}, {6, 1}, {7, 2}};
        s.seed = 29;
    } else if (name == "equal-14of14") {
        s.num_source_classes = 14;
        s.num_target_classes = 14;
        s.k = 4;
        s.samples_per_class_source = 20;
        s.samples_per_class_target = 20;
        s.noise_std = 0.05;
        s.target_shift = {0.3, 0.4, 1.0};
        s.seed = 43;
    } else {
        throw UsageError("unknown benchmark '" + name +
                         "' (expected easy-7of14, hard-5of10-confused, or equal-14of14)");
    }
    return s;
}

void write_features(const SplitDataset& data, const std::filesystem::path& path) {
    const int d = data.feature_dim();
    std::ofstream out(path);
    if (!out)
        throw InputError("cannot open " + path.string() + " for writing");
    out << "id,domain,label,frame";
    for (int i = 0; i < d; ++i)
        out << ",f" << i;
    out << '\n';
    auto emit = [&](const VideoSample& s) {
        const char* dom = s.domain() == Domain::source ? "source" : "target";
        const int label = s.domain() == Domain::source ? s.source_label() : s.eval_label();
        for (int j = 0; j < s.frame_count(); ++j) {
            out << s.id() << ',' << dom << ',' << label << ',' << j + 1;
            for (double v : s.frames().row_span(j))
                out << ',' << g17(v);
            out << '\n';
        }
    };
    for (const auto& s : data.source)
        emit(s);
    for (const auto& s : data.target)
        emit(s);
    if (!out)
        throw InputError("failed writing " + path.string());
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

[[noreturn]] void row_error(int lineno, const std::string& what) {
    std::ostringstream os;
    os << "line " << lineno << ": " << what;
    throw InputError(os.str());
}

int parse_int_field(const std::string& s, int lineno, const char* what) {
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size())
        row_error(lineno, std::string("non-integer ") + what + " '" + s + "'");
    return static_cast<int>(v);
}

double parse_real_field(const std::string& s, int lineno, const char* what) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
        row_error(lineno, std::string("non-numeric ") + what + " '" + s + "'");
    return v;
}

} // namespace

SplitDataset load_features(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw InputError("cannot open " + path.string());

    std::string line;
    int lineno = 0;
    if (!std::getline(in, line))
        row_error(1, "missing header");
    ++lineno;
    const auto header = split_csv(line);
    if (header.size() < 5 || header[0] != "id" || header[1] != "domain" || header[2] != "label" ||
        header[3] != "frame")
        row_error(1, "expected header id,domain,label,frame,f0,...");
    const int d = static_cast<int>(header.size()) - 4;
    for (int i = 0; i < d; ++i)
        if (header[4 + i] != "f" + std::to_string(i))
            row_error(1, "expected feature column f" + std::to_string(i) + ", got '" +
                             header[4 + i] + "'");

    struct Pending {
        std::string id;
        Domain domain = Domain::source;
        int label = 0;
        std::vector<std::vector<double>> rows;
    };

    SplitDataset data;
    int k = 0; // established by the first completed video
    Pending cur;
    std::uint64_t hash = fnv1a(kFnvOffset, line.data(), line.size());
    hash = fnv1a(hash, "\n", 1);

    auto flush = [&](int at_line) {
        if (cur.rows.empty())
            return;
        if (k == 0)
            k = static_cast<int>(cur.rows.size());
        else if (static_cast<int>(cur.rows.size()) != k)
            row_error(at_line, "video '" + cur.id + "' has " + std::to_string(cur.rows.size()) +
                                   " frames, expected " + std::to_string(k));
        Matrix frames(static_cast<int>(cur.rows.size()), d);
        for (std::size_t j = 0; j < cur.rows.size(); ++j)
            for (int i = 0; i < d; ++i)
                frames(static_cast<int>(j), i) = cur.rows[j][i];
        auto& list = cur.domain == Domain::source ? data.source : data.target;
        list.emplace_back(std::move(frames), cur.domain, cur.label, cur.id);
        cur = Pending{};
    };

    while (std::getline(in, line)) {
        ++lineno;
        hash = fnv1a(hash, line.data(), line.size());
        hash = fnv1a(hash, "\n", 1);
        if (line.empty() || line == "\r")
            continue;
        const auto f = split_csv(line);
        if (static_cast<int>(f.size()) != d + 4)
            row_error(lineno, "expected " + std::to_string(d + 4) + " fields, got " +
                                  std::to_string(f.size()));
        if (f[0].empty())
            row_error(lineno, "empty video id");
        Domain dom;
        if (f[1] == "source")
            dom = Domain::source;
        else if (f[1] == "target")
            dom = Domain::target;
        else
            row_error(lineno, "unknown domain '" + f[1] + "'");
        const int label = parse_int_field(f[2], lineno, "label");
        if (label < 0)
            row_error(lineno, "negative label");
        const int frame = parse_int_field(f[3], lineno, "frame index");

        if (f[0] != cur.id)
            flush(lineno);
        if (cur.rows.empty()) {
            cur.id = f[0];
            cur.domain = dom;
            cur.label = label;
        } else {
            if (dom != cur.domain)
                row_error(lineno, "video '" + cur.id + "' switches domain mid-stream");
            if (label != cur.label)
                row_error(lineno, "video '" + cur.id + "' switches label mid-stream");
        }
        if (frame != static_cast<int>(cur.rows.size()) + 1)
            row_error(lineno, "expected frame " + std::to_string(cur.rows.size() + 1) +
                                  " of video '" + f[0] + "', got " + std::to_string(frame));
        std::vector<double> feat(d);
        for (int i = 0; i < d; ++i)
            feat[i] = parse_real_field(f[4 + i], lineno, "feature");
        cur.rows.push_back(std::move(feat));
    }
    flush(lineno);
    if (data.source.empty())
        row_error(lineno, "no source videos in file");
    if (data.target.empty())
        row_error(lineno, "no target videos in file");

    int num_classes = 0;
    for (const auto& s : data.source)
        num_classes = std::max(num_classes, s.source_label() + 1);
    std::vector<bool> source_seen(num_classes, false);
    for (const auto& s : data.source)
        source_seen[s.source_label()] = true;
    for (int c = 0; c < num_classes; ++c)
        if (!source_seen[c])
            throw InputError("source labels must cover 0.." + std::to_string(num_classes - 1) +
                             " with no gaps; class " + std::to_string(c) + " is missing");

    int num_target = 0;
    for (const auto& s : data.target)
        num_target = std::max(num_target, s.eval_label() + 1);
    if (num_target > num_classes)
        throw InputError("target label outside the source label space");
    std::vector<bool> target_seen(num_target, false);
    for (const auto& s : data.target)
        target_seen[s.eval_label()] = true;
    for (int c = 0; c < num_target; ++c)
        if (!target_seen[c])
            throw InputError("target labels must cover the first " + std::to_string(num_target) +
                             " classes with no gaps; class " + std::to_string(c) + " is missing");

    for (int c = 0; c < num_classes; ++c)
        data.class_names.push_back(class_name(c));
    data.num_target_classes = num_target;
    data.spec_fingerprint = hash;
    return data;
}

} // namespace patan
