#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "patan/data.hpp"
#include "patan/errors.hpp"

using namespace patan;
namespace fs = std::filesystem;

namespace {

GeneratorSpec small_spec() {
    GeneratorSpec s;
    s.num_source_classes = 3;
    s.num_target_classes = 2;
    s.d_in = 4;
    s.k = 3;
    s.samples_per_class_source = 2;
    s.samples_per_class_target = 2;
    s.noise_std = 0.05;
    s.target_shift.rotation_angle = 0.3;
    s.target_shift.offset_scale = 0.5;
    s.seed = 21;
    return s;
}

fs::path scratch_dir() {
    const fs::path dir = fs::temp_directory_path() / "patan_test_data";
    fs::create_directories(dir);
    return dir;
}

fs::path write_text(const std::string& name, const std::string& content) {
    const fs::path p = scratch_dir() / name;
    std::ofstream out(p);
    out << content;
    return p;
}

std::string check_load_error(const fs::path& p) {
    try {
        load_features(p);
    } catch (const InputError& e) {
        return e.what();
    }
    FAIL("expected InputError");
    return {};
}

} // namespace

TEST_CASE("generated splits have the configured shape") {
    GeneratorSpec spec = small_spec();
    SplitDataset data = generate(spec);
    CHECK(data.source.size() == 6);
    CHECK(data.target.size() == 4);
    CHECK(data.num_classes() == 3);
    CHECK(data.num_target_classes == 2);
    CHECK(data.frame_count() == 3);
    CHECK(data.feature_dim() == 4);
    CHECK(data.class_names[0] == "class_00");
    CHECK(data.class_names[2] == "class_02");
    CHECK(data.source[0].id() == "src_c00_s000");
    CHECK(data.source[0].domain() == Domain::source);
    CHECK(data.source[0].source_label() == 0);
    CHECK(data.target[3].id() == "tgt_c01_s001");
    CHECK(data.spec_fingerprint == fingerprint(spec));
}

TEST_CASE("generation is bit-reproducible for a fixed spec") {
    const GeneratorSpec spec = small_spec();
    SplitDataset a = generate(spec);
    SplitDataset b = generate(spec);
    REQUIRE(a.source.size() == b.source.size());
    for (std::size_t i = 0; i < a.source.size(); ++i) {
        CHECK(a.source[i].id() == b.source[i].id());
        for (std::size_t j = 0; j < a.source[i].frames().size(); ++j)
            CHECK(a.source[i].frames()[j] == b.source[i].frames()[j]);
    }
    for (std::size_t i = 0; i < a.target.size(); ++i)
        for (std::size_t j = 0; j < a.target[i].frames().size(); ++j)
            CHECK(a.target[i].frames()[j] == b.target[i].frames()[j]);

    GeneratorSpec other = spec;
    other.seed = 22;
    SplitDataset c = generate(other);
    bool any_diff = false;
    for (std::size_t j = 0; j < a.source[0].frames().size(); ++j)
        if (a.source[0].frames()[j] != c.source[0].frames()[j])
            any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("without noise or shift the shared classes coincide across domains") {
    GeneratorSpec spec = small_spec();
    spec.noise_std = 0.0;
    spec.target_shift = {};
    SplitDataset data = generate(spec);
    for (const VideoSample& t : data.target) {
        const int c = t.eval_label();
        const int s = t.id().back() - '0';
        const VideoSample& src = data.source[c * spec.samples_per_class_source + s];
        REQUIRE(src.source_label() == c);
        for (std::size_t j = 0; j < t.frames().size(); ++j)
            CHECK(t.frames()[j] == src.frames()[j]);
    }
}

TEST_CASE("confusion-pair classes move identically and differ only in place") {
    GeneratorSpec spec = small_spec();
    spec.noise_std = 0.0;
    spec.temporal_confusion_pairs = {{2, 0}};
    SplitDataset data = generate(spec);
    const Matrix& outlier = data.source[2 * 2].frames(); // class 2, sample 0
    const Matrix& shared = data.source[0].frames();      // class 0, sample 0

    // Same per-frame displacement from the first frame...
    for (int j = 1; j < 3; ++j)
        for (int i = 0; i < 4; ++i) {
            const double d_out = outlier(j, i) - outlier(0, i);
            const double d_shr = shared(j, i) - shared(0, i);
            CHECK(std::abs(d_out - d_shr) < 1e-12);
        }
    // ...but distinct static appearance.
    double gap = 0.0;
    for (int i = 0; i < 4; ++i)
        gap = std::max(gap, std::abs(outlier(0, i) - shared(0, i)));
    CHECK(gap > 0.1);
}

TEST_CASE("spec fingerprints react to every field") {
    const GeneratorSpec base = small_spec();
    const std::uint64_t fp = fingerprint(base);
    CHECK(fingerprint(base) == fp);

    GeneratorSpec m = base;
    m.seed ^= 1;
    CHECK(fingerprint(m) != fp);
    m = base;
    m.noise_std += 0.01;
    CHECK(fingerprint(m) != fp);
    m = base;
    m.target_shift.rotation_angle += 0.1;
    CHECK(fingerprint(m) != fp);
    m = base;
    m.temporal_confusion_pairs = {{2, 0}};
    CHECK(fingerprint(m) != fp);
    m = base;
    m.samples_per_class_target += 1;
    CHECK(fingerprint(m) != fp);
}

TEST_CASE("generator validation rejects inconsistent specs") {
    GeneratorSpec s = small_spec();
    s.num_source_classes = 0;
    CHECK_THROWS_AS(generate(s), ConfigError);
    s = small_spec();
    s.num_target_classes = 4;
    CHECK_THROWS_AS(generate(s), ConfigError);
    s = small_spec();
    s.d_in = 1;
    CHECK_THROWS_AS(generate(s), ConfigError);
    s = small_spec();
    s.k = 1;
    CHECK_THROWS_AS(generate(s), ConfigError);
    s = small_spec();
    s.samples_per_class_target = 0;
    CHECK_THROWS_AS(generate(s), ConfigError);
    s = small_spec();
    s.noise_std = -0.1;
    CHECK_THROWS_AS(generate(s), ConfigError);
    s = small_spec();
    s.temporal_confusion_pairs = {{1, 0}}; // outlier must be a source-only class
    CHECK_THROWS_AS(generate(s), ConfigError);
    s = small_spec();
    s.temporal_confusion_pairs = {{2, 2}}; // shared must be a target class
    CHECK_THROWS_AS(generate(s), ConfigError);
}

TEST_CASE("named benchmark presets") {
    const GeneratorSpec hard = default_benchmark("hard-5of10-confused");
    CHECK(hard.num_source_classes == 10);
    CHECK(hard.num_target_classes == 5);
    CHECK(hard.k == 5);
    CHECK(hard.samples_per_class_source == 40);
    CHECK(hard.target_shift.rotation_angle == 0.6);
    CHECK(hard.target_shift.offset_scale == 1.0);
    CHECK(hard.target_shift.noise_multiplier == 2.0);
    const std::vector<std::pair<int, int>> pairs = {{5, 0}, {6, 1}, {7, 2}};
    CHECK(hard.temporal_confusion_pairs == pairs);

    const GeneratorSpec easy = default_benchmark("easy-7of14");
    CHECK(easy.num_source_classes == 14);
    CHECK(easy.num_target_classes == 7);
    CHECK(easy.temporal_confusion_pairs.empty());

    const GeneratorSpec equal = default_benchmark("equal-14of14");
    CHECK(equal.num_source_classes == 14);
    CHECK(equal.num_target_classes == 14);

    CHECK_THROWS_AS(default_benchmark("nope"), UsageError);
}

TEST_CASE("feature CSV round-trips every bit") {
    GeneratorSpec spec = small_spec();
    SplitDataset data = generate(spec);
    const fs::path p = scratch_dir() / "roundtrip.csv";
    write_features(data, p);

    std::ifstream in(p);
    std::string header;
    std::getline(in, header);
    CHECK(header == "id,domain,label,frame,f0,f1,f2,f3");

    SplitDataset loaded = load_features(p);
    REQUIRE(loaded.source.size() == data.source.size());
    REQUIRE(loaded.target.size() == data.target.size());
    CHECK(loaded.num_target_classes == 2);
    CHECK(loaded.num_classes() == 3);
    for (std::size_t i = 0; i < data.source.size(); ++i) {
        CHECK(loaded.source[i].id() == data.source[i].id());
        CHECK(loaded.source[i].source_label() == data.source[i].source_label());
        for (std::size_t j = 0; j < data.source[i].frames().size(); ++j)
            CHECK(loaded.source[i].frames()[j] == data.source[i].frames()[j]);
    }
    for (std::size_t i = 0; i < data.target.size(); ++i) {
        CHECK(loaded.target[i].domain() == Domain::target);
        for (std::size_t j = 0; j < data.target[i].frames().size(); ++j)
            CHECK(loaded.target[i].frames()[j] == data.target[i].frames()[j]);
    }

    // Loading the same bytes twice fingerprints identically.
    CHECK(load_features(p).spec_fingerprint == loaded.spec_fingerprint);
}

TEST_CASE("loader reports malformed input with line numbers") {
    const std::string header = "id,domain,label,frame,f0,f1\n";

    SUBCASE("bad header") {
        const fs::path p = write_text("bad_header.csv", "id,domain,label\n");
        CHECK(check_load_error(p).find("line 1") != std::string::npos);
    }
    SUBCASE("wrong feature column name") {
        const fs::path p = write_text("bad_col.csv", "id,domain,label,frame,f0,g1\n");
        const std::string msg = check_load_error(p);
        CHECK(msg.find("line 1") != std::string::npos);
        CHECK(msg.find("f1") != std::string::npos);
    }
    SUBCASE("ragged frame counts name the offending video") {
        const fs::path p = write_text("ragged.csv",
                                      header +
                                          "a,source,0,1,0.1,0.2\n"
                                          "a,source,0,2,0.3,0.4\n"
                                          "b,target,0,1,0.5,0.6\n"
                                          "b,target,0,2,0.7,0.8\n"
                                          "b,target,0,3,0.9,1.0\n");
        const std::string msg = check_load_error(p);
        CHECK(msg.find("line 6") != std::string::npos);
        CHECK(msg.find("'b'") != std::string::npos);
        CHECK(msg.find("expected 2") != std::string::npos);
    }
    SUBCASE("non-numeric feature") {
        const fs::path p = write_text("nan_feature.csv",
                                      header + "a,source,0,1,0.1,oops\n");
        const std::string msg = check_load_error(p);
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("oops") != std::string::npos);
    }
    SUBCASE("unknown domain") {
        const fs::path p = write_text("bad_domain.csv",
                                      header + "a,middle,0,1,0.1,0.2\n");
        CHECK(check_load_error(p).find("middle") != std::string::npos);
    }
    SUBCASE("out-of-order frame index") {
        const fs::path p = write_text("bad_frame.csv",
                                      header + "a,source,0,2,0.1,0.2\n");
        const std::string msg = check_load_error(p);
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("expected frame 1") != std::string::npos);
    }
    SUBCASE("field count mismatch") {
        const fs::path p = write_text("short_row.csv", header + "a,source,0,1,0.1\n");
        CHECK(check_load_error(p).find("expected 6 fields") != std::string::npos);
    }
    SUBCASE("source label gap") {
        const fs::path p = write_text("label_gap.csv",
                                      header +
                                          "a,source,0,1,0.1,0.2\n"
                                          "b,source,2,1,0.3,0.4\n"
                                          "t,target,0,1,0.5,0.6\n");
        CHECK(check_load_error(p).find("class 1 is missing") != std::string::npos);
    }
    SUBCASE("target label outside source space") {
        const fs::path p = write_text("target_outside.csv",
                                      header +
                                          "a,source,0,1,0.1,0.2\n"
                                          "t,target,1,1,0.5,0.6\n");
        CHECK(check_load_error(p).find("outside the source label space") != std::string::npos);
    }
    SUBCASE("no target videos") {
        const fs::path p = write_text("no_target.csv", header + "a,source,0,1,0.1,0.2\n");
        CHECK(check_load_error(p).find("no target videos") != std::string::npos);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_features(scratch_dir() / "does_not_exist.csv"), InputError);
    }
}

TEST_CASE("samples reject non-finite features and negative labels") {
    Matrix bad(2, 2, 0.5);
    bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(VideoSample(bad, Domain::source, 0, "x"), InputError);
    CHECK_THROWS_AS(VideoSample(Matrix(2, 2, 1.0), Domain::source, -1, "x"), InputError);
}

TEST_CASE("target labels are quarantined during training sections") {
    audit::reset_quarantine_violations();
    VideoSample tgt(Matrix(2, 2, 0.1), Domain::target, 1, "t0");
    VideoSample src(Matrix(2, 2, 0.1), Domain::source, 1, "s0");

    CHECK_THROWS_AS(tgt.source_label(), UsageError);
    CHECK(src.source_label() == 1);

    CHECK_FALSE(audit::in_training_section());
    CHECK(tgt.eval_label() == 1); // fine outside a training section
    CHECK(audit::quarantine_violations() == 0);

    {
        audit::TrainingSection section;
        CHECK(audit::in_training_section());
        CHECK(src.eval_label() == 1); // source labels are never flagged
        CHECK(audit::quarantine_violations() == 0);
        CHECK(tgt.eval_label() == 1);
        CHECK(audit::quarantine_violations() == 1);
    }
    CHECK_FALSE(audit::in_training_section());
    CHECK(tgt.eval_label() == 1);
    CHECK(audit::quarantine_violations() == 1);

    audit::reset_quarantine_violations();
    CHECK(audit::quarantine_violations() == 0);
}
