// Procedural world: rendering, corpora, and the analytic judges. The
// in-test centroid tracker below is written independently of the library
// so path assertions do not lean on the code under test.

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "motionlab/clip.hpp"
#include "motionlab/manifest.hpp"
#include "motionlab/oracle.hpp"
#include "motionlab/pipeline.hpp"
#include "motionlab/world.hpp"

namespace ml = motionlab;
namespace fs = std::filesystem;

namespace {

// Independent foreground test: a pixel is subject if its channels spread
// far apart (the background is gray, so spread is near zero there).
bool fg_pixel(const ml::VideoClip& c, int f, int y, int x) {
    float lo = 1.0f, hi = 0.0f;
    for (int ch = 0; ch < 3; ++ch) {
        lo = std::min(lo, c.at(f, y, x, ch));
        hi = std::max(hi, c.at(f, y, x, ch));
    }
    return hi - lo > 0.15f;
}

// Mean foreground x coordinate of one frame, or -1 without foreground.
double frame_centroid_x(const ml::VideoClip& c, int f) {
    double sx = 0.0;
    int n = 0;
    for (int y = 0; y < ml::VideoClip::H; ++y)
        for (int x = 0; x < ml::VideoClip::W; ++x)
            if (fg_pixel(c, f, y, x)) {
                sx += x;
                ++n;
            }
    return n > 0 ? sx / n : -1.0;
}

fs::path temp_dir(const char* leaf) {
    fs::path p = fs::temp_directory_path() / "motionlab_tests" / leaf;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("rendering is a pure function of its arguments") {
    ml::SubjectSpec sub{ml::Shape::circle, ml::Color::red, 0.22};
    ml::MotionSpec mot = ml::canonical_motion(ml::MotionFamily::slide_left);
    ml::VideoClip a = ml::render_clip(sub, mot, 5, 9);
    ml::VideoClip b = ml::render_clip(sub, mot, 5, 9);
    CHECK(a.pixels == b.pixels);

    ml::VideoClip c = ml::render_clip(sub, mot, 5, 10);
    CHECK(a.pixels != c.pixels);
    ml::VideoClip d = ml::render_clip(sub, mot, 6, 9);
    CHECK(a.pixels != d.pixels);
}

TEST_CASE("rendered clips stay finite and inside the unit range") {
    ml::Rng rng(99);
    for (int i = 0; i < 12; ++i) {
        ml::SubjectSpec sub = ml::sample_subject(rng);
        ml::MotionFamily fam =
            ml::all_families()[static_cast<size_t>(rng.uniform_int(0, ml::kFamilyCount - 1))];
        ml::MotionSpec mot = ml::sample_motion(fam, rng);
        ml::VideoClip clip = ml::render_clip(sub, mot, rng.next_u64(), rng.next_u64());
        CHECK(clip.finite());
        CHECK(clip.in_unit_range());
    }
}

TEST_CASE("slide_left moves the measured centroid strictly left") {
    ml::SubjectSpec sub{ml::Shape::circle, ml::Color::red, 0.22};
    ml::MotionSpec mot = ml::canonical_motion(ml::MotionFamily::slide_left);
    ml::VideoClip clip = ml::render_clip(sub, mot, 0, 0);
    double prev = frame_centroid_x(clip, 0);
    REQUIRE(prev >= 0.0);
    for (int f = 1; f < ml::VideoClip::F; ++f) {
        double cur = frame_centroid_x(clip, f);
        REQUIRE(cur >= 0.0);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("orbit render is classified as orbit with high confidence") {
    ml::SubjectSpec sub{ml::Shape::square, ml::Color::blue, 0.22};
    ml::MotionSpec mot = ml::canonical_motion(ml::MotionFamily::orbit);
    mot.params.amplitude = 0.25;
    ml::VideoClip clip = ml::render_clip(sub, mot, 7, 7);
    ml::MotionVerdict v = ml::oracle_classify_motion(clip);
    CHECK(v.family == "orbit");
    CHECK(v.confidence >= 0.9);
}

TEST_CASE("motion oracle: bounce, blank frames, and mirror symmetry") {
    ml::SubjectSpec sub{ml::Shape::triangle, ml::Color::yellow, 0.24};
    ml::VideoClip bounce =
        ml::render_clip(sub, ml::canonical_motion(ml::MotionFamily::bounce), 3, 3);
    ml::MotionVerdict vb = ml::oracle_classify_motion(bounce);
    CHECK(vb.family == "bounce");
    CHECK(vb.confidence >= 0.9);

    ml::VideoClip black;  // all zeros: no segmentable subject
    ml::MotionVerdict vn = ml::oracle_classify_motion(black);
    CHECK(vn.family == "none");
    CHECK(vn.confidence == 0.0);

    ml::VideoClip left =
        ml::render_clip(sub, ml::canonical_motion(ml::MotionFamily::slide_left), 4, 4);
    ml::VideoClip right = ml::mirror_horizontal(left);
    CHECK(ml::oracle_classify_motion(left).family == "slide_left");
    CHECK(ml::oracle_classify_motion(right).family == "slide_right");
}

TEST_CASE("subject oracle: labels, blank input, ring hole detection") {
    ml::SubjectSpec sub{ml::Shape::triangle, ml::Color::green, 0.26};
    ml::VideoClip clip = ml::render_clip(sub, ml::canonical_motion(ml::MotionFamily::spin), 2, 2);
    ml::SubjectVerdict v = ml::oracle_classify_subject(clip);
    CHECK(v.shape == "triangle");
    CHECK(v.color == "green");
    CHECK(v.confidence >= 0.9);

    ml::VideoClip flat;
    for (auto& p : flat.pixels) p = 0.42f;  // featureless gray
    ml::SubjectVerdict vn = ml::oracle_classify_subject(flat);
    CHECK(vn.shape == "none");
    CHECK(vn.color == "none");

    ml::MotionSpec slide = ml::canonical_motion(ml::MotionFamily::slide_right);
    ml::VideoClip ring =
        ml::render_clip({ml::Shape::ring, ml::Color::red, 0.26}, slide, 11, 11);
    ml::VideoClip circle =
        ml::render_clip({ml::Shape::circle, ml::Color::red, 0.26}, slide, 11, 11);
    CHECK(ml::oracle_classify_subject(ring).shape == "ring");
    CHECK(ml::oracle_classify_subject(circle).shape == "circle");
}

TEST_CASE("clip features: determinism, color locality, fixed width") {
    static_assert(ml::kClipFeatureDim == 32);
    ml::MotionSpec mot = ml::canonical_motion(ml::MotionFamily::figure_eight);
    ml::VideoClip a = ml::render_clip({ml::Shape::star, ml::Color::red, 0.24}, mot, 8, 8);
    ml::VideoClip a2 = ml::render_clip({ml::Shape::star, ml::Color::red, 0.24}, mot, 8, 8);
    auto fa = ml::clip_features(a);
    CHECK(fa == ml::clip_features(a2));

    // Same trajectory, different color: the path blocks agree to within
    // rasterization noise while the color histogram block moves.
    ml::VideoClip b = ml::render_clip({ml::Shape::star, ml::Color::cyan, 0.24}, mot, 8, 8);
    auto fb = ml::clip_features(b);
    for (int i = 0; i < 8; ++i) CHECK(fa[i] == doctest::Approx(fb[i]).epsilon(0.08));
    double hist_gap = 0.0;
    for (int i = 16; i < 22; ++i) hist_gap += std::abs(fa[i] - fb[i]);
    CHECK(hist_gap > 0.5);
}

TEST_CASE("motion parameters validate against their documented ranges") {
    ml::MotionSpec bad = ml::canonical_motion(ml::MotionFamily::orbit);
    bad.params.amplitude = 0.5;  // radius range tops out below this
    CHECK_THROWS_AS(ml::validate_motion(bad), ml::ParameterError);
    CHECK_THROWS_AS(ml::render_clip({ml::Shape::circle, ml::Color::red, 0.22}, bad, 0, 0),
                    ml::ParameterError);

    ml::SubjectSpec tiny{ml::Shape::circle, ml::Color::red, 0.05};
    CHECK_THROWS_AS(ml::validate_subject(tiny), ml::ParameterError);

    ml::Rng rng(4);
    for (ml::MotionFamily f : ml::all_families()) {
        for (int i = 0; i < 20; ++i) {
            ml::MotionSpec m = ml::sample_motion(f, rng);
            CHECK_NOTHROW(ml::validate_motion(m));
            CHECK(ml::amplitude_range(f).contains(m.params.amplitude));
            if (ml::family_uses_period(f)) CHECK(ml::period_range(f).contains(m.params.period));
        }
        ml::SubjectSpec s = ml::sample_subject(rng);
        CHECK(s.size >= 0.15);
        CHECK(s.size <= 0.3);
    }
}

TEST_CASE("family catalogue splits five common and five uncommon") {
    auto common = ml::families_of(ml::MotionCategory::COMMON);
    auto uncommon = ml::families_of(ml::MotionCategory::UNCOMMON);
    CHECK(common.size() == 5);
    CHECK(uncommon.size() == 5);
    CHECK(ml::family_category(ml::MotionFamily::slide_left) == ml::MotionCategory::COMMON);
    CHECK(ml::family_category(ml::MotionFamily::figure_eight) == ml::MotionCategory::UNCOMMON);
    for (ml::MotionFamily f : ml::all_families())
        CHECK(ml::family_from_string(ml::to_string(f)) == f);
}

TEST_CASE("pretrain corpus covers all pairs with common motions only") {
    fs::path root = temp_dir("corpus");
    ml::DatasetManifest man = ml::make_pretrain_corpus(root, 2, 21);
    CHECK(man.entries.size() == 360);  // 36 subjects x 5 families x 2

    std::set<uint64_t> seeds;
    std::set<std::pair<std::string, std::string>> pairs;
    for (const ml::ManifestEntry& e : man.entries) {
        CHECK(e.motion.category() == ml::MotionCategory::COMMON);
        seeds.insert(e.seed);
        pairs.insert({ml::to_string(e.subject.shape), ml::to_string(e.subject.color)});
    }
    CHECK(seeds.size() == man.entries.size());
    CHECK(pairs.size() == 36);

    // Stored clips must be regenerable bit-exactly from manifest seeds.
    for (size_t i = 0; i < man.entries.size(); i += 60) {
        const ml::ManifestEntry& e = man.entries[i];
        ml::VideoClip stored = ml::load_clip(root / e.clip_path);
        ml::VideoClip redone = ml::render_entry(e);
        CHECK(stored.pixels == redone.pixels);
    }
    CHECK_NOTHROW(ml::validate_manifest(root, man));
    CHECK_THROWS_AS(ml::make_pretrain_corpus(root, 0, 21), ml::ParameterError);
}

TEST_CASE("exemplar sets hold distinct subjects on one uncommon family") {
    fs::path root = temp_dir("exemplars");
    ml::MotionSpec target = ml::canonical_motion(ml::MotionFamily::figure_eight);
    ml::DatasetManifest man = ml::make_exemplar_set(root, target, 5, 1);
    CHECK(man.entries.size() == 5);

    std::set<std::pair<std::string, std::string>> subjects;
    for (const ml::ManifestEntry& e : man.entries) {
        subjects.insert({ml::to_string(e.subject.shape), ml::to_string(e.subject.color)});
        CHECK(e.motion.family == ml::MotionFamily::figure_eight);
        ml::VideoClip clip = ml::load_clip(root / e.clip_path);
        ml::MotionVerdict v = ml::oracle_classify_motion(clip);
        CHECK(v.family == "figure_eight");
    }
    CHECK(subjects.size() == 5);

    CHECK(ml::make_exemplar_set(root, target, 1, 2).entries.size() == 1);
    ml::MotionSpec common = ml::canonical_motion(ml::MotionFamily::bounce);
    CHECK_THROWS_AS(ml::make_exemplar_set(root, common, 5, 1), ml::ParameterError);
    CHECK_THROWS_AS(ml::make_exemplar_set(root, target, 37, 1), ml::ParameterError);
}

TEST_CASE("rendered subject-prior sets are common-motion only") {
    fs::path root = temp_dir("spv");
    ml::DatasetManifest man = ml::make_spv_set_rendered(root, 12, 17);
    CHECK(man.entries.size() == 12);
    for (const ml::ManifestEntry& e : man.entries) {
        CHECK(e.motion.category() == ml::MotionCategory::COMMON);
        CHECK(e.source == ml::ClipSource::RENDERED);
        CHECK(e.prompt_text == ml::prompt_text(e.subject, e.motion.family));
    }
    CHECK_THROWS_AS(ml::make_spv_set_rendered(root, 0, 17), ml::ParameterError);
}

TEST_CASE("manifest records survive a save/load round trip") {
    fs::path root = temp_dir("manifest_io");
    ml::DatasetManifest man = ml::make_spv_set_rendered(root, 4, 31);
    ml::save_manifest(root / "spv.jsonl", man);
    ml::DatasetManifest back = ml::load_manifest(root / "spv.jsonl");
    REQUIRE(back.entries.size() == man.entries.size());
    CHECK(back.split == man.split);
    for (size_t i = 0; i < man.entries.size(); ++i) {
        CHECK(back.entries[i].clip_path == man.entries[i].clip_path);
        CHECK(back.entries[i].prompt_text == man.entries[i].prompt_text);
        CHECK(back.entries[i].seed == man.entries[i].seed);
        CHECK(back.entries[i].subject.size == man.entries[i].subject.size);
        CHECK(back.entries[i].motion.params.amplitude == man.entries[i].motion.params.amplitude);
    }
}

TEST_CASE("clip container io and frame helpers") {
    ml::SubjectSpec sub{ml::Shape::cross, ml::Color::magenta, 0.2};
    ml::VideoClip clip =
        ml::render_clip(sub, ml::canonical_motion(ml::MotionFamily::hop_pause), 13, 13);
    fs::path p = temp_dir("clip_io") / "c.clip";
    ml::save_clip(p, clip);
    ml::VideoClip back = ml::load_clip(p);
    CHECK(back.pixels == clip.pixels);
    CHECK(ml::clip_hash(back) == ml::clip_hash(clip));

    ml::VideoClip twice = ml::mirror_horizontal(ml::mirror_horizontal(clip));
    CHECK(twice.pixels == clip.pixels);
    CHECK(ml::frame_mad(clip, clip, 0) == 0.0);
}
