#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "svs/analytics.hpp"
#include "svs/geometry.hpp"
#include "svs/pipeline.hpp"
#include "svs/rng.hpp"
#include "svs/scenario.hpp"

using svs::BBox;
using svs::Detection;
using svs::KeypointSet;
using svs::Rng;

namespace {

KeypointSet flat_keypoints(double x, double y, double confidence = 0.9) {
    KeypointSet kps{};
    for (auto& kp : kps) kp = {x, y, confidence};
    return kps;
}

Detection person_at(std::int64_t frame, double x, double y, std::int64_t id = -1) {
    Detection d;
    d.frame_index = frame;
    d.det_class = "person";
    d.bbox = {x, y, 40, 90};
    d.confidence = 0.9;
    d.local_track_id = id;
    return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

TEST_CASE("intersection-over-union matches hand-computed values") {
    BBox a{0, 0, 10, 10};
    CHECK(svs::iou(a, a) == doctest::Approx(1.0));

    // Overlap 5x5 = 25; union 100 + 100 - 25 = 175.
    BBox b{5, 5, 10, 10};
    CHECK(svs::iou(a, b) == doctest::Approx(25.0 / 175.0));

    // Contained quarter: inter 25, union 100.
    BBox c{0, 0, 5, 5};
    CHECK(svs::iou(a, c) == doctest::Approx(0.25));

    CHECK(svs::iou(a, BBox{20, 20, 5, 5}) == 0.0);   // disjoint
    CHECK(svs::iou(a, BBox{3, 3, 0, 0}) == 0.0);     // degenerate box
    CHECK(svs::iou(BBox{1, 1, 0, 0}, BBox{1, 1, 0, 0}) == 0.0);
}

TEST_CASE("boxes are clamped to the frame plane") {
    BBox b = svs::clamp_to_frame({-10, -5, 50, 50});
    CHECK(b.x == 0.0);
    CHECK(b.y == 0.0);
    BBox r = svs::clamp_to_frame({svs::kFrameWidth - 10, 0, 50, 20});
    CHECK(r.x + r.w <= svs::kFrameWidth);
}

// ---------------------------------------------------------------------------
// Identity features
// ---------------------------------------------------------------------------

TEST_CASE("identity bases are unit, deterministic and pairwise well-separated") {
    auto a1 = svs::identity_basis("person-a");
    auto a2 = svs::identity_basis("person-a");
    CHECK(svs::cosine(a1, a2) == doctest::Approx(1.0));

    double norm = 0;
    for (double v : a1) norm += v * v;
    CHECK(std::sqrt(norm) == doctest::Approx(1.0));

    // 128-dimensional random unit vectors concentrate near orthogonality.
    std::vector<std::string> ids = {"p1", "p2", "p3", "p4", "p5", "p6", "p7", "p8"};
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = i + 1; j < ids.size(); ++j) {
            CHECK(std::fabs(svs::cosine(svs::identity_basis(ids[i]),
                                        svs::identity_basis(ids[j]))) < 0.5);
        }
    }
}

TEST_CASE("extracted features stay close to their identity and far from others") {
    svs::FeatureConfig cfg;  // sigma_feat = 0.05
    Rng rng(123);
    auto base_a = svs::identity_basis("alice");
    auto base_b = svs::identity_basis("bob");
    for (int i = 0; i < 100; ++i) {
        auto f = svs::make_feature("alice", cfg, rng);
        CHECK(svs::cosine(f, base_a) > 0.99);
        CHECK(std::fabs(svs::cosine(f, base_b)) < 0.5);
    }
}

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

TEST_CASE("detection hit counts follow the configured probability") {
    // One person over N frames: hits ~ Binomial(N, p). With N = 2000 and
    // p = 0.95: mean 1900, sigma = sqrt(N p (1-p)) = 9.75; a 5-sigma band
    // of +/-49 fails spuriously with probability < 1e-6.
    svs::DetectConfig cfg;
    Rng rng(42);
    svs::FrameDescriptor fd;
    fd.camera_id = "cam";
    svs::GtEntity person;
    person.entity_id = "p";
    person.entity_class = "person";
    person.bbox = {100, 100, 40, 90};
    fd.entities.push_back(person);

    int hits = 0;
    const int kFrames = 2000;
    for (int f = 0; f < kFrames; ++f) {
        fd.frame_index = f;
        auto dets = svs::detect_frame(fd, cfg, rng);
        REQUIRE(dets.size() <= 1);
        hits += static_cast<int>(dets.size());
    }
    CHECK(hits >= 1900 - 49);
    CHECK(hits <= 1900 + 49);
}

TEST_CASE("detections perturb the ground-truth box by bounded noise") {
    svs::DetectConfig cfg;
    cfg.p_detect = 1.0;
    Rng rng(7);
    svs::FrameDescriptor fd;
    fd.camera_id = "cam";
    svs::GtEntity person;
    person.entity_id = "p";
    person.entity_class = "person";
    person.bbox = {200, 150, 40, 90};
    fd.entities.push_back(person);
    svs::GtObject bag;
    bag.object_class = "backpack";
    bag.bbox = {300, 300, 30, 30};
    bag.source_entity = "p";
    fd.visible_objects.push_back(bag);

    for (int f = 0; f < 200; ++f) {
        fd.frame_index = f;
        auto dets = svs::detect_frame(fd, cfg, rng);
        REQUIRE(dets.size() == 2);
        CHECK(dets[0].det_class == "person");
        CHECK(std::fabs(dets[0].bbox.x - 200) <= cfg.bbox_noise_px);
        CHECK(std::fabs(dets[0].bbox.y - 150) <= cfg.bbox_noise_px);
        CHECK(dets[0].bbox.w == 40);
        CHECK(dets[0].confidence >= 0.5);
        CHECK(dets[0].confidence <= 1.0);
        CHECK(dets[1].det_class == "backpack");
        CHECK(dets[1].gt_entity_id == "p");
    }
}

TEST_CASE("detection is deterministic for a fixed seed") {
    svs::DetectConfig cfg;
    svs::FrameDescriptor fd;
    fd.camera_id = "cam";
    svs::GtEntity person;
    person.entity_id = "p";
    person.entity_class = "person";
    person.bbox = {100, 100, 40, 90};
    fd.entities.push_back(person);

    auto run = [&]() {
        Rng rng(99);
        std::vector<double> xs;
        for (int f = 0; f < 50; ++f) {
            fd.frame_index = f;
            for (const auto& d : svs::detect_frame(fd, cfg, rng)) xs.push_back(d.bbox.x);
        }
        return xs;
    };
    CHECK(run() == run());
}

// ---------------------------------------------------------------------------
// Tracking
// ---------------------------------------------------------------------------

TEST_CASE("two well-separated people keep their IDs for a whole run") {
    svs::Tracker tracker("cam");
    std::map<std::string, std::set<std::int64_t>> ids_seen;

    for (std::int64_t f = 0; f < 300; ++f) {
        // Person A walks right along y=100, person B along y=500.
        std::vector<Detection> dets;
        dets.push_back(person_at(f, 100 + 0.8 * f, 100));
        dets.back().gt_entity_id = "A";
        dets.push_back(person_at(f, 900 - 0.8 * f, 500));
        dets.back().gt_entity_id = "B";

        std::vector<Detection*> persons;
        for (auto& d : dets) persons.push_back(&d);
        tracker.update_frame(f, persons);

        for (const auto& d : dets) {
            REQUIRE(d.local_track_id > 0);
            ids_seen[d.gt_entity_id].insert(d.local_track_id);
        }
    }
    CHECK(ids_seen["A"].size() == 1);  // zero identity switches
    CHECK(ids_seen["B"].size() == 1);
    CHECK(tracker.tracks_created() == 2);
}

TEST_CASE("a short dropout keeps the ID; a long one retires the tracklet") {
    svs::TrackerConfig cfg;  // max_age = 30 frames
    std::int64_t id_before = 0, id_after_short = 0, id_after_long = 0;

    svs::Tracker t1("cam", cfg);
    for (std::int64_t f = 0; f < 100; ++f) {
        if (f >= 40 && f < 60) {  // 20-frame dropout < max_age
            std::vector<Detection*> none;
            t1.update_frame(f, none);
            continue;
        }
        Detection d = person_at(f, 300, 300);
        std::vector<Detection*> ps{&d};
        t1.update_frame(f, ps);
        if (f < 40) id_before = d.local_track_id;
        if (f >= 60) id_after_short = d.local_track_id;
    }
    CHECK(id_before == id_after_short);

    svs::Tracker t2("cam", cfg);
    for (std::int64_t f = 0; f < 120; ++f) {
        if (f >= 40 && f < 80) {  // 40-frame dropout > max_age
            std::vector<Detection*> none;
            t2.update_frame(f, none);
            continue;
        }
        Detection d = person_at(f, 300, 300);
        std::vector<Detection*> ps{&d};
        t2.update_frame(f, ps);
        if (f < 40) id_before = d.local_track_id;
        if (f >= 80) id_after_long = d.local_track_id;
    }
    CHECK(id_before != id_after_long);
}

// ---------------------------------------------------------------------------
// Pose
// ---------------------------------------------------------------------------

TEST_CASE("pose attachment copies keypoints with bounded per-coordinate noise") {
    svs::PoseConfig cfg;  // 0.25 px
    Rng rng(5);
    svs::GtEntity e;
    e.entity_id = "p";
    e.has_keypoints = true;
    e.keypoints = flat_keypoints(400, 200, 0.8);

    Detection d = person_at(0, 400, 200);
    svs::attach_pose(d, e, cfg, rng);
    REQUIRE(d.has_keypoints);
    for (std::size_t i = 0; i < svs::kKeypointCount; ++i) {
        CHECK(std::fabs(d.keypoints[i].x - 400) <= cfg.kp_noise_px);
        CHECK(std::fabs(d.keypoints[i].y - 200) <= cfg.kp_noise_px);
        CHECK(d.keypoints[i].confidence == 0.8);
    }
}

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------

TEST_CASE("window count follows the stride formula") {
    auto oracle = [](std::int64_t frames) {
        // Count intervals [20i, 20i+29] fully inside [0, frames).
        std::int64_t n = 0;
        while (20 * n + 29 < frames) ++n;
        return n;
    };

    for (std::int64_t t : {30LL, 50LL, 90LL, 36000LL, 31LL, 49LL, 29LL, 70LL}) {
        CHECK(svs::window_count(t) == oracle(t));
    }
    CHECK(svs::window_count(30) == 1);
    CHECK(svs::window_count(50) == 2);
    CHECK(svs::window_count(90) == 4);
    CHECK(svs::window_count(36000) == 1799);
    CHECK(svs::window_count(29) == 0);
}

TEST_CASE("frame coverage alternates between one and two windows") {
    // Enumerate the covering windows of every frame. Within the region where
    // all relevant windows exist, a frame is covered twice exactly when its
    // stride phase is in [0, 9] and it is past the first stride.
    for (std::int64_t total : {30LL, 50LL, 90LL, 36000LL}) {
        const std::int64_t windows = svs::window_count(total);
        std::vector<int> coverage(static_cast<std::size_t>(total), 0);
        for (std::int64_t w = 0; w < windows; ++w) {
            for (std::int64_t f = 20 * w; f <= 20 * w + 29; ++f) {
                coverage[static_cast<std::size_t>(f)]++;
            }
        }
        const std::int64_t steady_end = 20 * (windows - 1) + 19;  // all windows present
        for (std::int64_t f = 0; f < total; ++f) {
            const bool two = coverage[static_cast<std::size_t>(f)] == 2;
            if (f <= steady_end) {
                CHECK(two == (f % 20 <= 9 && f >= 20));
            } else {
                CHECK(coverage[static_cast<std::size_t>(f)] <= 1);  // ragged tail
            }
        }
    }
}

TEST_CASE("the pose buffer evaluates exactly the complete windows") {
    for (std::int64_t total : {30LL, 50LL, 90LL, 2000LL}) {
        svs::PoseBuffer buf("cam");
        std::int64_t emitted = 0;
        for (std::int64_t f = 0; f < total; ++f) {
            buf.add_frame(f, {{1, flat_keypoints(100 + 3.0 * f, 100)}});
            emitted += static_cast<std::int64_t>(buf.complete_through(f).size());
        }
        CHECK(emitted == svs::window_count(total));
        CHECK(buf.windows_evaluated() == svs::window_count(total));
    }
}

TEST_CASE("people below the presence floor do not produce windows") {
    svs::PoseBuffer buf("cam");  // min_presence = 10
    for (std::int64_t f = 0; f < 9; ++f) {
        buf.add_frame(f, {{1, flat_keypoints(100, 100)}});
    }
    // Frames 9..29 have nobody; the single window has a 9-frame presence.
    auto scores = buf.complete_through(29);
    CHECK(scores.empty());

    svs::PoseBuffer buf2("cam");
    for (std::int64_t f = 0; f < 30; ++f) {
        buf2.add_frame(f, {{1, flat_keypoints(100, 100)}});
    }
    CHECK(buf2.complete_through(29).size() == 1);
}

TEST_CASE("displacement scoring saturates for fast movement and zeroes for idling") {
    svs::ScoreConfig cfg;  // v_ref = 2 px/frame
    svs::PoseBuffer buf("cam", cfg);
    for (std::int64_t f = 0; f < 30; ++f) {
        // id 1 sprints (8 px/frame), id 2 stands still.
        buf.add_frame(f, {{1, flat_keypoints(100 + 8.0 * f, 100)},
                          {2, flat_keypoints(600, 400)}});
    }
    auto ws = buf.complete_through(29);
    REQUIRE(ws.size() == 1);
    CHECK(ws[0].person_scores.at(1) == doctest::Approx(1.0));
    CHECK(ws[0].person_scores.at(2) == doctest::Approx(0.0));
    CHECK(ws[0].scene_score() == doctest::Approx(1.0));
}

TEST_CASE("scene timeline keeps the latest window's value per frame") {
    svs::WindowScore w0;
    w0.window_index = 0;
    w0.first_frame = 0;
    w0.last_frame = 29;
    for (std::int64_t f = 0; f <= 29; ++f) w0.frame_scene_scores[f] = 0.2;
    svs::WindowScore w1;
    w1.window_index = 1;
    w1.first_frame = 20;
    w1.last_frame = 49;
    for (std::int64_t f = 20; f <= 49; ++f) w1.frame_scene_scores[f] = 0.8;

    auto tl = svs::scene_timeline({w0, w1});
    CHECK(tl.at(0) == doctest::Approx(0.2));
    CHECK(tl.at(19) == doctest::Approx(0.2));
    CHECK(tl.at(20) == doctest::Approx(0.8));  // overlap: later window wins
    CHECK(tl.at(49) == doctest::Approx(0.8));
}

// ---------------------------------------------------------------------------
// Crop selection
// ---------------------------------------------------------------------------

TEST_CASE("crop metric multiplies area by confident-keypoint fraction") {
    Detection d = person_at(0, 0, 0);
    d.bbox = {0, 0, 10, 20};  // area 200
    CHECK(svs::crop_metric(d) == 0.0);  // no keypoints

    d.has_keypoints = true;
    d.keypoints = flat_keypoints(0, 0, 0.9);
    CHECK(svs::crop_metric(d) == doctest::Approx(200.0));

    // 8 of 17 keypoints confident (>= 0.3).
    for (std::size_t i = 8; i < svs::kKeypointCount; ++i) d.keypoints[i].confidence = 0.1;
    CHECK(svs::crop_metric(d) == doctest::Approx(200.0 * 8.0 / 17.0));
}

TEST_CASE("crop selection equals a brute-force argmax over a thousand random batches") {
    Rng rng(2024);
    for (int iter = 0; iter < 1000; ++iter) {
        svs::EnrichedBatch b;
        const int dets = 1 + static_cast<int>(rng.below(40));
        for (int i = 0; i < dets; ++i) {
            Detection d = person_at(static_cast<std::int64_t>(rng.below(30)),
                                    rng.uniform(0, 1200), rng.uniform(0, 600),
                                    static_cast<std::int64_t>(rng.below(6)) + 1);
            d.bbox.w = rng.uniform(10, 80);
            d.bbox.h = rng.uniform(20, 120);
            if (rng.chance(0.8)) {
                d.has_keypoints = true;
                for (auto& kp : d.keypoints) {
                    kp = {rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(0, 1)};
                }
            }
            if (rng.chance(0.1)) d.det_class = "vehicle";       // ignored
            if (rng.chance(0.1)) d.local_track_id = -1;          // untracked: ignored
            b.detections.push_back(std::move(d));
        }

        // Independent oracle: gather candidates per track, take the maximum
        // metric, break ties toward the earliest list position.
        std::map<std::int64_t, std::vector<std::size_t>> candidates;
        for (std::size_t i = 0; i < b.detections.size(); ++i) {
            const Detection& d = b.detections[i];
            if (d.det_class == "person" && d.local_track_id >= 0) {
                candidates[d.local_track_id].push_back(i);
            }
        }

        auto got = svs::select_crop(b);
        REQUIRE(got.size() == candidates.size());
        for (const auto& [id, idxs] : candidates) {
            auto win = *std::max_element(
                idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t c) {
                    return svs::crop_metric(b.detections[a]) < svs::crop_metric(b.detections[c]);
                });
            CHECK(got.at(id) == b.detections[win].frame_index);
        }
    }
}
