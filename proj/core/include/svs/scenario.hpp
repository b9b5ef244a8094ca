#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "svs/geometry.hpp"
#include "svs/time.hpp"

namespace svs {

// ---------------------------------------------------------------------------
// Scripted-scene description: cameras, entities with waypoint trajectories
// and motion profiles, plus anomaly injections with known ground truth.
// ---------------------------------------------------------------------------

enum class MotionProfile { Idle, Walk, Run, Fall, Fight };

const char* to_string(MotionProfile p);
MotionProfile motion_profile_from_string(const std::string& s);

enum class AnomalyKind { Object, Behavioral };

const char* to_string(AnomalyKind k);                      // "ObjectAnomaly" / "BehavioralAnomaly"
AnomalyKind anomaly_kind_from_string(const std::string& s);

struct CameraSpec {
    std::string camera_id;
    std::string location_label;  // e.g. hallway, parking-lot
    bool reporting = false;      // anomalies from this camera reach notification
};

struct Waypoint {
    std::int64_t frame_index = 0;
    double x = 0;  // entity center, pixels
    double y = 0;
};

struct CarriedObject {
    std::string object_class;  // JSON key "class"
    std::int64_t visible_from_frame = 0;
    std::int64_t visible_to_frame = 0;  // exclusive
};

struct BehaviorSegment {
    std::int64_t from_frame = 0;
    std::int64_t to_frame = 0;  // exclusive
    MotionProfile profile = MotionProfile::Idle;
};

struct EntitySpec {
    std::string entity_id;
    std::string entity_class;  // JSON key "class": person, vehicle, backpack, ...
    std::vector<Waypoint> trajectory;
    std::vector<CarriedObject> carried_objects;
    std::vector<BehaviorSegment> behavior_segments;
    // Cameras this entity is visible on; empty = all cameras.
    std::vector<std::string> cameras;
};

struct InjectionSpec {
    std::string injection_id;
    std::string camera_id;
    AnomalyKind kind = AnomalyKind::Object;
    std::int64_t frame_index = 0;
    TimeNs ground_truth_ts = 0;  // filled when the schedule is resolved
};

struct Scenario {
    std::int64_t duration_frames = 0;
    double frame_rate = 30.0;
    std::uint64_t seed = 0;
    std::vector<CameraSpec> cameras;
    std::vector<EntitySpec> entities;
    std::vector<InjectionSpec> injections;

    const CameraSpec* find_camera(const std::string& id) const;
    std::int64_t batch_count(int frames_per_batch = 30) const {
        return duration_frames / frames_per_batch;
    }
};

// ---------------------------------------------------------------------------
// Ground-truth frame content handed to the per-camera pipeline.
// ---------------------------------------------------------------------------

struct GtEntity {
    std::string entity_id;
    std::string entity_class;
    BBox bbox;
    MotionProfile profile = MotionProfile::Idle;
    bool has_keypoints = false;  // persons only
    KeypointSet keypoints{};
};

struct GtObject {
    std::string object_class;
    BBox bbox;
    std::string source_entity;  // carrier or standalone entity id
};

struct FrameDescriptor {
    std::string camera_id;
    std::int64_t frame_index = 0;
    TimeNs capture_ts = 0;
    std::vector<GtEntity> entities;
    std::vector<GtObject> visible_objects;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Parse + validate a scenario document. Throws ParseError (malformed text,
// message carries the byte offset) or ValidationError (named invariant).
Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& json_text);
std::string scenario_to_json(const Scenario& s);
void save_scenario(const Scenario& s, const std::string& path);
void validate_scenario(const Scenario& s);

// Interpolated entity center at a frame (linear between waypoints, clamped
// to the first/last waypoint outside their range).
void entity_center_at(const EntitySpec& e, std::int64_t frame, double* x, double* y);

MotionProfile entity_profile_at(const EntitySpec& e, std::int64_t frame);

bool entity_visible_on(const EntitySpec& e, const std::string& camera_id);

// Deterministic synthetic frame: entity bboxes, person keypoints (gait /
// anomaly jitter per motion profile), visible objects. Content depends only
// on (scenario.seed, camera_id, frame_index); capture_ts is stamped by the
// caller's clock.
FrameDescriptor generate_frame(const Scenario& s, const std::string& camera_id,
                               std::int64_t frame_index, TimeNs capture_ts);

// One entry per injection with ground_truth_ts resolved against the ideal
// 30 FPS capture schedule (epoch 0), sorted by ground_truth_ts. Runs resolve
// actual stamps themselves when the source lags.
std::vector<InjectionSpec> injection_schedule(const Scenario& s);

// Serialization of descriptors (stream-determinism checks and debug dumps).
std::string frame_to_json(const FrameDescriptor& fd);

// ---------------------------------------------------------------------------
// Bundled scenario builders
// ---------------------------------------------------------------------------

// Eight-camera campus layout: two parking lots, three hallways, two
// entrances, one vending-machine corner; mixed pedestrian/vehicle densities.
Scenario make_campus_scenario(std::int64_t duration_frames = 36000, std::uint64_t seed = 7001);

// Uniform-load scene used for latency/throughput calibration runs:
// `cameras` cameras, `walkers_per_camera` pedestrians pacing each one.
Scenario make_calibration_scenario(int cameras, int walkers_per_camera = 2,
                                   std::int64_t duration_frames = 36000,
                                   std::uint64_t seed = 4242);

// Physical->cyber->physical measurement scene: camera 0 reports; `samples`
// well-separated injections of the given kind on it; background walkers on
// every camera (density emulates the measured deployment conditions).
Scenario make_pcp_scenario(int cameras, AnomalyKind kind, int samples,
                           int background_per_camera = 2, std::uint64_t seed = 9001);

}  // namespace svs
