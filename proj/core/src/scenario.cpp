#include "svs/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "svs/errors.hpp"
#include "svs/rng.hpp"

namespace svs {

using json = nlohmann::json;

namespace {

// Detector watchlist used for injection-evidence validation; mirrors the
// default detection config.
const std::set<std::string> kSuspiciousClasses = {"backpack", "gun", "knife"};

constexpr double kIdleSpeedLimit = 0.5;   // px/frame, mean keypoint drift
constexpr double kAnomalyStep = 4.0;      // px/frame lower bound for fall/fight

constexpr double kPersonW = 34.0, kPersonH = 88.0;
constexpr double kVehicleW = 150.0, kVehicleH = 70.0;
constexpr double kObjectW = 26.0, kObjectH = 20.0;
constexpr double kCarriedW = 18.0, kCarriedH = 22.0;

// 17-keypoint skeleton offsets from the person center (x right, y down).
constexpr double kSkeleton[kKeypointCount][2] = {
    {0, -38},   // nose
    {-3, -40},  {3, -40},    // eyes
    {-6, -38},  {6, -38},    // ears
    {-11, -26}, {11, -26},   // shoulders
    {-15, -12}, {15, -12},   // elbows
    {-16, 2},   {16, 2},     // wrists
    {-7, 6},    {7, 6},      // hips
    {-8, 24},   {8, 24},     // knees
    {-9, 41},   {9, 41},     // ankles
};

constexpr bool is_limb(std::size_t kp) { return kp >= 7; }  // elbows and below

const json* opt_field(const json& j, const char* key) {
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

const json& req_field(const json& j, const char* key, const char* ctx) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw ParseError(std::string("scenario: missing field '") + key + "' in " + ctx);
    }
    return *it;
}

template <typename T>
T field_as(const json& j, const char* key, const char* ctx) {
    try {
        return req_field(j, key, ctx).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("scenario: field '") + key + "' in " + ctx +
                         " has wrong type: " + e.what());
    }
}

std::string fmt_entity(const EntitySpec& e) { return "entity '" + e.entity_id + "'"; }

}  // namespace

const char* to_string(MotionProfile p) {
    switch (p) {
        case MotionProfile::Idle: return "idle";
        case MotionProfile::Walk: return "walk";
        case MotionProfile::Run: return "run";
        case MotionProfile::Fall: return "fall";
        case MotionProfile::Fight: return "fight";
    }
    return "idle";
}

MotionProfile motion_profile_from_string(const std::string& s) {
    if (s == "idle") return MotionProfile::Idle;
    if (s == "walk") return MotionProfile::Walk;
    if (s == "run") return MotionProfile::Run;
    if (s == "fall") return MotionProfile::Fall;
    if (s == "fight") return MotionProfile::Fight;
    throw ParseError("scenario: unknown motion profile '" + s + "'");
}

const char* to_string(AnomalyKind k) {
    return k == AnomalyKind::Object ? "ObjectAnomaly" : "BehavioralAnomaly";
}

AnomalyKind anomaly_kind_from_string(const std::string& s) {
    if (s == "ObjectAnomaly") return AnomalyKind::Object;
    if (s == "BehavioralAnomaly") return AnomalyKind::Behavioral;
    throw ParseError("scenario: unknown anomaly kind '" + s + "'");
}

const CameraSpec* Scenario::find_camera(const std::string& id) const {
    for (const auto& c : cameras) {
        if (c.camera_id == id) return &c;
    }
    return nullptr;
}

// ---------------------------------------------------------------------------
// JSON I/O
// ---------------------------------------------------------------------------

Scenario parse_scenario(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("scenario: parse error at byte ") +
                         std::to_string(e.byte) + ": " + e.what());
    }
    if (!j.is_object()) throw ParseError("scenario: top level must be an object");

    Scenario s;
    s.duration_frames = field_as<std::int64_t>(j, "duration_frames", "scenario");
    s.frame_rate = field_as<double>(j, "frame_rate", "scenario");
    s.seed = field_as<std::uint64_t>(j, "seed", "scenario");

    for (const auto& cj : req_field(j, "cameras", "scenario")) {
        CameraSpec c;
        c.camera_id = field_as<std::string>(cj, "camera_id", "camera");
        c.location_label = field_as<std::string>(cj, "location_label", "camera");
        if (const json* r = opt_field(cj, "reporting")) c.reporting = r->get<bool>();
        s.cameras.push_back(std::move(c));
    }

    for (const auto& ej : req_field(j, "entities", "scenario")) {
        EntitySpec e;
        e.entity_id = field_as<std::string>(ej, "entity_id", "entity");
        e.entity_class = field_as<std::string>(ej, "class", "entity");
        for (const auto& wj : req_field(ej, "trajectory", fmt_entity(e).c_str())) {
            if (!wj.is_array() || wj.size() != 3) {
                throw ParseError("scenario: trajectory waypoints must be [frame, x, y] in " +
                                 fmt_entity(e));
            }
            e.trajectory.push_back(
                {wj[0].get<std::int64_t>(), wj[1].get<double>(), wj[2].get<double>()});
        }
        if (const json* cj = opt_field(ej, "carried_objects")) {
            for (const auto& oj : *cj) {
                CarriedObject o;
                o.object_class = field_as<std::string>(oj, "class", "carried object");
                o.visible_from_frame =
                    field_as<std::int64_t>(oj, "visible_from_frame", "carried object");
                o.visible_to_frame =
                    field_as<std::int64_t>(oj, "visible_to_frame", "carried object");
                e.carried_objects.push_back(std::move(o));
            }
        }
        if (const json* bj = opt_field(ej, "behavior_segments")) {
            for (const auto& sj : *bj) {
                if (!sj.is_array() || sj.size() != 3) {
                    throw ParseError(
                        "scenario: behavior segments must be [from, to, profile] in " +
                        fmt_entity(e));
                }
                e.behavior_segments.push_back({sj[0].get<std::int64_t>(),
                                               sj[1].get<std::int64_t>(),
                                               motion_profile_from_string(sj[2].get<std::string>())});
            }
        }
        if (const json* cams = opt_field(ej, "cameras")) {
            for (const auto& c : *cams) e.cameras.push_back(c.get<std::string>());
        }
        s.entities.push_back(std::move(e));
    }

    if (const json* ij = opt_field(j, "injections")) {
        for (const auto& nj : *ij) {
            InjectionSpec n;
            n.injection_id = field_as<std::string>(nj, "injection_id", "injection");
            n.camera_id = field_as<std::string>(nj, "camera_id", "injection");
            n.kind = anomaly_kind_from_string(field_as<std::string>(nj, "kind", "injection"));
            n.frame_index = field_as<std::int64_t>(nj, "frame_index", "injection");
            s.injections.push_back(std::move(n));
        }
    }

    validate_scenario(s);
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("scenario: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

std::string scenario_to_json(const Scenario& s) {
    json j;
    j["duration_frames"] = s.duration_frames;
    j["frame_rate"] = s.frame_rate;
    j["seed"] = s.seed;
    j["cameras"] = json::array();
    for (const auto& c : s.cameras) {
        j["cameras"].push_back({{"camera_id", c.camera_id},
                                {"location_label", c.location_label},
                                {"reporting", c.reporting}});
    }
    j["entities"] = json::array();
    for (const auto& e : s.entities) {
        json ej;
        ej["entity_id"] = e.entity_id;
        ej["class"] = e.entity_class;
        ej["trajectory"] = json::array();
        for (const auto& w : e.trajectory) ej["trajectory"].push_back({w.frame_index, w.x, w.y});
        if (!e.carried_objects.empty()) {
            ej["carried_objects"] = json::array();
            for (const auto& o : e.carried_objects) {
                ej["carried_objects"].push_back({{"class", o.object_class},
                                                 {"visible_from_frame", o.visible_from_frame},
                                                 {"visible_to_frame", o.visible_to_frame}});
            }
        }
        if (!e.behavior_segments.empty()) {
            ej["behavior_segments"] = json::array();
            for (const auto& b : e.behavior_segments) {
                ej["behavior_segments"].push_back(
                    {b.from_frame, b.to_frame, to_string(b.profile)});
            }
        }
        if (!e.cameras.empty()) ej["cameras"] = e.cameras;
        j["entities"].push_back(std::move(ej));
    }
    if (!s.injections.empty()) {
        j["injections"] = json::array();
        for (const auto& n : s.injections) {
            j["injections"].push_back({{"injection_id", n.injection_id},
                                       {"camera_id", n.camera_id},
                                       {"kind", to_string(n.kind)},
                                       {"frame_index", n.frame_index}});
        }
    }
    return j.dump(2) + "\n";
}

void save_scenario(const Scenario& s, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeError("scenario: cannot write '" + path + "'");
    out << scenario_to_json(s);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

// Trajectory speed (px/frame) over the waypoint span covering [from, to).
double max_speed_within(const EntitySpec& e, std::int64_t from, std::int64_t to) {
    double worst = 0;
    for (std::size_t i = 0; i + 1 < e.trajectory.size(); ++i) {
        const auto& a = e.trajectory[i];
        const auto& b = e.trajectory[i + 1];
        if (b.frame_index <= from || a.frame_index >= to) continue;
        const double frames = static_cast<double>(b.frame_index - a.frame_index);
        const double dist = std::hypot(b.x - a.x, b.y - a.y);
        worst = std::max(worst, dist / frames);
    }
    return worst;
}

}  // namespace

void validate_scenario(const Scenario& s) {
    if (s.duration_frames <= 0)
        throw ValidationError("scenario: duration_frames must be positive");
    if (s.frame_rate <= 0) throw ValidationError("scenario: frame_rate must be positive");
    if (s.cameras.empty()) throw ValidationError("scenario: at least one camera required");

    std::set<std::string> cam_ids;
    for (const auto& c : s.cameras) {
        if (c.camera_id.empty()) throw ValidationError("scenario: camera_id must be non-empty");
        if (!cam_ids.insert(c.camera_id).second)
            throw ValidationError("scenario: duplicate camera_id '" + c.camera_id + "'");
    }

    std::set<std::string> entity_ids;
    for (const auto& e : s.entities) {
        if (!entity_ids.insert(e.entity_id).second)
            throw ValidationError("scenario: duplicate entity_id '" + e.entity_id + "'");
        if (e.entity_class.empty())
            throw ValidationError("scenario: empty class on " + fmt_entity(e));
        if (e.trajectory.empty())
            throw ValidationError("scenario: empty trajectory on " + fmt_entity(e));
        for (std::size_t i = 0; i < e.trajectory.size(); ++i) {
            const auto& w = e.trajectory[i];
            if (i > 0 && w.frame_index <= e.trajectory[i - 1].frame_index)
                throw ValidationError(
                    "scenario: trajectory frame indices must be strictly increasing on " +
                    fmt_entity(e));
            if (w.x < 0 || w.x >= kFrameWidth || w.y < 0 || w.y >= kFrameHeight)
                throw ValidationError("scenario: waypoint outside the frame plane on " +
                                      fmt_entity(e));
        }
        for (const auto& o : e.carried_objects) {
            if (o.object_class.empty())
                throw ValidationError("scenario: carried object without class on " +
                                      fmt_entity(e));
            if (o.visible_from_frame < 0 || o.visible_to_frame <= o.visible_from_frame)
                throw ValidationError(
                    "scenario: carried object visibility window must be non-empty on " +
                    fmt_entity(e));
        }
        for (const auto& b : e.behavior_segments) {
            if (b.from_frame < 0 || b.to_frame <= b.from_frame)
                throw ValidationError("scenario: behavior segment must be non-empty on " +
                                      fmt_entity(e));
            if (b.profile == MotionProfile::Idle &&
                max_speed_within(e, b.from_frame, b.to_frame) > kIdleSpeedLimit + 1e-9) {
                throw ValidationError(
                    "scenario: idle segment with trajectory speed above " +
                    std::to_string(kIdleSpeedLimit) + " px/frame on " + fmt_entity(e));
            }
        }
        for (const auto& c : e.cameras) {
            if (!cam_ids.count(c))
                throw ValidationError("scenario: unknown camera '" + c + "' on " +
                                      fmt_entity(e));
        }
    }

    std::set<std::string> injection_ids;
    for (const auto& n : s.injections) {
        if (!injection_ids.insert(n.injection_id).second)
            throw ValidationError("scenario: duplicate injection_id '" + n.injection_id + "'");
        if (!cam_ids.count(n.camera_id))
            throw ValidationError("scenario: injection '" + n.injection_id +
                                  "' references unknown camera '" + n.camera_id + "'");
        if (n.frame_index < 0 || n.frame_index >= s.duration_frames)
            throw ValidationError("scenario: injection '" + n.injection_id +
                                  "' frame_index outside [0, duration_frames)");

        bool evidenced = false;
        for (const auto& e : s.entities) {
            if (!entity_visible_on(e, n.camera_id)) continue;
            if (n.kind == AnomalyKind::Object) {
                if (kSuspiciousClasses.count(e.entity_class)) evidenced = true;
                for (const auto& o : e.carried_objects) {
                    if (kSuspiciousClasses.count(o.object_class) &&
                        n.frame_index >= o.visible_from_frame &&
                        n.frame_index < o.visible_to_frame)
                        evidenced = true;
                }
            } else {
                for (const auto& b : e.behavior_segments) {
                    if (b.profile != MotionProfile::Idle && b.profile != MotionProfile::Walk &&
                        n.frame_index >= b.from_frame && n.frame_index < b.to_frame)
                        evidenced = true;
                }
            }
            if (evidenced) break;
        }
        if (!evidenced)
            throw ValidationError("scenario: injection '" + n.injection_id +
                                  "' has no supporting evidence at its frame (object "
                                  "visibility or anomalous motion segment)");
    }

    if (!s.injections.empty()) {
        bool any_reporting = false;
        for (const auto& c : s.cameras) any_reporting |= c.reporting;
        if (!any_reporting)
            throw ValidationError(
                "scenario: injections present but no camera has reporting=true");
    }
}

// ---------------------------------------------------------------------------
// Kinematics
// ---------------------------------------------------------------------------

void entity_center_at(const EntitySpec& e, std::int64_t frame, double* x, double* y) {
    const auto& tr = e.trajectory;
    if (frame <= tr.front().frame_index) {
        *x = tr.front().x;
        *y = tr.front().y;
        return;
    }
    if (frame >= tr.back().frame_index) {
        *x = tr.back().x;
        *y = tr.back().y;
        return;
    }
    for (std::size_t i = 0; i + 1 < tr.size(); ++i) {
        if (frame >= tr[i].frame_index && frame <= tr[i + 1].frame_index) {
            const double t = static_cast<double>(frame - tr[i].frame_index) /
                             static_cast<double>(tr[i + 1].frame_index - tr[i].frame_index);
            *x = tr[i].x + t * (tr[i + 1].x - tr[i].x);
            *y = tr[i].y + t * (tr[i + 1].y - tr[i].y);
            return;
        }
    }
    *x = tr.back().x;
    *y = tr.back().y;
}

MotionProfile entity_profile_at(const EntitySpec& e, std::int64_t frame) {
    for (const auto& b : e.behavior_segments) {
        if (frame >= b.from_frame && frame < b.to_frame) return b.profile;
    }
    return MotionProfile::Idle;
}

bool entity_visible_on(const EntitySpec& e, const std::string& camera_id) {
    if (e.cameras.empty()) return true;
    return std::find(e.cameras.begin(), e.cameras.end(), camera_id) != e.cameras.end();
}

// ---------------------------------------------------------------------------
// Frame synthesis
// ---------------------------------------------------------------------------

namespace {

struct KpMotion {
    double phase;    // gait phase
    double dir_x;    // anomaly jitter direction (unit)
    double dir_y;
    double amp;      // anomaly jitter amplitude
    int parity;      // anomaly jitter frame parity
};

KpMotion kp_motion(std::uint64_t seed, const std::string& entity_id, std::size_t kp) {
    const std::uint64_t h = derive_seed(seed, "kp-motion", stable_hash(entity_id), kp);
    KpMotion m;
    m.phase = static_cast<double>(h >> 40) / static_cast<double>(1 << 24) * 2.0 * std::numbers::pi;
    const double ang = static_cast<double>((h >> 16) & 0xffffff) / static_cast<double>(1 << 24) *
                       2.0 * std::numbers::pi;
    m.dir_x = std::cos(ang);
    m.dir_y = std::sin(ang);
    // Alternating step of 2*amp per frame; keep the mean comfortably above
    // the anomalous-motion floor.
    m.amp = 0.5 * (kAnomalyStep + 0.5 + static_cast<double>(h & 0xff) / 255.0 * 0.7);
    m.parity = static_cast<int>((h >> 8) & 1);
    return m;
}

// Per-profile keypoint offset at a frame. Walk/run sway limbs with a gait
// sinusoid; fall/fight jitter every keypoint with an alternating step whose
// per-frame displacement is >= kAnomalyStep; idle is perfectly still.
void apply_profile_offset(MotionProfile p, const KpMotion& m, std::size_t kp,
                          std::int64_t frame, double* dx, double* dy) {
    switch (p) {
        case MotionProfile::Idle:
            *dx = 0;
            *dy = 0;
            return;
        case MotionProfile::Walk:
        case MotionProfile::Run: {
            const double amp = (p == MotionProfile::Walk) ? (is_limb(kp) ? 0.25 : 0.08)
                                                          : (is_limb(kp) ? 1.25 : 0.40);
            const double s = std::sin(2.0 * std::numbers::pi * static_cast<double>(frame) / 6.0 + m.phase);
            *dx = amp * s;
            *dy = 0.3 * amp * std::cos(2.0 * std::numbers::pi * static_cast<double>(frame) / 6.0 + m.phase);
            return;
        }
        case MotionProfile::Fall:
        case MotionProfile::Fight: {
            const int sign = ((frame + m.parity) & 1) ? 1 : -1;
            *dx = m.dir_x * m.amp * sign;
            *dy = m.dir_y * m.amp * sign;
            return;
        }
    }
    *dx = 0;
    *dy = 0;
}

BBox centered_box(double cx, double cy, double w, double h) {
    return clamp_to_frame({cx - w / 2, cy - h / 2, w, h});
}

}  // namespace

FrameDescriptor generate_frame(const Scenario& s, const std::string& camera_id,
                               std::int64_t frame_index, TimeNs capture_ts) {
    if (!s.find_camera(camera_id))
        throw ValidationError("generate_frame: unknown camera '" + camera_id + "'");
    if (frame_index < 0 || frame_index >= s.duration_frames)
        throw ValidationError("generate_frame: frame_index outside [0, duration_frames)");

    FrameDescriptor fd;
    fd.camera_id = camera_id;
    fd.frame_index = frame_index;
    fd.capture_ts = capture_ts;

    for (const auto& e : s.entities) {
        if (!entity_visible_on(e, camera_id)) continue;
        double cx = 0, cy = 0;
        entity_center_at(e, frame_index, &cx, &cy);

        if (e.entity_class == "person") {
            GtEntity g;
            g.entity_id = e.entity_id;
            g.entity_class = e.entity_class;
            g.profile = entity_profile_at(e, frame_index);
            g.bbox = centered_box(cx, cy, kPersonW, kPersonH);
            g.has_keypoints = true;
            Rng conf_rng(derive_seed(s.seed ^ stable_hash(e.entity_id), "kp-conf",
                                     stable_hash(camera_id), frame_index));
            for (std::size_t k = 0; k < kKeypointCount; ++k) {
                const KpMotion m = kp_motion(s.seed, e.entity_id, k);
                double dx = 0, dy = 0;
                apply_profile_offset(g.profile, m, k, frame_index, &dx, &dy);
                g.keypoints[k].x = cx + kSkeleton[k][0] + dx;
                g.keypoints[k].y = cy + kSkeleton[k][1] + dy;
                g.keypoints[k].confidence = conf_rng.uniform(0.25, 1.0);
            }
            fd.entities.push_back(std::move(g));

            for (const auto& o : e.carried_objects) {
                if (frame_index >= o.visible_from_frame && frame_index < o.visible_to_frame) {
                    fd.visible_objects.push_back(
                        {o.object_class,
                         centered_box(cx + kPersonW * 0.6, cy + kPersonH * 0.1, kCarriedW,
                                      kCarriedH),
                         e.entity_id});
                }
            }
        } else if (e.entity_class == "vehicle") {
            GtEntity g;
            g.entity_id = e.entity_id;
            g.entity_class = e.entity_class;
            g.profile = entity_profile_at(e, frame_index);
            g.bbox = centered_box(cx, cy, kVehicleW, kVehicleH);
            fd.entities.push_back(std::move(g));
        } else {
            // Standalone planted object (backpack left on the floor, ...).
            fd.visible_objects.push_back(
                {e.entity_class, centered_box(cx, cy, kObjectW, kObjectH), e.entity_id});
        }
    }
    return fd;
}

std::vector<InjectionSpec> injection_schedule(const Scenario& s) {
    std::vector<InjectionSpec> out = s.injections;
    for (auto& n : out) n.ground_truth_ts = frame_capture_offset(n.frame_index, s.frame_rate);
    std::stable_sort(out.begin(), out.end(), [](const InjectionSpec& a, const InjectionSpec& b) {
        return a.ground_truth_ts < b.ground_truth_ts;
    });
    return out;
}

std::string frame_to_json(const FrameDescriptor& fd) {
    json j;
    j["camera_id"] = fd.camera_id;
    j["frame_index"] = fd.frame_index;
    j["capture_ts"] = fd.capture_ts;
    j["entities"] = json::array();
    for (const auto& g : fd.entities) {
        json gj;
        gj["entity_id"] = g.entity_id;
        gj["class"] = g.entity_class;
        gj["profile"] = to_string(g.profile);
        gj["bbox"] = {g.bbox.x, g.bbox.y, g.bbox.w, g.bbox.h};
        if (g.has_keypoints) {
            gj["keypoints"] = json::array();
            for (const auto& k : g.keypoints) gj["keypoints"].push_back({k.x, k.y, k.confidence});
        }
        j["entities"].push_back(std::move(gj));
    }
    j["visible_objects"] = json::array();
    for (const auto& o : fd.visible_objects) {
        j["visible_objects"].push_back({{"class", o.object_class},
                                        {"bbox", {o.bbox.x, o.bbox.y, o.bbox.w, o.bbox.h}},
                                        {"source_entity", o.source_entity}});
    }
    return j.dump();
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

namespace {

const char* kCampusLabels[8] = {"parking-lot", "parking-lot", "hallway", "hallway",
                                "hallway",     "entrance",    "entrance", "vending-machine"};

std::string cam_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "cam-%02d", i + 1);
    return buf;
}

// Horizontal pacing trajectory: back and forth between x0 and x1 at `speed`
// px/frame on row y, long enough to cover `duration` frames.
std::vector<Waypoint> pacing(double x0, double x1, double y, double speed,
                             std::int64_t duration, bool start_right) {
    std::vector<Waypoint> w;
    const double span = std::abs(x1 - x0);
    const std::int64_t leg = std::max<std::int64_t>(1, llround(span / speed));
    std::int64_t f = 0;
    bool right = start_right;
    w.push_back({0, right ? x0 : x1, y});
    while (f < duration) {
        f += leg;
        w.push_back({f, right ? x1 : x0, y});
        right = !right;
    }
    return w;
}

EntitySpec walker(const std::string& id, const std::string& cam, double y, double speed,
                  std::int64_t duration, bool start_right) {
    EntitySpec e;
    e.entity_id = id;
    e.entity_class = "person";
    e.trajectory = pacing(200, 1080, y, speed, duration, start_right);
    e.behavior_segments.push_back({0, duration, MotionProfile::Walk});
    e.cameras.push_back(cam);
    return e;
}

EntitySpec idler(const std::string& id, const std::string& cam, double x, double y,
                 std::int64_t duration) {
    EntitySpec e;
    e.entity_id = id;
    e.entity_class = "person";
    e.trajectory.push_back({0, x, y});
    e.behavior_segments.push_back({0, duration, MotionProfile::Idle});
    e.cameras.push_back(cam);
    return e;
}

}  // namespace

Scenario make_calibration_scenario(int cameras, int walkers_per_camera,
                                   std::int64_t duration_frames, std::uint64_t seed) {
    Scenario s;
    s.duration_frames = duration_frames;
    s.frame_rate = 30.0;
    s.seed = seed;
    for (int c = 0; c < cameras; ++c) {
        s.cameras.push_back({cam_name(c), kCampusLabels[c % 8], c == 0});
        for (int w = 0; w < walkers_per_camera; ++w) {
            s.entities.push_back(walker(cam_name(c) + "-walk-" + std::to_string(w + 1),
                                        cam_name(c), 240.0 + 70.0 * w, 0.55, duration_frames,
                                        (w % 2) == 0));
        }
    }
    validate_scenario(s);
    return s;
}

Scenario make_campus_scenario(std::int64_t duration_frames, std::uint64_t seed) {
    Scenario s;
    s.duration_frames = duration_frames;
    s.frame_rate = 30.0;
    s.seed = seed;
    for (int c = 0; c < 8; ++c) s.cameras.push_back({cam_name(c), kCampusLabels[c], c == 0});

    auto add_vehicle = [&](const std::string& id, const std::string& cam, double y) {
        EntitySpec e;
        e.entity_id = id;
        e.entity_class = "vehicle";
        e.trajectory = pacing(220, 1060, y, 0.35, duration_frames, true);
        e.cameras.push_back(cam);
        s.entities.push_back(std::move(e));
    };

    // Parking lots: a cruising vehicle plus two pedestrians each.
    for (int c = 0; c < 2; ++c) {
        const std::string cam = cam_name(c);
        add_vehicle(cam + "-veh-1", cam, 520);
        s.entities.push_back(walker(cam + "-walk-1", cam, 260, 0.55, duration_frames, true));
        s.entities.push_back(walker(cam + "-walk-2", cam, 330, 0.50, duration_frames, false));
    }
    // Hallways: three pedestrians each.
    for (int c = 2; c < 5; ++c) {
        const std::string cam = cam_name(c);
        s.entities.push_back(walker(cam + "-walk-1", cam, 250, 0.55, duration_frames, true));
        s.entities.push_back(walker(cam + "-walk-2", cam, 330, 0.48, duration_frames, false));
        s.entities.push_back(walker(cam + "-walk-3", cam, 410, 0.52, duration_frames, true));
    }
    // Entrances: two pedestrians and one person waiting.
    for (int c = 5; c < 7; ++c) {
        const std::string cam = cam_name(c);
        s.entities.push_back(walker(cam + "-walk-1", cam, 270, 0.55, duration_frames, true));
        s.entities.push_back(walker(cam + "-walk-2", cam, 350, 0.50, duration_frames, false));
        s.entities.push_back(idler(cam + "-idle-1", cam, 980, 430, duration_frames));
    }
    // Vending machine: one browser, one passer-by.
    s.entities.push_back(idler("cam-08-idle-1", "cam-08", 700, 360, duration_frames));
    s.entities.push_back(walker("cam-08-walk-1", "cam-08", 280, 0.50, duration_frames, true));

    validate_scenario(s);
    return s;
}

Scenario make_pcp_scenario(int cameras, AnomalyKind kind, int samples,
                           int background_per_camera, std::uint64_t seed) {
    // Injections every 25 s (750 frames at 30 FPS): far beyond the analyzer
    // cooldown, so every sample is unambiguous.
    constexpr std::int64_t kLeadIn = 600;
    constexpr std::int64_t kSpacing = 750;
    constexpr std::int64_t kObjectVisibility = 90;
    constexpr std::int64_t kFallDuration = 120;

    Scenario s;
    s.frame_rate = 30.0;
    s.seed = seed;
    s.duration_frames = kLeadIn + static_cast<std::int64_t>(samples) * kSpacing + 900;

    for (int c = 0; c < cameras; ++c)
        s.cameras.push_back({cam_name(c), kCampusLabels[c % 8], c == 0});

    // The subject entity performs every injection on the reporting camera.
    EntitySpec subject;
    subject.entity_id = "subject-1";
    subject.entity_class = "person";
    subject.trajectory = pacing(300, 980, 420, 0.45, s.duration_frames, true);
    subject.cameras.push_back(cam_name(0));
    if (kind == AnomalyKind::Object) {
        subject.behavior_segments.push_back({0, s.duration_frames, MotionProfile::Walk});
        for (int i = 0; i < samples; ++i) {
            const std::int64_t at = kLeadIn + i * kSpacing;
            subject.carried_objects.push_back({"backpack", at, at + kObjectVisibility});
        }
    } else {
        std::int64_t cursor = 0;
        for (int i = 0; i < samples; ++i) {
            const std::int64_t at = kLeadIn + i * kSpacing;
            subject.behavior_segments.push_back({cursor, at, MotionProfile::Walk});
            subject.behavior_segments.push_back({at, at + kFallDuration, MotionProfile::Fall});
            cursor = at + kFallDuration;
        }
        subject.behavior_segments.push_back({cursor, s.duration_frames, MotionProfile::Walk});
    }
    s.entities.push_back(std::move(subject));

    for (int c = 0; c < cameras; ++c) {
        for (int b = 0; b < background_per_camera; ++b) {
            s.entities.push_back(walker(cam_name(c) + "-bg-" + std::to_string(b + 1),
                                        cam_name(c), 230.0 + 55.0 * b, 0.50, s.duration_frames,
                                        (b % 2) == 0));
        }
    }

    for (int i = 0; i < samples; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "inj-%03d", i + 1);
        s.injections.push_back(
            {buf, cam_name(0), kind, kLeadIn + i * kSpacing, 0});
    }

    validate_scenario(s);
    return s;
}

}  // namespace svs
