#pragma once

// Seeded scenario generator: subjects walk through the camera's field of
// view and either approach and interact with the robot or pass by. Head
// pose, eye-contact state and projected facial landmarks are synthesized
// per frame. Every sequence is a pure function of (config, intent, seed).

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "iid/core.hpp"
#include "iid/errors.hpp"
#include "iid/rng.hpp"

namespace iid {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

/// Pinhole camera at the sensor origin, looking along +z, +y up. The ground
/// plane sits `height` meters below the sensor.
struct CameraModel {
  double hfov_deg = 90.0;
  double vfov_deg = 59.0;
  double height = 1.0;

  double tan_h() const { return std::tan(deg2rad(hfov_deg) / 2.0); }
  double tan_v() const { return std::tan(deg2rad(vfov_deg) / 2.0); }

  bool in_fov(double x, double y, double z) const {
    if (z <= 0.05) return false;
    return std::abs(x) <= z * tan_h() && std::abs(y) <= z * tan_v();
  }

  // Normalized image coordinates in [-1, 1] inside the FOV.
  std::array<double, 2> project(double x, double y, double z) const {
    return {x / (z * tan_h()), y / (z * tan_v())};
  }
};

/// Canonical 3D landmark coordinates in the head frame (+x subject's left,
/// +y up, +z out of the face), meters. Point order matches landmark_names().
struct FaceTemplate {
  std::array<std::array<double, 3>, kLandmarkCount> points;

  static const FaceTemplate& canonical() {
    static const FaceTemplate t = build();
    return t;
  }

 private:
  static FaceTemplate build() {
    FaceTemplate t;
    auto set = [&t](int i, double x, double y, double z) {
      t.points[i] = {x, y, z};
    };
    set(0, +0.027, -0.048, 0.046);   // mouth_left
    set(1, -0.027, -0.048, 0.046);   // mouth_right
    set(2, 0.0, -0.042, 0.052);      // mouth_top
    set(3, 0.0, -0.056, 0.050);      // mouth_bottom
    set(4, +0.052, 0.030, 0.040);    // eye_left_outer
    set(5, +0.025, 0.030, 0.048);    // eye_left_inner
    set(6, -0.025, 0.030, 0.048);    // eye_right_inner
    set(7, -0.052, 0.030, 0.040);    // eye_right_outer
    set(8, +0.0385, 0.030, 0.046);   // iris_left
    set(9, -0.0385, 0.030, 0.046);   // iris_right
    set(10, 0.0, -0.008, 0.070);     // nose_tip
    set(11, +0.017, -0.015, 0.048);  // nose_wing_left
    set(12, -0.017, -0.015, 0.048);  // nose_wing_right
    for (int j = 0; j < 26; ++j) {
      const double th = 2.0 * kPi * j / 26.0;
      const double s = std::sin(th), c = std::cos(th);
      set(13 + j, 0.072 * s, -0.012 + 0.092 * c,
          0.050 - 0.045 * std::pow(std::abs(s), 1.2));
    }
    return t;
  }
};

/// One environment's generation knobs. All angles in degrees, lengths in
/// meters, durations in seconds.
struct EnvConfig {
  std::string name = "lab";
  int positives = 33;
  int negatives = 59;
  double frame_rate = 5.0;

  double spawn_radius_min = 5.0, spawn_radius_max = 7.0;
  double spawn_halfangle_deg = 35.0;
  double veer_distance_lo = 2.2, veer_distance_hi = 3.6;
  double speed_min = 0.9, speed_max = 1.6;
  double chest_height_min = 0.95, chest_height_max = 1.15;
  double head_above_chest = 0.40;
  double stop_distance_min = 0.555, stop_distance_max = 0.68;
  double dwell_s_min = 0.4, dwell_s_max = 1.0;
  double depart_s = 1.2;
  double min_duration_s = 3.0, max_duration_s = 12.0;
  double max_range = 8.0;

  double glance_rate = 0.12;      // negatives: stationary look probability
  double glance_switch = 0.55;    // Markov state refresh probability
  double eyes_only_aversion_prob = 0.65;
  double away_head_min_deg = 15.0, away_head_max_deg = 50.0;
  double gaze_ramp_lo = 0.26, gaze_ramp_hi = 0.95;
  double gaze_ramp_mid_m = 3.0;   // distance of the ramp midpoint
  double gaze_ramp_steepness = 1.4;

  double negative_closest_median = 1.95;
  double negative_closest_sigma = 0.25;  // lognormal sigma
  double negative_closest_min = 0.75, negative_closest_max = 3.5;
  double hesitator_fraction = 0.38;  // negatives that approach, pause, leave
  double shy_fraction = 0.10;        // positives with a late gaze ramp
  double talk_gain = 1.0;            // how much subjects open up to speak
  double talker_fraction = 0.60;     // positives that rehearse their opener
  double negative_talk_fraction = 0.60;  // negatives chatting on the move
  double pause_prob = 0.30;          // chance of a mid-walk standstill

  double pose_noise_deg = 6.0;
  double landmark_noise = 0.0035;  // normalized image units at 3 m
  double face_visible_angle_deg = 70.0;

  void validate() const {
    auto bad = [this](const std::string& what) {
      throw ConfigError("env " + name + ": " + what);
    };
    if (name.empty()) bad("empty name");
    if (positives < 0 || negatives < 0) bad("negative sequence count");
    if (frame_rate < 2.0 || frame_rate > 30.0) bad("frame_rate outside [2, 30]");
    if (speed_min < 0.3 || speed_max > 2.5 || speed_min > speed_max) {
      bad("speed outside [0.3, 2.5]");
    }
    if (!(spawn_radius_min > 1.0) || spawn_radius_min > spawn_radius_max) {
      bad("bad spawn radii");
    }
    if (spawn_halfangle_deg <= 0 || spawn_halfangle_deg > 40) {
      bad("spawn_halfangle_deg outside (0, 40]");
    }
    if (veer_distance_lo < 1.2 || veer_distance_hi > 4.5 ||
        veer_distance_lo > veer_distance_hi) {
      bad("veer distance outside [1.2, 4.5]");
    }
    if (stop_distance_min < 0.5 || stop_distance_max > 0.7 ||
        stop_distance_min > stop_distance_max) {
      bad("stop distance outside [0.5, 0.7]");
    }
    if (chest_height_min <= 0 || chest_height_min > chest_height_max) {
      bad("bad chest heights");
    }
    if (negative_closest_min <= 0.3 ||
        negative_closest_min > negative_closest_max ||
        negative_closest_max >= spawn_radius_min) {
      bad("bad negative closest-approach range");
    }
    if (talk_gain < 0 || talk_gain > 1) bad("talk_gain outside [0, 1]");
    if (hesitator_fraction < 0 || hesitator_fraction > 1 ||
        shy_fraction < 0 || shy_fraction > 1 ||
        talker_fraction < 0 || talker_fraction > 1 ||
        negative_talk_fraction < 0 || negative_talk_fraction > 1 ||
        pause_prob < 0 || pause_prob > 1 ||
        eyes_only_aversion_prob < 0 || eyes_only_aversion_prob > 1 ||
        glance_rate < 0 || glance_rate > 1 || glance_switch <= 0 ||
        glance_switch > 1) {
      bad("probability outside [0, 1]");
    }
    if (away_head_min_deg < 5.0 || away_head_max_deg > 80.0 ||
        away_head_min_deg > away_head_max_deg) {
      bad("away head offset range must sit inside [5, 80] degrees");
    }
    if (gaze_ramp_lo < 0 || gaze_ramp_hi > 1 || gaze_ramp_lo > gaze_ramp_hi) {
      bad("bad gaze ramp range");
    }
    if (min_duration_s <= 0 || min_duration_s > max_duration_s) {
      bad("bad duration range");
    }
    if (pose_noise_deg < 0 || landmark_noise < 0) bad("negative noise");
    if (max_range <= spawn_radius_max * 0.9 || max_range > 15.0) {
      bad("max_range must cover the spawn radius");
    }
  }
};

namespace detail {

struct Rot3 {
  std::array<std::array<double, 3>, 3> m;

  std::array<double, 3> apply(const std::array<double, 3>& p) const {
    return {m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2]};
  }
};

// Head orientation: yaw about +y (0 faces +z), then pitch (positive looks
// up), then roll about the face normal.
inline Rot3 head_rotation(double yaw, double pitch, double roll) {
  const double sy = std::sin(yaw), cy = std::cos(yaw);
  const double sp = std::sin(pitch), cp = std::cos(pitch);
  const double sr = std::sin(roll), cr = std::cos(roll);
  // R_y(yaw) * R_x(-pitch) * R_z(roll)
  const Rot3 ry{{{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}}};
  const Rot3 rx{{{{1, 0, 0}, {0, cp, sp}, {0, -sp, cp}}}};
  const Rot3 rz{{{{cr, -sr, 0}, {sr, cr, 0}, {0, 0, 1}}}};
  auto mul = [](const Rot3& a, const Rot3& b) {
    Rot3 r{};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        r.m[i][j] = 0.0;
        for (int k = 0; k < 3; ++k) r.m[i][j] += a.m[i][k] * b.m[k][j];
      }
    }
    return r;
  };
  return mul(mul(ry, rx), rz);
}

inline std::array<double, 3> face_normal(double yaw, double pitch) {
  return {std::cos(pitch) * std::sin(yaw), std::sin(pitch),
          std::cos(pitch) * std::cos(yaw)};
}

struct FaceRenderSettings {
  double noise_base = 0.01;          // normalized units at the reference range
  double noise_ref_dist = 3.0;       // meters
  double visible_angle_deg = 70.0;
  double mouth_open = 0.0;           // 0 closed .. 1 speaking
};

// Conjugate iris offset in the head frame for a given eye-vs-head residual.
// Eye gaze saturates: irises can only travel so far inside the lids.
inline std::array<double, 2> iris_offset(double rho_yaw, double rho_pitch) {
  return {std::clamp(0.040 * rho_yaw, -0.026, 0.026),
          std::clamp(0.040 * rho_pitch, -0.018, 0.018)};
}

// Landmarks for one frame, or absent when the face is not detectable
// (outside the FOV or turned too far away). iris_shift moves both irises in
// the head frame to decouple eye gaze from head pose.
inline std::optional<LandmarkSet> render_face(
    const CameraModel& cam, const std::array<double, 3>& head_center,
    double yaw, double pitch, double roll,
    const std::array<double, 2>& iris_shift, const FaceRenderSettings& fs,
    Rng& rng) {
  const double dist = std::hypot(head_center[0], head_center[2]);
  if (!cam.in_fov(head_center[0], head_center[1], head_center[2])) {
    return std::nullopt;
  }
  const std::array<double, 3> n = face_normal(yaw, pitch);
  const double dn = std::sqrt(head_center[0] * head_center[0] +
                              head_center[1] * head_center[1] +
                              head_center[2] * head_center[2]);
  const double cos_view = (-head_center[0] * n[0] - head_center[1] * n[1] -
                           head_center[2] * n[2]) /
                          dn;
  if (cos_view < std::cos(deg2rad(fs.visible_angle_deg))) return std::nullopt;

  const Rot3 r = head_rotation(yaw, pitch, roll);
  const FaceTemplate& tpl = FaceTemplate::canonical();
  std::array<std::array<double, 3>, kLandmarkCount> world;
  for (int i = 0; i < kLandmarkCount; ++i) {
    std::array<double, 3> p = tpl.points[i];
    if (i == 8 || i == 9) {
      p[0] += iris_shift[0];
      p[1] += iris_shift[1];
    }
    // Speech opens the jaw: the lower lip drops, corners follow slightly.
    if (i == 3) p[1] -= 0.016 * fs.mouth_open;
    if (i == 0 || i == 1) p[1] -= 0.006 * fs.mouth_open;
    if (i == 2) p[1] += 0.003 * fs.mouth_open;
    const std::array<double, 3> q = r.apply(p);
    world[i] = {head_center[0] + q[0], head_center[1] + q[1],
                head_center[2] + q[2]};
    if (world[i][2] <= 0.1) return std::nullopt;
  }
  double mean_z = 0.0;
  for (const auto& w : world) mean_z += w[2];
  mean_z /= kLandmarkCount;
  const double sigma = fs.noise_base * (dist / fs.noise_ref_dist);
  std::vector<double> raw(kLandmarkDim);
  for (int i = 0; i < kLandmarkCount; ++i) {
    const std::array<double, 2> uv =
        cam.project(world[i][0], world[i][1], world[i][2]);
    raw[3 * i + 0] = uv[0] + rng.normal(0.0, sigma);
    raw[3 * i + 1] = uv[1] + rng.normal(0.0, sigma);
    raw[3 * i + 2] = (world[i][2] - mean_z) + rng.normal(0.0, 0.5 * sigma);
  }
  return normalize_landmarks(raw);
}

// Two-state eye-contact chain: each frame the state is redrawn with
// probability `switch_p` toward the stationary probability `pi`.
inline bool gaze_markov_step(bool state, double pi, double switch_p, Rng& rng) {
  if (rng.uniform() < switch_p) return rng.uniform() < pi;
  return state;
}

struct HeadState {
  double yaw = 0.0, pitch = 0.0, roll = 0.0;
  double wander_yaw = 0.0, wander_pitch = 0.0;  // AR(1) idle motion

  void slew_to(double yaw_t, double pitch_t, double dt) {
    const double max_yaw = deg2rad(240.0) * dt;
    const double max_pitch = deg2rad(140.0) * dt;
    const double dy = wrap_angle(yaw_t - yaw);
    yaw = wrap_angle(yaw + std::clamp(dy, -max_yaw, max_yaw));
    pitch += std::clamp(pitch_t - pitch, -max_pitch, max_pitch);
  }
};

// Per-interval gaze targeting: where the head points and where the eyes
// point, given the current eye-contact state.
struct GazeIntervals {
  bool looking = false;
  double look_slack = 0.0;        // head offset while eye contact holds
  bool eyes_only = false;         // head at robot, eyes averted
  double away_head_yaw_off = 0.0;
  double away_head_pitch_off = 0.0;
  double away_eye_yaw_off = 0.0;
  double away_eye_pitch_off = 0.0;

  // near_focus: subjects who intend to engage avert their eyes only barely,
  // keeping the robot near the edge of view; true aversion looks well away.
  void resample(bool new_state, const EnvConfig& env, Rng& rng,
                bool near_focus = false) {
    looking = new_state;
    if (looking) {
      look_slack = rng.normal(0.0, deg2rad(8.0));
      return;
    }
    eyes_only = rng.uniform() < env.eyes_only_aversion_prob;
    const double sgn = rng.bernoulli(0.5) ? 1.0 : -1.0;
    if (eyes_only) {
      away_head_yaw_off = rng.normal(0.0, deg2rad(6.0));
      away_head_pitch_off = rng.normal(0.0, deg2rad(4.0));
      // Committed subjects start averted a little wider and let the offset
      // decay over the interval (see the emit loop); the wider draw puts
      // their time-averaged angle on the same distribution as the static
      // one, so the slope is the only thing left to read.
      away_eye_yaw_off = near_focus ? sgn * deg2rad(rng.uniform(26.0, 60.0))
                                    : sgn * deg2rad(rng.uniform(16.0, 42.0));
      away_eye_pitch_off = rng.normal(0.0, deg2rad(8.0)) - deg2rad(6.0);
    } else {
      away_head_yaw_off =
          sgn * rng.uniform(deg2rad(env.away_head_min_deg),
                            deg2rad(env.away_head_max_deg));
      away_head_pitch_off = rng.normal(0.0, deg2rad(6.0));
      // Eyes drift back toward the robot when engagement is brewing.
      away_eye_yaw_off = near_focus
                             ? -away_head_yaw_off * rng.uniform(0.55, 0.80)
                             : rng.normal(0.0, deg2rad(4.0));
      away_eye_pitch_off = rng.normal(0.0, deg2rad(4.0));
    }
  }
};

struct SimContext {
  const EnvConfig& env;
  const CameraModel& cam;
  Rng& rng;
  double dt;
  double chest_h, head_h, cruise;
  double heading_noise = 0.0;
  HeadState head;
  GazeIntervals gaze;
  bool gaze_state = false;
  bool near_focus = false;   // engagement brewing: near-miss gaze, speech
  double talk = 0.0;         // jaw amplitude while a speech burst is on
  bool burst_on = false;
  double mouth = 0.0;
  std::vector<Frame> frames;
  std::optional<int> interaction_index;
  double sim_time = 0.0;

  SimContext(const EnvConfig& e, const CameraModel& c, Rng& r)
      : env(e), cam(c), rng(r), dt(1.0 / e.frame_rate) {
    chest_h = rng.uniform(e.chest_height_min, e.chest_height_max);
    head_h = chest_h + e.head_above_chest + rng.uniform(-0.02, 0.02);
    cruise = rng.uniform(e.speed_min, e.speed_max);
    gaze_state = false;
  }

  int max_frames() const {
    return static_cast<int>(std::floor(env.max_duration_s * env.frame_rate));
  }
  int min_frames() const {
    return static_cast<int>(std::ceil(env.min_duration_s * env.frame_rate));
  }

  // Advance the eye-contact chain toward stationary probability pi.
  // `switch_mult` scales how often the state is redrawn: it sets fixation
  // run lengths without moving the per-frame looking rate, so two subjects
  // with the same pi but different multipliers are indistinguishable frame
  // by frame yet clearly apart over a window.
  void step_gaze(double pi, double switch_mult = 1.0) {
    const bool next = gaze_markov_step(
        gaze_state, pi, std::min(1.0, env.glance_switch * switch_mult), rng);
    if (next != gaze_state || frames.empty()) {
      gaze.resample(next, env, rng, near_focus);
    }
    gaze_state = next;
  }

  // Emit one frame at ground position (x, z) moving along `motion_heading`.
  // `chest_faces` is the clean chest yaw. Returns false if the chest left
  // the FOV or range (frame not emitted).
  bool emit(double x, double z, double motion_heading, double chest_faces,
            double speed) {
    const double d = std::hypot(x, z);
    if (d > env.max_range) return false;
    const double bob =
        0.012 * std::sin(2.0 * kPi * 1.9 * sim_time) * std::min(speed, 1.0);
    const double sigma_pos = 0.010 * (d / 3.0);
    const double cx = x + rng.normal(0.0, sigma_pos);
    const double cz = z + rng.normal(0.0, sigma_pos);
    const double cy = chest_h - cam.height + bob + rng.normal(0.0, sigma_pos);
    if (!cam.in_fov(cx, cy, cz)) return false;

    const double bearing_cam = std::atan2(-x, -z);
    const double head_y = head_h - cam.height + bob;
    const double head_dist = std::sqrt(x * x + head_y * head_y + z * z);
    const double pitch_cam = std::asin(-head_y / head_dist);

    head.wander_yaw = 0.7 * head.wander_yaw + rng.normal(0.0, deg2rad(1.2));
    head.wander_pitch = 0.7 * head.wander_pitch + rng.normal(0.0, deg2rad(0.9));
    if (near_focus && !gaze.looking && gaze.eyes_only) {
      // Committed subjects cannot hold the aversion: the eyes creep back.
      gaze.away_eye_yaw_off *= 0.88;
    }
    double head_yaw_t, head_pitch_t, eye_yaw_t, eye_pitch_t;
    if (gaze.looking) {
      head_yaw_t = bearing_cam + gaze.look_slack;
      head_pitch_t = pitch_cam + 0.3 * gaze.look_slack;
      eye_yaw_t = bearing_cam;
      eye_pitch_t = pitch_cam;
    } else if (gaze.eyes_only) {
      head_yaw_t = bearing_cam + gaze.away_head_yaw_off;
      head_pitch_t = pitch_cam + gaze.away_head_pitch_off;
      eye_yaw_t = head_yaw_t + gaze.away_eye_yaw_off;
      eye_pitch_t = head_pitch_t + gaze.away_eye_pitch_off;
    } else {
      const double base =
          std::abs(wrap_angle(motion_heading - bearing_cam)) < deg2rad(100.0)
              ? motion_heading
              : bearing_cam;
      head_yaw_t = base + gaze.away_head_yaw_off;
      head_pitch_t = gaze.away_head_pitch_off;
      eye_yaw_t = head_yaw_t + gaze.away_eye_yaw_off;
      eye_pitch_t = head_pitch_t + gaze.away_eye_pitch_off;
    }
    head.slew_to(head_yaw_t + head.wander_yaw, head_pitch_t + head.wander_pitch,
                 dt);
    head.roll = 0.9 * head.roll + rng.normal(0.0, deg2rad(1.0));

    // Conjugate eye shift: residual between the eye target and the actual
    // head direction, expressed as an iris offset in the head frame.
    const double rho_yaw = wrap_angle(eye_yaw_t - head.yaw);
    const double rho_pitch = eye_pitch_t - head.pitch;
    const std::array<double, 2> iris_shift = iris_offset(rho_yaw, rho_pitch);

    const double np = deg2rad(env.pose_noise_deg);
    Frame f;
    f.t = frames.empty() ? 0.0
                         : frames.back().t + dt;  // contiguous emission
    const double hx = x + rng.normal(0.0, sigma_pos);
    const double hz = z + rng.normal(0.0, sigma_pos);
    const double hy = head_y + rng.normal(0.0, sigma_pos);
    f.p_c = encode_pose(
        {cx, cy, cz},
        {wrap_angle(chest_faces + rng.normal(0.0, np)),
         rng.normal(0.0, deg2rad(2.0)), rng.normal(0.0, deg2rad(2.5))});
    f.p_h = encode_pose({hx, hy, hz},
                        {wrap_angle(head.yaw + rng.normal(0.0, np)),
                         head.pitch + rng.normal(0.0, np),
                         head.roll + rng.normal(0.0, deg2rad(2.0))});
    // Speech comes in bursts. The fraction of frames spent talking follows
    // the same distance profile for everyone, so no single frame gives the
    // class away; what differs is burst length. Subjects rehearsing an
    // opener hold long utterances, bystander chatter flickers on and off.
    if (talk > 0.0) {
      const double duty = 0.10 + 0.22 * std::clamp((3.0 - d) / 1.8, 0.0, 1.0);
      const double p_off = near_focus ? 0.03 : 0.35;
      const double p_on = duty / (1.0 - duty) * p_off;
      if (burst_on) {
        if (rng.uniform() < p_off) burst_on = false;
      } else if (rng.uniform() < p_on) {
        burst_on = true;
      }
    }
    const double mouth_t = burst_on ? talk : 0.0;
    mouth = std::clamp(0.60 * mouth + 0.40 * mouth_t + rng.normal(0.0, 0.015),
                       0.0, 1.0);

    FaceRenderSettings fs;
    fs.noise_base = env.landmark_noise;
    fs.visible_angle_deg = env.face_visible_angle_deg;
    fs.mouth_open = mouth;
    f.landmarks = render_face(cam, {x, head_y, z}, head.yaw, head.pitch,
                              head.roll, iris_shift, fs, rng);
    f.gaze_gt = gaze.looking;
    frames.push_back(std::move(f));
    return true;
  }
};

// Positive sequences and hesitating negatives share the approach script;
// `interact` distinguishes them.
inline bool simulate_approach(SimContext& sc, bool interact) {
  const EnvConfig& env = sc.env;
  Rng& rng = sc.rng;
  sc.near_focus = interact;
  const double talk_p = interact ? env.talker_fraction
                                 : env.negative_talk_fraction;
  sc.talk = rng.uniform() < talk_p
                ? env.talk_gain * rng.uniform(0.50, 1.0)
                : 0.0;
  const bool shy = interact && rng.uniform() < env.shy_fraction;
  const double ramp_lo = shy ? env.gaze_ramp_lo * 0.6 : env.gaze_ramp_lo;
  const double ramp_mid = shy ? env.gaze_ramp_mid_m * 0.45 : env.gaze_ramp_mid_m;

  const double th0 = deg2rad(rng.uniform(-env.spawn_halfangle_deg,
                                         env.spawn_halfangle_deg));
  const double r0 = rng.uniform(env.spawn_radius_min, env.spawn_radius_max);
  double x = r0 * std::sin(th0), z = r0 * std::cos(th0);
  // Hesitators halt in the same band intenders stop in, so standing distance
  // alone cannot settle the label; how long they stand there can.
  const double d_stop =
      interact ? rng.uniform(env.stop_distance_min + 0.005,
                             env.stop_distance_max)
               : rng.uniform(0.52, 0.78);
  double heading = std::atan2(-x, -z);
  sc.head.yaw = heading;

  enum Phase { kApproach, kDwell, kDepart } phase = kApproach;
  int dwell_left = 0;
  int dwell_elapsed = 0;
  int depart_left = 0;
  double depart_heading = 0.0;
  double chest_yaw = heading;
  bool pause_pending = rng.uniform() < env.pause_prob;
  const double pause_at_d = rng.uniform(1.4, 3.4);
  int pause_left = 0;

  const int cap = sc.max_frames();
  for (int step = 0; step < 1000 && static_cast<int>(sc.frames.size()) < cap;
       ++step) {
    const double d = std::hypot(x, z);
    double speed = 0.0;
    double pi;
    if (phase == kDepart) {
      pi = 0.10;
    } else if (interact) {
      // Eye contact becomes likelier as the subject closes in.
      pi = ramp_lo + (env.gaze_ramp_hi - ramp_lo) /
                         (1.0 + std::exp(-env.gaze_ramp_steepness *
                                         (ramp_mid - d)));
    } else {
      // Hesitators also stare more the closer they get, along the same
      // smooth profile, just less of the time; the novelty wears off once
      // they have been standing for a while.
      pi = 0.70 * (env.gaze_ramp_lo +
                   (env.gaze_ramp_hi - env.gaze_ramp_lo) /
                       (1.0 + std::exp(-env.gaze_ramp_steepness *
                                       (env.gaze_ramp_mid_m - d))));
      if (phase == kDwell) {
        pi *= std::exp(-(dwell_elapsed * sc.dt) / 1.4);
      }
    }
    // Intenders hold their eye contact in long fixations, everyone else
    // flicks; the looking rate itself stays matched between the scripts.
    sc.step_gaze(pi, interact ? 0.45 : 3.0);

    if (phase == kApproach) {
      if (pause_left > 0) {
        // Mid-walk standstill: phone check, shoelace, second thoughts.
        --pause_left;
        x += rng.normal(0.0, 0.004);
        z += rng.normal(0.0, 0.004);
        speed = 0.0;
        const bool emitted_p = sc.emit(x, z, heading, chest_yaw, speed);
        sc.sim_time += sc.dt;
        if (!emitted_p) return false;
        continue;
      }
      if (pause_pending && d <= pause_at_d && d > d_stop + 0.3) {
        pause_pending = false;
        pause_left = std::max(
            1, static_cast<int>(std::lround(rng.uniform(0.4, 1.4) *
                                            env.frame_rate)));
      }
      const double want = std::atan2(-x, -z);
      sc.heading_noise = 0.7 * sc.heading_noise + rng.normal(0.0, deg2rad(5.0));
      const double turn = std::clamp(wrap_angle(want + sc.heading_noise - heading),
                                     -deg2rad(120.0) * sc.dt,
                                     deg2rad(120.0) * sc.dt);
      heading = wrap_angle(heading + turn);
      const double decel =
          std::clamp((d - d_stop) / 1.2 + 0.12, 0.12, 1.0);
      speed = sc.cruise * decel * std::exp(rng.normal(0.0, 0.08));
      x += std::sin(heading) * speed * sc.dt;
      z += std::cos(heading) * speed * sc.dt;
      chest_yaw = heading;
      if (std::hypot(x, z) <= d_stop) {
        phase = kDwell;
        // Hesitators linger: standing near the robot without committing.
        const double stretch = interact ? 1.0 : 2.4;
        dwell_left = std::max(
            1, static_cast<int>(std::lround(
                   stretch *
                   rng.uniform(env.dwell_s_min, env.dwell_s_max) *
                   env.frame_rate)));
      }
    } else if (phase == kDwell) {
      x += rng.normal(0.0, 0.004);
      z += rng.normal(0.0, 0.004);
      chest_yaw = wrap_angle(chest_yaw +
                             0.5 * wrap_angle(std::atan2(-x, -z) - chest_yaw));
      speed = 0.0;
      --dwell_left;
      ++dwell_elapsed;
    } else {
      sc.heading_noise = 0.7 * sc.heading_noise + rng.normal(0.0, deg2rad(5.0));
      const double turn = std::clamp(
          wrap_angle(depart_heading + sc.heading_noise - heading),
          -deg2rad(160.0) * sc.dt, deg2rad(160.0) * sc.dt);
      heading = wrap_angle(heading + turn);
      speed = sc.cruise * std::min(1.0, 0.4 + 0.15 * depart_left) *
              std::exp(rng.normal(0.0, 0.08));
      x += std::sin(heading) * speed * sc.dt;
      z += std::cos(heading) * speed * sc.dt;
      chest_yaw = heading;
      --depart_left;
    }

    const bool emitted = sc.emit(x, z, heading, chest_yaw, speed);
    sc.sim_time += sc.dt;
    if (!emitted) {
      if (phase == kDepart && !sc.frames.empty()) break;
      return false;  // left the cone mid-script: retry
    }
    if (phase == kDwell && dwell_left <= 0) {
      if (interact) {
        sc.interaction_index = static_cast<int>(sc.frames.size()) - 1;
      }
      phase = kDepart;
      const double out = std::atan2(x, z);  // radially away from the robot
      depart_heading = wrap_angle(out + rng.uniform(-deg2rad(35.0),
                                                    deg2rad(35.0)));
      depart_left = std::max(
          1, static_cast<int>(std::lround(rng.uniform(0.3, env.depart_s) *
                                          env.frame_rate)));
    } else if (phase == kDepart && depart_left <= 0) {
      break;
    }
  }

  if (static_cast<int>(sc.frames.size()) < sc.min_frames()) return false;
  if (interact) {
    if (!sc.interaction_index) return false;
    const double di =
        ground_distance(sc.frames[*sc.interaction_index].p_c);
    if (di < 0.5 || di > 0.7) return false;
    if (*sc.interaction_index < 5) return false;
  }
  return true;
}

// Pass-bys start out aimed roughly at the robot just like approachers and
// only bend away to their clearance once inside the veer distance, so the
// early part of the track does not give the class away.
inline bool simulate_passby(SimContext& sc) {
  const EnvConfig& env = sc.env;
  Rng& rng = sc.rng;
  sc.talk = rng.uniform() < env.negative_talk_fraction
                ? env.talk_gain * rng.uniform(0.50, 1.0)
                : 0.0;
  const double c = std::clamp(
      env.negative_closest_median *
          std::exp(rng.normal(0.0, env.negative_closest_sigma)),
      env.negative_closest_min, env.negative_closest_max);
  const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
  const double th0 = deg2rad(rng.uniform(-env.spawn_halfangle_deg,
                                         env.spawn_halfangle_deg));
  const double r0 = rng.uniform(env.spawn_radius_min, env.spawn_radius_max);
  double x = r0 * std::sin(th0), z = r0 * std::cos(th0);
  const double d_veer = std::max(c + 0.4, rng.uniform(env.veer_distance_lo,
                                                      env.veer_distance_hi));
  // Pass-bys aim a touch off the robot from the start. Against the heading
  // noise no single frame shows it, but the offset accumulates into a
  // steady drift across the homing leg.
  const double aim_off = side * deg2rad(rng.uniform(6.0, 12.0));
  double heading = std::atan2(-x, -z);
  sc.head.yaw = heading;
  bool pause_pending = rng.uniform() < env.pause_prob;
  const double pause_at_d = rng.uniform(1.6, 3.8);
  int pause_left = 0;
  bool past = false;  // walked beyond the closest point
  bool any = false;

  const int cap = sc.max_frames();
  for (int step = 0; step < 1000 && static_cast<int>(sc.frames.size()) < cap;
       ++step) {
    const double d = std::hypot(x, z);
    sc.step_gaze(env.glance_rate, 2.6);
    double speed = 0.0;
    if (pause_left > 0) {
      --pause_left;
      x += rng.normal(0.0, 0.004);
      z += rng.normal(0.0, 0.004);
    } else {
      if (pause_pending && d <= pause_at_d) {
        pause_pending = false;
        pause_left = std::max(
            1, static_cast<int>(std::lround(rng.uniform(0.4, 1.4) *
                                            env.frame_rate)));
      }
      const double bearing = std::atan2(-x, -z);
      double want;
      if (past) {
        want = heading;  // robot is behind: keep going
      } else if (d > d_veer) {
        want = bearing + aim_off;  // homing leg, near-aimed at the robot
      } else {
        // Steer along the tangent of the clearance circle around the robot.
        const double swing = std::asin(std::min(1.0, c / std::max(d, c)));
        want = bearing + side * swing;
      }
      sc.heading_noise = 0.7 * sc.heading_noise + rng.normal(0.0, deg2rad(5.0));
      const double turn =
          std::clamp(wrap_angle(want + sc.heading_noise - heading),
                     -deg2rad(120.0) * sc.dt, deg2rad(120.0) * sc.dt);
      heading = wrap_angle(heading + turn);
      speed = sc.cruise * std::exp(rng.normal(0.0, 0.08));
      x += std::sin(heading) * speed * sc.dt;
      z += std::cos(heading) * speed * sc.dt;
      if (!past &&
          std::abs(wrap_angle(std::atan2(-x, -z) - heading)) > deg2rad(95.0)) {
        past = true;
      }
    }
    const bool emitted = sc.emit(x, z, heading, heading, speed);
    sc.sim_time += sc.dt;
    if (emitted) {
      any = true;
    } else if (any) {
      break;  // exited the cone after being visible
    } else if (step > 60) {
      return false;  // never became visible: bad draw
    }
  }
  return any && static_cast<int>(sc.frames.size()) >= sc.min_frames();
}

}  // namespace detail

/// One simulated sequence, deterministic per (env, intent, seed).
inline Sequence gen_sequence(const EnvConfig& env, bool intent,
                             std::uint64_t seed,
                             const std::string& id = "seq") {
  env.validate();
  const CameraModel cam;
  const std::uint64_t base = derive_seed(seed, intent ? 0xA11CEull : 0xB0B5ull);
  for (std::uint64_t attempt = 0; attempt < 60; ++attempt) {
    Rng rng(derive_seed(base, attempt));
    detail::SimContext sc(env, cam, rng);
    bool ok;
    if (intent) {
      ok = detail::simulate_approach(sc, true);
    } else if (rng.uniform() < env.hesitator_fraction) {
      ok = detail::simulate_approach(sc, false);
    } else {
      ok = detail::simulate_passby(sc);
    }
    if (!ok) continue;
    Sequence s;
    s.id = id;
    s.env = env.name;
    s.label = intent;
    s.interaction_index = sc.interaction_index;
    s.frames = std::move(sc.frames);
    s.validate();
    return s;
  }
  throw ConfigError("could not generate a valid sequence for env " + env.name);
}

/// The three default environments. Counts follow the 33/59, 15/27, 36/19
/// per-env composition; "kids" is deliberately shifted (short subjects,
/// erratic speeds, frequent glances, close pass-bys) so that models trained
/// on the other two degrade there.
inline std::vector<EnvConfig> default_envs() {
  EnvConfig lab;
  lab.name = "lab";
  lab.positives = 33;
  lab.negatives = 59;

  EnvConfig office;
  office.name = "office";
  office.positives = 15;
  office.negatives = 27;
  office.spawn_halfangle_deg = 25.0;
  office.speed_min = 1.0;
  office.speed_max = 1.7;
  office.glance_rate = 0.10;
  office.negative_closest_median = 1.8;
  office.hesitator_fraction = 0.35;

  EnvConfig kids;
  kids.name = "kids";
  kids.positives = 36;
  kids.negatives = 19;
  kids.chest_height_min = 0.75;
  kids.chest_height_max = 0.95;
  kids.speed_min = 0.9;
  kids.speed_max = 2.2;
  kids.spawn_radius_min = 4.5;
  kids.spawn_radius_max = 6.5;
  kids.glance_rate = 0.28;
  kids.glance_switch = 0.60;
  kids.gaze_ramp_lo = 0.30;
  kids.gaze_ramp_hi = 0.90;
  kids.gaze_ramp_mid_m = 2.2;
  kids.gaze_ramp_steepness = 1.8;
  kids.negative_closest_median = 1.0;
  kids.negative_closest_sigma = 0.22;
  kids.negative_closest_min = 0.55;
  kids.negative_closest_max = 2.0;
  kids.hesitator_fraction = 0.45;
  kids.shy_fraction = 0.30;
  kids.eyes_only_aversion_prob = 0.60;
  kids.talk_gain = 0.35;
  kids.pose_noise_deg = 7.5;
  kids.landmark_noise = 0.009;
  return {lab, office, kids};
}

inline Dataset gen_dataset(const std::vector<EnvConfig>& envs,
                           std::uint64_t seed) {
  if (envs.empty()) throw ConfigError("no environments given");
  Dataset data;
  char buf[32];
  for (std::size_t e = 0; e < envs.size(); ++e) {
    const EnvConfig& env = envs[e];
    env.validate();
    const std::uint64_t env_seed = derive_seed(seed, 0x9E0ull + e);
    for (int i = 0; i < env.positives; ++i) {
      std::snprintf(buf, sizeof buf, "_p%03d", i);
      data.sequences.push_back(gen_sequence(
          env, true, derive_seed(env_seed, static_cast<std::uint64_t>(i)),
          env.name + buf));
    }
    for (int i = 0; i < env.negatives; ++i) {
      std::snprintf(buf, sizeof buf, "_n%03d", i);
      data.sequences.push_back(gen_sequence(
          env, false,
          derive_seed(env_seed, 0x10000ull + static_cast<std::uint64_t>(i)),
          env.name + buf));
    }
  }
  data.validate();
  return data;
}

// ---------------------------------------------------------------------------
// Stationary mutual-gaze calibration grid

struct GazeGridConfig {
  std::vector<double> bearings_deg = {-30, -15, 0, 15, 30};
  std::vector<double> radii_m = {1.0, 1.5, 2.2, 3.0, 4.0};
  int frames_per_position = 160;
  int interval_min_frames = 8, interval_max_frames = 15;
  double frame_rate = 5.0;
  double pose_noise_deg = 4.5;
  double landmark_noise = 0.0035;
  double eyes_only_aversion_prob = 0.35;
  double chest_height_min = 0.75, chest_height_max = 1.25;
  double head_above_chest = 0.40;

  void validate() const {
    if (bearings_deg.empty() || radii_m.empty()) {
      throw ConfigError("empty gaze grid");
    }
    for (double b : bearings_deg) {
      if (std::abs(b) > 38.0) throw ConfigError("gaze grid bearing beyond FOV");
    }
    for (double r : radii_m) {
      if (r < 0.8 || r > 6.0) throw ConfigError("gaze grid radius outside [0.8, 6]");
    }
    if (frames_per_position < 2 || interval_min_frames < 1 ||
        interval_min_frames > interval_max_frames) {
      throw ConfigError("bad gaze grid interval settings");
    }
  }
};

/// Stationary subjects at fixed grid positions alternating eye contact and
/// aversion. Every frame has landmarks; labels equal the gaze state.
inline Dataset gen_gaze_dataset(const GazeGridConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const CameraModel cam;
  EnvConfig proto;  // carries the aversion/noise knobs used by GazeIntervals
  proto.eyes_only_aversion_prob = cfg.eyes_only_aversion_prob;
  proto.pose_noise_deg = cfg.pose_noise_deg;
  proto.landmark_noise = cfg.landmark_noise;
  proto.away_head_min_deg = 22.0;
  proto.away_head_max_deg = 55.0;

  Dataset data;
  char buf[32];
  int pos_idx = 0;
  const double dt = 1.0 / cfg.frame_rate;
  for (double bearing : cfg.bearings_deg) {
    for (double radius : cfg.radii_m) {
      Rng rng(derive_seed(seed, 0x6A2Eull + static_cast<std::uint64_t>(pos_idx)));
      const double x = radius * std::sin(deg2rad(bearing));
      const double z = radius * std::cos(deg2rad(bearing));
      const double chest_h =
          rng.uniform(cfg.chest_height_min, cfg.chest_height_max);
      const double head_h = chest_h + cfg.head_above_chest;

      Sequence s;
      std::snprintf(buf, sizeof buf, "gaze_p%02d", pos_idx);
      s.id = buf;
      s.env = "gaze_grid";
      s.label = false;

      detail::HeadState head;
      detail::GazeIntervals gaze;
      bool state = rng.bernoulli(0.5);
      int left = static_cast<int>(rng.index(static_cast<std::size_t>(
                     cfg.interval_max_frames - cfg.interval_min_frames + 1))) +
                 cfg.interval_min_frames;
      gaze.resample(state, proto, rng);
      const double bearing_cam = std::atan2(-x, -z);
      head.yaw = bearing_cam;
      double chest_wander = 0.0;

      for (int k = 0; k < cfg.frames_per_position; ++k) {
        if (left-- <= 0) {
          state = !state;
          gaze.resample(state, proto, rng);
          left = static_cast<int>(rng.index(static_cast<std::size_t>(
                     cfg.interval_max_frames - cfg.interval_min_frames + 1))) +
                 cfg.interval_min_frames;
        }
        const double sx = x + rng.normal(0.0, 0.005);
        const double sz = z + rng.normal(0.0, 0.005);
        const double head_y = head_h - cam.height;
        const double hd = std::sqrt(sx * sx + head_y * head_y + sz * sz);
        const double pitch_cam = std::asin(-head_y / hd);

        head.wander_yaw = 0.8 * head.wander_yaw + rng.normal(0.0, deg2rad(1.5));
        head.wander_pitch =
            0.8 * head.wander_pitch + rng.normal(0.0, deg2rad(1.0));
        double hy_t, hp_t, ey_t, ep_t;
        if (gaze.looking) {
          hy_t = bearing_cam + gaze.look_slack;
          hp_t = pitch_cam + 0.3 * gaze.look_slack;
          ey_t = bearing_cam;
          ep_t = pitch_cam;
        } else if (gaze.eyes_only) {
          hy_t = bearing_cam + gaze.away_head_yaw_off;
          hp_t = pitch_cam + gaze.away_head_pitch_off;
          ey_t = hy_t + gaze.away_eye_yaw_off;
          ep_t = hp_t + gaze.away_eye_pitch_off;
        } else {
          hy_t = bearing_cam + gaze.away_head_yaw_off;
          hp_t = pitch_cam + gaze.away_head_pitch_off;
          ey_t = hy_t + gaze.away_eye_yaw_off;
          ep_t = hp_t + gaze.away_eye_pitch_off;
        }
        head.slew_to(hy_t + head.wander_yaw, hp_t + head.wander_pitch, dt);
        head.roll = 0.9 * head.roll + rng.normal(0.0, deg2rad(1.0));
        const double rho_yaw = wrap_angle(ey_t - head.yaw);
        const double rho_pitch = ep_t - head.pitch;
        const std::array<double, 2> iris_shift =
            detail::iris_offset(rho_yaw, rho_pitch);

        detail::FaceRenderSettings fs;
        fs.noise_base = cfg.landmark_noise;
        fs.visible_angle_deg = 80.0;
        fs.mouth_open = std::min(0.06, std::abs(rng.normal(0.0, 0.02)));
        std::optional<LandmarkSet> lm =
            detail::render_face(cam, {sx, head_y, sz}, head.yaw, head.pitch,
                                head.roll, iris_shift, fs, rng);
        if (!lm) continue;  // extreme aversion can hide the face briefly

        chest_wander = 0.9 * chest_wander + rng.normal(0.0, deg2rad(3.0));
        const double np = deg2rad(cfg.pose_noise_deg);
        Frame f;
        f.t = s.frames.empty() ? 0.0 : s.frames.back().t + dt;
        f.p_c = encode_pose({sx, chest_h - cam.height, sz},
                            {wrap_angle(bearing_cam + chest_wander +
                                        rng.normal(0.0, np)),
                             rng.normal(0.0, deg2rad(2.0)),
                             rng.normal(0.0, deg2rad(2.0))});
        f.p_h = encode_pose({sx, head_y, sz},
                            {wrap_angle(head.yaw + rng.normal(0.0, np)),
                             head.pitch + rng.normal(0.0, np),
                             head.roll + rng.normal(0.0, deg2rad(1.5))});
        f.landmarks = std::move(lm);
        f.gaze_gt = gaze.looking;
        s.frames.push_back(std::move(f));
      }
      if (s.frames.size() < 2) {
        throw ConfigError("gaze grid position produced no usable frames");
      }
      s.validate();
      data.sequences.push_back(std::move(s));
      ++pos_idx;
    }
  }
  data.validate();
  return data;
}

// ---------------------------------------------------------------------------
// Plain-text env config files: `env <name>` opens a section, `key value`
// lines override that env's defaults. `#` starts a comment.

inline std::vector<EnvConfig> parse_env_configs(std::istream& is) {
  std::vector<EnvConfig> envs;
  std::string line;
  int ln = 0;
  auto numeric = [&](EnvConfig& e, const std::string& key,
                     const std::string& val) -> bool {
    static const std::map<std::string, double EnvConfig::*> fields = {
        {"frame_rate", &EnvConfig::frame_rate},
        {"spawn_radius_min", &EnvConfig::spawn_radius_min},
        {"spawn_radius_max", &EnvConfig::spawn_radius_max},
        {"spawn_halfangle_deg", &EnvConfig::spawn_halfangle_deg},
        {"veer_distance_lo", &EnvConfig::veer_distance_lo},
        {"veer_distance_hi", &EnvConfig::veer_distance_hi},
        {"speed_min", &EnvConfig::speed_min},
        {"speed_max", &EnvConfig::speed_max},
        {"chest_height_min", &EnvConfig::chest_height_min},
        {"chest_height_max", &EnvConfig::chest_height_max},
        {"head_above_chest", &EnvConfig::head_above_chest},
        {"stop_distance_min", &EnvConfig::stop_distance_min},
        {"stop_distance_max", &EnvConfig::stop_distance_max},
        {"dwell_s_min", &EnvConfig::dwell_s_min},
        {"dwell_s_max", &EnvConfig::dwell_s_max},
        {"depart_s", &EnvConfig::depart_s},
        {"min_duration_s", &EnvConfig::min_duration_s},
        {"max_duration_s", &EnvConfig::max_duration_s},
        {"max_range", &EnvConfig::max_range},
        {"glance_rate", &EnvConfig::glance_rate},
        {"glance_switch", &EnvConfig::glance_switch},
        {"eyes_only_aversion_prob", &EnvConfig::eyes_only_aversion_prob},
        {"away_head_min_deg", &EnvConfig::away_head_min_deg},
        {"away_head_max_deg", &EnvConfig::away_head_max_deg},
        {"gaze_ramp_lo", &EnvConfig::gaze_ramp_lo},
        {"gaze_ramp_hi", &EnvConfig::gaze_ramp_hi},
        {"gaze_ramp_mid_m", &EnvConfig::gaze_ramp_mid_m},
        {"gaze_ramp_steepness", &EnvConfig::gaze_ramp_steepness},
        {"negative_closest_median", &EnvConfig::negative_closest_median},
        {"negative_closest_sigma", &EnvConfig::negative_closest_sigma},
        {"negative_closest_min", &EnvConfig::negative_closest_min},
        {"negative_closest_max", &EnvConfig::negative_closest_max},
        {"hesitator_fraction", &EnvConfig::hesitator_fraction},
        {"talk_gain", &EnvConfig::talk_gain},
        {"talker_fraction", &EnvConfig::talker_fraction},
        {"negative_talk_fraction", &EnvConfig::negative_talk_fraction},
        {"pause_prob", &EnvConfig::pause_prob},
        {"shy_fraction", &EnvConfig::shy_fraction},
        {"pose_noise_deg", &EnvConfig::pose_noise_deg},
        {"landmark_noise", &EnvConfig::landmark_noise},
        {"face_visible_angle_deg", &EnvConfig::face_visible_angle_deg},
    };
    const auto it = fields.find(key);
    if (it == fields.end()) return false;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(val, &used);
    } catch (const std::exception&) {
      throw ParseError(ln, "bad numeric value '" + val + "'");
    }
    if (used != val.size()) throw ParseError(ln, "trailing junk after number");
    e.*(it->second) = v;
    return true;
  };

  while (std::getline(is, line)) {
    ++ln;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string key, val;
    if (!(ss >> key)) continue;
    if (!(ss >> val)) throw ParseError(ln, "key '" + key + "' has no value");
    std::string extra;
    if (ss >> extra) throw ParseError(ln, "unexpected token '" + extra + "'");
    if (key == "env") {
      EnvConfig e;
      e.name = val;
      envs.push_back(e);
      continue;
    }
    if (envs.empty()) {
      throw ParseError(ln, "'" + key + "' before any 'env' section");
    }
    EnvConfig& e = envs.back();
    if (key == "positives") {
      e.positives = std::stoi(val);
    } else if (key == "negatives") {
      e.negatives = std::stoi(val);
    } else if (!numeric(e, key, val)) {
      throw ParseError(ln, "unknown key '" + key + "'");
    }
  }
  for (const EnvConfig& e : envs) e.validate();
  return envs;
}

inline std::vector<EnvConfig> parse_env_configs(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  return parse_env_configs(is);
}

inline void write_env_configs(const std::vector<EnvConfig>& envs,
                              std::ostream& os) {
  const EnvConfig d;  // defaults; only divergent numeric fields are listed
  for (const EnvConfig& e : envs) {
    os << "env " << e.name << '\n';
    os << "positives " << e.positives << '\n';
    os << "negatives " << e.negatives << '\n';
    auto kv = [&](const char* k, double v, double dv) {
      if (v != dv) os << k << ' ' << fmt_real(v) << '\n';
    };
    kv("frame_rate", e.frame_rate, d.frame_rate);
    kv("spawn_radius_min", e.spawn_radius_min, d.spawn_radius_min);
    kv("spawn_radius_max", e.spawn_radius_max, d.spawn_radius_max);
    kv("spawn_halfangle_deg", e.spawn_halfangle_deg, d.spawn_halfangle_deg);
    kv("veer_distance_lo", e.veer_distance_lo, d.veer_distance_lo);
    kv("veer_distance_hi", e.veer_distance_hi, d.veer_distance_hi);
    kv("speed_min", e.speed_min, d.speed_min);
    kv("speed_max", e.speed_max, d.speed_max);
    kv("chest_height_min", e.chest_height_min, d.chest_height_min);
    kv("chest_height_max", e.chest_height_max, d.chest_height_max);
    kv("head_above_chest", e.head_above_chest, d.head_above_chest);
    kv("stop_distance_min", e.stop_distance_min, d.stop_distance_min);
    kv("stop_distance_max", e.stop_distance_max, d.stop_distance_max);
    kv("dwell_s_min", e.dwell_s_min, d.dwell_s_min);
    kv("dwell_s_max", e.dwell_s_max, d.dwell_s_max);
    kv("depart_s", e.depart_s, d.depart_s);
    kv("min_duration_s", e.min_duration_s, d.min_duration_s);
    kv("max_duration_s", e.max_duration_s, d.max_duration_s);
    kv("max_range", e.max_range, d.max_range);
    kv("glance_rate", e.glance_rate, d.glance_rate);
    kv("glance_switch", e.glance_switch, d.glance_switch);
    kv("eyes_only_aversion_prob", e.eyes_only_aversion_prob,
       d.eyes_only_aversion_prob);
    kv("away_head_min_deg", e.away_head_min_deg, d.away_head_min_deg);
    kv("away_head_max_deg", e.away_head_max_deg, d.away_head_max_deg);
    kv("gaze_ramp_lo", e.gaze_ramp_lo, d.gaze_ramp_lo);
    kv("gaze_ramp_hi", e.gaze_ramp_hi, d.gaze_ramp_hi);
    kv("gaze_ramp_mid_m", e.gaze_ramp_mid_m, d.gaze_ramp_mid_m);
    kv("gaze_ramp_steepness", e.gaze_ramp_steepness, d.gaze_ramp_steepness);
    kv("negative_closest_median", e.negative_closest_median,
       d.negative_closest_median);
    kv("negative_closest_sigma", e.negative_closest_sigma,
       d.negative_closest_sigma);
    kv("negative_closest_min", e.negative_closest_min, d.negative_closest_min);
    kv("negative_closest_max", e.negative_closest_max, d.negative_closest_max);
    kv("hesitator_fraction", e.hesitator_fraction, d.hesitator_fraction);
    kv("talk_gain", e.talk_gain, d.talk_gain);
    kv("talker_fraction", e.talker_fraction, d.talker_fraction);
    kv("negative_talk_fraction", e.negative_talk_fraction,
       d.negative_talk_fraction);
    kv("pause_prob", e.pause_prob, d.pause_prob);
    kv("shy_fraction", e.shy_fraction, d.shy_fraction);
    kv("pose_noise_deg", e.pose_noise_deg, d.pose_noise_deg);
    kv("landmark_noise", e.landmark_noise, d.landmark_noise);
    kv("face_visible_angle_deg", e.face_visible_angle_deg,
       d.face_visible_angle_deg);
  }
}

}  // namespace iid
