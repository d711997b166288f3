#pragma once

// Domain types shared by the whole toolkit: poses, facial landmarks, frames,
// sequences, datasets, feature-set descriptors and cross-validation splits.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iid/errors.hpp"
#include "iid/rng.hpp"

namespace iid {

// Shared numeric formatting: 17 significant digits, enough for doubles to
// survive a write -> read -> write cycle byte-identically.
inline std::string fmt_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline constexpr int kPoseDim = 9;
inline constexpr int kLandmarkCount = 39;
inline constexpr int kLandmarkDim = 3 * kLandmarkCount;  // 117
inline constexpr int kGazeInputDim = 2 * kPoseDim + kLandmarkDim;  // 135
inline constexpr double kSceneBound = 20.0;  // meters, sanity bound on positions

/// 3D pose in the sensor frame: position (m) followed by the three Euler
/// angles (intrinsic yaw-pitch-roll), each stored as a (sin, cos) pair.
struct Pose9 {
  std::array<double, kPoseDim> v{};

  double x() const { return v[0]; }
  double y() const { return v[1]; }
  double z() const { return v[2]; }

  double sin_at(int angle) const { return v[3 + 2 * angle]; }
  double cos_at(int angle) const { return v[4 + 2 * angle]; }

  bool operator==(const Pose9&) const = default;
};

/// Distance to the robot: Euclidean norm of the position projected to the
/// ground plane (x and z of the sensor frame; y is the vertical axis).
inline double ground_distance(const Pose9& p) {
  return std::hypot(p.x(), p.z());
}

inline Pose9 encode_pose(const std::array<double, 3>& position,
                         const std::array<double, 3>& euler) {
  for (double c : position) {
    if (!std::isfinite(c)) throw InvalidPose("non-finite position component");
  }
  for (double a : euler) {
    if (!std::isfinite(a)) throw InvalidPose("non-finite euler angle");
  }
  const double norm = std::sqrt(position[0] * position[0] +
                                position[1] * position[1] +
                                position[2] * position[2]);
  if (norm >= kSceneBound) {
    throw InvalidPose("position leaves the scene bound (" +
                      std::to_string(norm) + " m)");
  }
  Pose9 p;
  p.v[0] = position[0];
  p.v[1] = position[1];
  p.v[2] = position[2];
  for (int i = 0; i < 3; ++i) {
    p.v[3 + 2 * i] = std::sin(euler[i]);
    p.v[4 + 2 * i] = std::cos(euler[i]);
  }
  return p;
}

/// Recover the Euler angles from the encoded (sin, cos) pairs.
inline std::array<double, 3> decode_euler(const Pose9& p) {
  return {std::atan2(p.sin_at(0), p.cos_at(0)),
          std::atan2(p.sin_at(1), p.cos_at(1)),
          std::atan2(p.sin_at(2), p.cos_at(2))};
}

inline void validate_pose(const Pose9& p) {
  for (double c : p.v) {
    if (!std::isfinite(c)) throw InvalidPose("non-finite pose component");
  }
  const double norm = std::sqrt(p.x() * p.x() + p.y() * p.y() + p.z() * p.z());
  if (norm >= kSceneBound) throw InvalidPose("position outside scene bound");
  for (int i = 0; i < 3; ++i) {
    const double s = p.sin_at(i), c = p.cos_at(i);
    if (std::abs(s * s + c * c - 1.0) > 1e-6) {
      throw InvalidPose("sin/cos pair " + std::to_string(i) +
                        " is not unit-norm");
    }
  }
}

/// 39 facial landmarks, flattened (u, v, d) per point. After normalization
/// the centroid is zero and the mean per-point Euclidean norm is one.
struct LandmarkSet {
  std::array<double, kLandmarkDim> values{};
  bool normalized = false;

  double u(int i) const { return values[3 * i]; }
  double v(int i) const { return values[3 * i + 1]; }
  double d(int i) const { return values[3 * i + 2]; }

  bool operator==(const LandmarkSet&) const = default;
};

/// Center the 39 points on their centroid and scale so the mean per-point
/// norm is one. Input is the flattened (u, v, d) list.
inline LandmarkSet normalize_landmarks(const std::vector<double>& raw) {
  if (raw.size() != kLandmarkDim) {
    throw ShapeError("expected " + std::to_string(kLandmarkDim) +
                     " landmark values, got " + std::to_string(raw.size()));
  }
  for (double c : raw) {
    if (!std::isfinite(c)) throw ShapeError("non-finite landmark coordinate");
  }
  double cu = 0, cv = 0, cd = 0;
  for (int i = 0; i < kLandmarkCount; ++i) {
    cu += raw[3 * i];
    cv += raw[3 * i + 1];
    cd += raw[3 * i + 2];
  }
  cu /= kLandmarkCount;
  cv /= kLandmarkCount;
  cd /= kLandmarkCount;

  std::array<double, kLandmarkDim> centered;
  double mean_norm = 0;
  for (int i = 0; i < kLandmarkCount; ++i) {
    const double u = raw[3 * i] - cu;
    const double v = raw[3 * i + 1] - cv;
    const double d = raw[3 * i + 2] - cd;
    centered[3 * i] = u;
    centered[3 * i + 1] = v;
    centered[3 * i + 2] = d;
    mean_norm += std::sqrt(u * u + v * v + d * d);
  }
  mean_norm /= kLandmarkCount;
  if (mean_norm <= 0.0) {
    throw DegenerateFace("all landmarks coincide; zero normalization scale");
  }
  LandmarkSet out;
  for (int k = 0; k < kLandmarkDim; ++k) out.values[k] = centered[k] / mean_norm;
  out.normalized = true;
  return out;
}

/// One timestamped observation of a subject.
struct Frame {
  double t = 0.0;  // seconds since sequence start
  Pose9 p_c;       // chest pose
  Pose9 p_h;       // head pose
  std::optional<LandmarkSet> landmarks;
  std::optional<bool> gaze_gt;     // mutual-gaze ground truth, when recorded
  std::optional<double> m_hat;     // cached mutual-gaze score in [0, 1]

  bool operator==(const Frame&) const = default;
};

/// Ordered frames for one subject visit, with a single boolean label.
struct Sequence {
  std::string id;
  std::string env;
  std::vector<Frame> frames;
  bool label = false;
  std::optional<int> interaction_index;  // positives only

  bool operator==(const Sequence&) const = default;

  /// Frame of minimum ground-plane chest distance (first on ties).
  int closest_index() const {
    int best = 0;
    double best_d = ground_distance(frames.at(0).p_c);
    for (int i = 1; i < static_cast<int>(frames.size()); ++i) {
      const double d = ground_distance(frames[i].p_c);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }

  void validate() const {
    if (frames.empty()) throw SchemaError("sequence " + id + " has no frames");
    double prev_t = -1.0;
    for (const Frame& f : frames) {
      if (f.t < 0.0) throw SchemaError("sequence " + id + ": negative time");
      if (f.t <= prev_t) {
        throw SchemaError("sequence " + id +
                          ": frame times not strictly increasing");
      }
      prev_t = f.t;
      validate_pose(f.p_c);
      validate_pose(f.p_h);
      if (f.m_hat && (*f.m_hat < 0.0 || *f.m_hat > 1.0 ||
                      !std::isfinite(*f.m_hat))) {
        throw SchemaError("sequence " + id + ": m_hat outside [0, 1]");
      }
    }
    if (label != interaction_index.has_value()) {
      throw SchemaError("sequence " + id +
                        ": label and interaction index disagree");
    }
    if (interaction_index &&
        (*interaction_index < 0 ||
         *interaction_index >= static_cast<int>(frames.size()))) {
      throw SchemaError("sequence " + id + ": interaction index out of range");
    }
  }
};

struct Dataset {
  std::vector<Sequence> sequences;

  std::size_t total_frames() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.frames.size();
    return n;
  }

  std::size_t positives() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.label ? 1 : 0;
    return n;
  }

  /// (positive, negative) sequence counts per environment tag.
  std::map<std::string, std::pair<int, int>> env_counts() const {
    std::map<std::string, std::pair<int, int>> counts;
    for (const auto& s : sequences) {
      auto& c = counts[s.env];
      (s.label ? c.first : c.second) += 1;
    }
    return counts;
  }

  void validate() const {
    std::map<std::string, int> seen;
    for (const auto& s : sequences) {
      if (++seen[s.id] > 1) throw SchemaError("duplicate sequence id " + s.id);
      s.validate();
    }
  }
};

// ---------------------------------------------------------------------------
// Feature-set descriptors

enum class FeatureSetKind { C, CH, M, CHM, FULL };

inline int feature_dim(FeatureSetKind kind) {
  switch (kind) {
    case FeatureSetKind::C: return kPoseDim;                          // 9
    case FeatureSetKind::CH: return 2 * kPoseDim;                     // 18
    case FeatureSetKind::M: return 1;                                 // 1
    case FeatureSetKind::CHM: return 2 * kPoseDim + 1;                // 19
    case FeatureSetKind::FULL: return 2 * kPoseDim + 1 + kLandmarkDim;  // 136
  }
  throw Error("unreachable feature kind");
}

inline bool needs_gaze_score(FeatureSetKind kind) {
  return kind == FeatureSetKind::M || kind == FeatureSetKind::CHM ||
         kind == FeatureSetKind::FULL;
}

inline std::string to_string(FeatureSetKind kind) {
  switch (kind) {
    case FeatureSetKind::C: return "c";
    case FeatureSetKind::CH: return "ch";
    case FeatureSetKind::M: return "m";
    case FeatureSetKind::CHM: return "chm";
    case FeatureSetKind::FULL: return "full";
  }
  throw Error("unreachable feature kind");
}

inline FeatureSetKind parse_feature_kind(const std::string& s) {
  if (s == "c") return FeatureSetKind::C;
  if (s == "ch") return FeatureSetKind::CH;
  if (s == "m") return FeatureSetKind::M;
  if (s == "chm") return FeatureSetKind::CHM;
  if (s == "full") return FeatureSetKind::FULL;
  throw ConfigError("unknown feature set '" + s + "'");
}

// ---------------------------------------------------------------------------
// Cross-validation splits

/// Assignment of every sequence id to one of k folds. Splitting is by
/// sequence, so frames of one sequence can never straddle folds.
struct FoldSplit {
  int k = 0;
  std::map<std::string, int> assignments;
  bool stratified = true;

  int fold_of(const std::string& id) const {
    auto it = assignments.find(id);
    if (it == assignments.end()) throw SplitError("unassigned sequence " + id);
    return it->second;
  }
};

/// Stratified k-fold split over sequences, deterministic under seed.
/// Positives are dealt round-robin after a seeded shuffle; negatives then
/// fill the currently smallest folds, which keeps both the fold sizes and
/// the per-fold positive counts within one sequence of each other.
inline FoldSplit stratified_kfold(const Dataset& data, int k,
                                  std::uint64_t seed) {
  if (k < 2) throw SplitError("fold count must be at least 2");
  std::vector<std::string> pos, neg;
  for (const auto& s : data.sequences) {
    (s.label ? pos : neg).push_back(s.id);
  }
  if (static_cast<int>(pos.size()) < k || static_cast<int>(neg.size()) < k) {
    throw SplitError("need at least k sequences of each class (" +
                     std::to_string(pos.size()) + " positive, " +
                     std::to_string(neg.size()) + " negative, k=" +
                     std::to_string(k) + ")");
  }
  Rng rng(derive_seed(seed, 0x5f1d));
  rng.shuffle(pos);
  rng.shuffle(neg);

  FoldSplit split;
  split.k = k;
  split.stratified = true;
  std::vector<int> size(k, 0);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const int f = static_cast<int>(i % k);
    split.assignments[pos[i]] = f;
    ++size[f];
  }
  for (const auto& id : neg) {
    const int f = static_cast<int>(
        std::min_element(size.begin(), size.end()) - size.begin());
    split.assignments[id] = f;
    ++size[f];
  }
  return split;
}

/// Sequences of `data` whose fold is in `folds` (order preserved).
inline Dataset select_folds(const Dataset& data, const FoldSplit& split,
                            const std::vector<int>& folds) {
  Dataset out;
  for (const auto& s : data.sequences) {
    const int f = split.fold_of(s.id);
    if (std::find(folds.begin(), folds.end(), f) != folds.end()) {
      out.sequences.push_back(s);
    }
  }
  return out;
}

inline Dataset exclude_fold(const Dataset& data, const FoldSplit& split,
                            int fold) {
  Dataset out;
  for (const auto& s : data.sequences) {
    if (split.fold_of(s.id) != fold) out.sequences.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Canonical landmark identity table

/// Names of the 39 tracked facial points: 4 mouth corners/centers, 4 eye
/// corners, 2 irises, 1 nose tip, 2 nose wings and 26 face-contour points.
inline const std::vector<std::string>& landmark_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n = {
        "mouth_left",      "mouth_right",     "mouth_top",
        "mouth_bottom",    "eye_left_outer",  "eye_left_inner",
        "eye_right_inner", "eye_right_outer", "iris_left",
        "iris_right",      "nose_tip",        "nose_wing_left",
        "nose_wing_right"};
    for (int i = 0; i < 26; ++i) {
      n.push_back("contour_" + std::string(i < 10 ? "0" : "") +
                  std::to_string(i));
    }
    return n;
  }();
  return names;
}

}  // namespace iid
