#pragma once

// Per-frame feature assembly for the five feature sets, plus the bridge
// from raw frames to mutual-gaze scores.

#include <optional>
#include <vector>

#include "iid/core.hpp"
#include "iid/errors.hpp"
#include "iid/forest.hpp"

namespace iid {

struct FeatureVector {
  FeatureSetKind kind = FeatureSetKind::C;
  std::vector<double> values;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Mutual-gaze score for one frame: the stored score when present, otherwise
/// a fresh classifier evaluation. Frames without a detected face score 0
/// (no face in view implies no eye contact).
inline double predict_gaze_score(const Frame& f, const ForestModel* gaze) {
  if (f.m_hat) return *f.m_hat;
  if (!f.landmarks) return 0.0;
  if (gaze == nullptr) throw MissingGaze("no stored score and no gaze model");
  return predict_proba(*gaze, gaze_input(f));
}

/// Assemble the feature vector of `kind` for one frame. The mutual-gaze
/// score is required only by kinds that include it; landmark-less frames
/// contribute a zero landmark block in the full set.
inline FeatureVector build_feature(const Frame& f, FeatureSetKind kind,
                                   std::optional<double> m_hat = std::nullopt) {
  FeatureVector fv;
  fv.kind = kind;
  fv.values.reserve(feature_dim(kind));
  const bool with_m = needs_gaze_score(kind);
  if (with_m) {
    if (!m_hat) throw MissingGaze("feature set needs a mutual-gaze score");
    if (!(*m_hat >= 0.0 && *m_hat <= 1.0)) {
      throw Error("mutual-gaze score outside [0, 1]");
    }
  }
  switch (kind) {
    case FeatureSetKind::C:
      fv.values.insert(fv.values.end(), f.p_c.v.begin(), f.p_c.v.end());
      break;
    case FeatureSetKind::CH:
      fv.values.insert(fv.values.end(), f.p_c.v.begin(), f.p_c.v.end());
      fv.values.insert(fv.values.end(), f.p_h.v.begin(), f.p_h.v.end());
      break;
    case FeatureSetKind::M:
      fv.values.push_back(*m_hat);
      break;
    case FeatureSetKind::CHM:
      fv.values.insert(fv.values.end(), f.p_c.v.begin(), f.p_c.v.end());
      fv.values.insert(fv.values.end(), f.p_h.v.begin(), f.p_h.v.end());
      fv.values.push_back(*m_hat);
      break;
    case FeatureSetKind::FULL: {
      fv.values.insert(fv.values.end(), f.p_c.v.begin(), f.p_c.v.end());
      fv.values.insert(fv.values.end(), f.p_h.v.begin(), f.p_h.v.end());
      fv.values.push_back(*m_hat);
      if (f.landmarks) {
        const LandmarkSet norm =
            f.landmarks->normalized
                ? *f.landmarks
                : normalize_landmarks(std::vector<double>(
                      f.landmarks->values.begin(), f.landmarks->values.end()));
        fv.values.insert(fv.values.end(), norm.values.begin(),
                         norm.values.end());
      } else {
        fv.values.insert(fv.values.end(), kLandmarkDim, 0.0);
      }
      break;
    }
  }
  if (static_cast<int>(fv.values.size()) != feature_dim(kind)) {
    throw ShapeError("feature assembly produced wrong dimension");
  }
  return fv;
}

/// Feature vectors for every frame of a sequence. `gaze` may be null when
/// the kind needs no score or all frames carry stored scores.
inline std::vector<FeatureVector> feature_matrix(const Sequence& seq,
                                                 FeatureSetKind kind,
                                                 const ForestModel* gaze) {
  std::vector<FeatureVector> out;
  out.reserve(seq.frames.size());
  for (const Frame& f : seq.frames) {
    std::optional<double> m;
    if (needs_gaze_score(kind)) m = predict_gaze_score(f, gaze);
    out.push_back(build_feature(f, kind, m));
  }
  return out;
}

/// Fill in missing stored gaze scores across a dataset so later feature
/// extraction never re-evaluates the classifier.
inline void ensure_gaze_scores(Dataset& data, const ForestModel& gaze) {
  for (Sequence& seq : data.sequences) {
    for (Frame& f : seq.frames) {
      if (!f.m_hat) f.m_hat = predict_gaze_score(f, &gaze);
    }
  }
}

}  // namespace iid
