#pragma once

// Stratified k-fold evaluation shared by the LSTM and the frame-level
// random-forest baseline, producing per-fold metrics and pooled
// out-of-fold scores.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "iid/core.hpp"
#include "iid/errors.hpp"
#include "iid/features.hpp"
#include "iid/forest.hpp"
#include "iid/lstm.hpp"
#include "iid/metrics.hpp"

namespace iid {

struct CvFoldResult {
  int fold = 0;
  double auroc = 0.0, ap = 0.0, accuracy = 0.0;
};

struct CvResult {
  FeatureSetKind kind = FeatureSetKind::C;
  std::string classifier;  // "lstm" or "rf"
  std::vector<CvFoldResult> folds;
  std::map<std::string, std::vector<double>> oof_scores;  // per sequence id
  double pooled_auroc = 0.0, pooled_ap = 0.0, pooled_accuracy = 0.0;
};

/// Per-frame score vectors for every sequence of a dataset, using either
/// model family.
inline std::map<std::string, std::vector<double>> score_sequences_lstm(
    const LstmModel& model, const Dataset& data, const ForestModel* gaze) {
  std::map<std::string, std::vector<double>> out;
  for (const Sequence& seq : data.sequences) {
    out[seq.id] = predict_sequence(model, seq, gaze);
  }
  return out;
}

inline std::map<std::string, std::vector<double>> score_sequences_forest(
    const ForestModel& model, const Dataset& data, const ForestModel* gaze) {
  if (!model.feature_kind) {
    throw ConfigError("forest has no intent feature kind");
  }
  std::map<std::string, std::vector<double>> out;
  for (const Sequence& seq : data.sequences) {
    const std::vector<FeatureVector> feats =
        feature_matrix(seq, *model.feature_kind, gaze);
    std::vector<double> probs;
    probs.reserve(feats.size());
    for (const FeatureVector& fv : feats) {
      probs.push_back(predict_proba(model, fv.values));
    }
    out[seq.id] = std::move(probs);
  }
  return out;
}

/// Frame-level random forest on instantaneous features, every frame
/// labeled with its sequence's label.
inline ForestModel train_intent_forest(const Dataset& data,
                                       FeatureSetKind kind,
                                       const ForestHyperparams& hp,
                                       const ForestModel* gaze) {
  std::vector<std::vector<double>> x;
  std::vector<char> y;
  x.reserve(data.total_frames());
  for (const Sequence& seq : data.sequences) {
    for (const FeatureVector& fv : feature_matrix(seq, kind, gaze)) {
      x.push_back(fv.values);
      y.push_back(seq.label ? 1 : 0);
    }
  }
  ForestModel model = train_forest(x, y, hp);
  model.feature_kind = kind;
  return model;
}

namespace detail {

inline void pool_fold_metrics(const Dataset& test,
                              const std::map<std::string, std::vector<double>>& scores,
                              int fold, CvResult& result) {
  std::vector<double> s;
  std::vector<char> l;
  for (const Sequence& seq : test.sequences) {
    const std::vector<double>& probs = scores.at(seq.id);
    s.insert(s.end(), probs.begin(), probs.end());
    l.insert(l.end(), probs.size(), seq.label ? 1 : 0);
    result.oof_scores[seq.id] = probs;
  }
  CvFoldResult fr;
  fr.fold = fold;
  fr.auroc = auroc(s, l);
  fr.ap = average_precision(s, l);
  fr.accuracy = accuracy_at(s, l, 0.5);
  result.folds.push_back(fr);
}

}  // namespace detail

/// Stratified k-fold cross-validation. For the LSTM the fold after the test
/// fold serves as the early-stopping validation set; the forest trains on
/// all remaining folds. Per-fold seeds derive from the base seeds.
inline CvResult run_cv(const Dataset& data, FeatureSetKind kind,
                       const std::string& classifier, int k,
                       std::uint64_t split_seed, const TrainConfig& cfg,
                       const ForestHyperparams& rf_hp,
                       const ForestModel* gaze) {
  if (classifier != "lstm" && classifier != "rf") {
    throw ConfigError("classifier must be 'lstm' or 'rf'");
  }
  const FoldSplit split = stratified_kfold(data, k, split_seed);
  CvResult result;
  result.kind = kind;
  result.classifier = classifier;
  for (int fold = 0; fold < k; ++fold) {
    const Dataset test = select_folds(data, split, {fold});
    if (classifier == "lstm") {
      const int val_fold = (fold + 1) % k;
      const Dataset val = select_folds(data, split, {val_fold});
      std::vector<int> train_folds;
      for (int f = 0; f < k; ++f) {
        if (f != fold && f != val_fold) train_folds.push_back(f);
      }
      const Dataset train = select_folds(data, split, train_folds);
      TrainConfig fold_cfg = cfg;
      fold_cfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(fold));
      const LstmModel model = train_lstm(train, val, kind, fold_cfg, gaze);
      detail::pool_fold_metrics(test, score_sequences_lstm(model, test, gaze),
                                fold, result);
    } else {
      const Dataset train = exclude_fold(data, split, fold);
      ForestHyperparams fold_hp = rf_hp;
      fold_hp.seed = derive_seed(rf_hp.seed, static_cast<std::uint64_t>(fold));
      const ForestModel model = train_intent_forest(train, kind, fold_hp, gaze);
      detail::pool_fold_metrics(test,
                                score_sequences_forest(model, test, gaze),
                                fold, result);
    }
  }
  std::vector<double> s;
  std::vector<char> l;
  for (const Sequence& seq : data.sequences) {
    const std::vector<double>& probs = result.oof_scores.at(seq.id);
    s.insert(s.end(), probs.begin(), probs.end());
    l.insert(l.end(), probs.size(), seq.label ? 1 : 0);
  }
  result.pooled_auroc = auroc(s, l);
  result.pooled_ap = average_precision(s, l);
  result.pooled_accuracy = accuracy_at(s, l, 0.5);
  return result;
}

/// Train an LSTM on the whole dataset, holding out one stratified fold of
/// five as the early-stopping validation set.
inline LstmModel train_final_lstm(const Dataset& data, FeatureSetKind kind,
                                  const TrainConfig& cfg,
                                  const ForestModel* gaze,
                                  std::vector<TrainLogRow>* log = nullptr) {
  const FoldSplit split = stratified_kfold(data, 5, cfg.seed);
  const Dataset val = select_folds(data, split, {0});
  const Dataset train = exclude_fold(data, split, 0);
  return train_lstm(train, val, kind, cfg, gaze, log);
}

inline std::vector<FrameMetricsRow> cv_frame_metrics(const CvResult& r) {
  std::vector<FrameMetricsRow> rows;
  for (const CvFoldResult& f : r.folds) {
    rows.push_back({std::to_string(f.fold), to_string(r.kind), f.auroc, f.ap,
                    f.accuracy});
  }
  rows.push_back({"pooled", to_string(r.kind), r.pooled_auroc, r.pooled_ap,
                  r.pooled_accuracy});
  return rows;
}

}  // namespace iid
