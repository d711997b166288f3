#pragma once

// Self-supervised relabeling from interaction events and the day-by-day
// adaptation experiment: pretrain on source environments, accumulate
// deployment sequences in daily groups, retrain from scratch each day, and
// track AUROC on a fixed deployment test split.

#include <algorithm>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "iid/core.hpp"
#include "iid/dataset_io.hpp"
#include "iid/errors.hpp"
#include "iid/experiment.hpp"
#include "iid/lstm.hpp"
#include "iid/metrics.hpp"
#include "iid/rng.hpp"

namespace iid {

/// Label a sequence from the robot's own interaction log: positive iff an
/// interaction event fell inside it, anchored at the first event. Frame
/// data is never modified.
inline Sequence label_from_experience(const Sequence& raw,
                                      const std::vector<int>& events) {
  Sequence out = raw;
  for (int e : events) {
    if (e < 0 || e >= static_cast<int>(raw.frames.size())) {
      throw IndexError("interaction event " + std::to_string(e) +
                       " outside sequence " + raw.id);
    }
  }
  if (events.empty()) {
    out.label = false;
    out.interaction_index.reset();
  } else {
    out.label = true;
    out.interaction_index = *std::min_element(events.begin(), events.end());
  }
  out.validate();
  return out;
}

struct AdaptationSchedule {
  std::vector<std::string> pretrain_envs = {"lab", "office"};
  std::string deploy_env = "kids";
  double test_fraction = 0.2;
  int day_groups = 4;
  int replicas = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (pretrain_envs.empty()) throw ConfigError("no pretrain envs");
    if (deploy_env.empty()) throw ConfigError("no deploy env");
    if (day_groups < 1 || replicas < 1) throw ConfigError("bad schedule counts");
    if (test_fraction <= 0.0 || test_fraction >= 0.5) {
      throw ConfigError("test_fraction outside (0, 0.5)");
    }
  }
};

struct ReplicaResult {
  int replica = 0;
  std::vector<double> auroc_by_day;  // day 0 .. day_groups
  std::vector<std::string> notes;    // group merges, if any
};

namespace detail {

inline void pool_frames(const Dataset& d,
                        std::vector<const Sequence*>& seqs) {
  for (const Sequence& s : d.sequences) seqs.push_back(&s);
}

inline double eval_frame_auroc(const LstmModel& model, const Dataset& test,
                               const ForestModel* gaze) {
  std::vector<double> s;
  std::vector<char> l;
  for (const Sequence& seq : test.sequences) {
    const std::vector<double> probs = predict_sequence(model, seq, gaze);
    s.insert(s.end(), probs.begin(), probs.end());
    l.insert(l.end(), probs.size(), seq.label ? 1 : 0);
  }
  return auroc(s, l);
}

// Train with a stratified internal validation fold (1 of 5) carved out of
// the given pool for early stopping.
inline LstmModel train_with_holdout(const Dataset& pool, FeatureSetKind kind,
                                    const TrainConfig& cfg,
                                    const ForestModel* gaze) {
  const FoldSplit split = stratified_kfold(pool, 5, cfg.seed);
  const Dataset val = select_folds(pool, split, {0});
  const Dataset train = exclude_fold(pool, split, 0);
  return train_lstm(train, val, kind, cfg, gaze);
}

}  // namespace detail

/// The complete adaptation experiment. Day 0 evaluates the model trained on
/// the pretrain environments only; day n retrains from scratch on pretrain
/// data plus the self-labeled deployment groups 1..n. The test split stays
/// fixed within a replica; replica seeds are schedule.seed + replica index.
inline std::vector<ReplicaResult> run_adaptation(
    const AdaptationSchedule& schedule,
    const std::map<std::string, Dataset>& by_env, FeatureSetKind kind,
    const TrainConfig& cfg, const ForestModel* gaze) {
  schedule.validate();
  Dataset pretrain;
  for (const std::string& env : schedule.pretrain_envs) {
    const auto it = by_env.find(env);
    if (it == by_env.end()) throw ConfigError("missing pretrain env " + env);
    for (const Sequence& s : it->second.sequences) {
      pretrain.sequences.push_back(s);
    }
  }
  const auto dit = by_env.find(schedule.deploy_env);
  if (dit == by_env.end()) {
    throw ConfigError("missing deploy env " + schedule.deploy_env);
  }
  const Dataset& deploy = dit->second;
  std::size_t dpos = 0;
  for (const Sequence& s : deploy.sequences) dpos += s.label ? 1 : 0;
  if (deploy.sequences.size() < 25 || dpos == 0 ||
      dpos == deploy.sequences.size()) {
    throw SplitError("deployment env needs >= 25 sequences with both classes");
  }

  TrainConfig pre_cfg = cfg;
  pre_cfg.seed = derive_seed(cfg.seed, 0xAD0ull);
  const LstmModel pretrained =
      detail::train_with_holdout(pretrain, kind, pre_cfg, gaze);

  std::vector<ReplicaResult> results;
  results.reserve(schedule.replicas);
  for (int r = 0; r < schedule.replicas; ++r) {
    const std::uint64_t rep_seed = schedule.seed + static_cast<std::uint64_t>(r);
    // Fixed stratified test split: one fold of round(1/test_fraction).
    const int k_test = std::max(2, static_cast<int>(std::lround(1.0 / schedule.test_fraction)));
    const FoldSplit tsplit =
        stratified_kfold(deploy, k_test, derive_seed(rep_seed, 0x7E57ull));
    const Dataset test = select_folds(deploy, tsplit, {0});
    Dataset remain = exclude_fold(deploy, tsplit, 0);

    // Shuffle the remaining deployment sequences and cut them into day
    // groups, earlier groups taking the remainder.
    Rng grng(derive_seed(rep_seed, 0x0D1ull));
    std::vector<std::size_t> order(remain.sequences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    grng.shuffle(order);
    const std::size_t n = order.size();
    const std::size_t g = static_cast<std::size_t>(schedule.day_groups);
    std::vector<std::vector<const Sequence*>> groups(g);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t gi = i * g / n;
      groups[gi].push_back(&remain.sequences[order[i]]);
    }

    ReplicaResult rr;
    rr.replica = r;
    rr.auroc_by_day.push_back(detail::eval_frame_auroc(pretrained, test, gaze));

    Dataset accum = pretrain;
    for (int day = 1; day <= schedule.day_groups; ++day) {
      for (const Sequence* s : groups[day - 1]) {
        // Self-labeling: strip the label, then recover it from the
        // interaction events the robot itself observed.
        Sequence raw = *s;
        const std::vector<int> events =
            raw.interaction_index ? std::vector<int>{*raw.interaction_index}
                                  : std::vector<int>{};
        raw.label = false;
        raw.interaction_index.reset();
        accum.sequences.push_back(label_from_experience(raw, events));
      }
      bool has_pos = false, has_neg = false;
      for (const Sequence& s : accum.sequences) {
        (s.label ? has_pos : has_neg) = true;
      }
      if (!has_pos || !has_neg) {
        throw SplitError("accumulated training data is single-class");
      }
      TrainConfig day_cfg = cfg;
      day_cfg.seed = derive_seed(rep_seed, 0xDA0ull + static_cast<std::uint64_t>(day));
      const LstmModel model =
          detail::train_with_holdout(accum, kind, day_cfg, gaze);
      rr.auroc_by_day.push_back(detail::eval_frame_auroc(model, test, gaze));
    }
    results.push_back(std::move(rr));
  }
  return results;
}

inline void write_adaptation_csv(const std::vector<ReplicaResult>& results,
                                 std::ostream& os) {
  os << "replica,day,auroc\n";
  for (const ReplicaResult& r : results) {
    for (std::size_t d = 0; d < r.auroc_by_day.size(); ++d) {
      os << r.replica << ',' << d << ',' << fmt_real(r.auroc_by_day[d]) << '\n';
    }
  }
}

/// Median AUROC per day across replicas.
inline std::vector<double> median_by_day(const std::vector<ReplicaResult>& rs) {
  if (rs.empty()) throw ShapeError("no replica results");
  const std::size_t days = rs[0].auroc_by_day.size();
  std::vector<double> medians(days);
  for (std::size_t d = 0; d < days; ++d) {
    std::vector<double> vals;
    vals.reserve(rs.size());
    for (const ReplicaResult& r : rs) {
      if (r.auroc_by_day.size() != days) throw ShapeError("ragged day lists");
      vals.push_back(r.auroc_by_day[d]);
    }
    std::sort(vals.begin(), vals.end());
    medians[d] = percentile_sorted(vals, 0.5);
  }
  return medians;
}

}  // namespace iid
