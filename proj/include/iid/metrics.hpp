#pragma once

// Frame-level metrics (AUROC, average precision, accuracy, distance
// quantiles), temporal alignment statistics, and the sequence-level
// commitment protocol with threshold sweeps and advance-detection measures.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "iid/core.hpp"
#include "iid/dataset_io.hpp"
#include "iid/errors.hpp"

namespace iid {

namespace detail {

// Ranking metrics group tied scores by equality comparisons, which never
// terminate on NaN, so non-finite scores are rejected up front.
inline void check_scores_finite(const std::vector<double>& scores) {
  for (double s : scores) {
    if (!std::isfinite(s)) throw ShapeError("non-finite score");
  }
}

}  // namespace detail

/// Rank-based AUROC: probability that a random positive outscores a random
/// negative, ties counted one half. Computed via average ranks.
inline double auroc(const std::vector<double>& scores,
                    const std::vector<char>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores/labels length");
  const std::size_t n = scores.size();
  if (n == 0) throw ShapeError("empty input");
  detail::check_scores_finite(scores);
  std::size_t pos = 0;
  for (char l : labels) pos += l ? 1 : 0;
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) {
    throw UndefinedMetric("AUROC needs both classes");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q);
}

/// Average precision over the descending-score sweep:
/// AP = sum over thresholds of (recall_i - recall_{i-1}) * precision_i,
/// with tied scores handled as a single threshold step.
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<char>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores/labels length");
  const std::size_t n = scores.size();
  if (n == 0) throw ShapeError("empty input");
  detail::check_scores_finite(scores);
  std::size_t pos = 0;
  for (char l : labels) pos += l ? 1 : 0;
  if (pos == 0 || pos == n) {
    throw UndefinedMetric("average precision needs both classes");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) {
      labels[order[k]] ? ++tp : ++fp;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision =
        static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

/// Fraction of frames classified correctly at `threshold` (score >= threshold
/// predicts positive).
inline double accuracy_at(const std::vector<double>& scores,
                          const std::vector<char>& labels, double threshold) {
  if (scores.size() != labels.size()) throw ShapeError("scores/labels length");
  if (scores.empty()) throw ShapeError("empty input");
  detail::check_scores_finite(scores);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (pred == static_cast<bool>(labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

/// Inclusive (type-7) empirical quantile of an already sorted vector.
inline double percentile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw ShapeError("percentile of empty vector");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

struct QuantileBin {
  double dist_lo = 0.0, dist_hi = 0.0;
  std::optional<double> auroc;  // absent when the bin is single-class
  int frames = 0;
};

/// Split frames into `bins` equal-population distance bins and evaluate
/// AUROC separately in each. Single-class bins are flagged, not fatal.
inline std::vector<QuantileBin> distance_quantile_auroc(
    const std::vector<double>& scores, const std::vector<char>& labels,
    const std::vector<double>& distances, int bins = 5) {
  if (scores.size() != labels.size() || scores.size() != distances.size()) {
    throw ShapeError("scores/labels/distances length mismatch");
  }
  if (bins < 1) throw ShapeError("bins must be >= 1");
  if (scores.size() < static_cast<std::size_t>(bins)) {
    throw ShapeError("fewer samples than bins");
  }
  std::vector<double> sorted = distances;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> edges(bins + 1);
  for (int b = 0; b <= bins; ++b) {
    edges[b] = percentile_sorted(sorted, static_cast<double>(b) / bins);
  }
  std::vector<std::vector<double>> bin_scores(bins);
  std::vector<std::vector<char>> bin_labels(bins);
  for (std::size_t i = 0; i < distances.size(); ++i) {
    int b = bins - 1;
    for (int j = 0; j < bins; ++j) {
      if (distances[i] <= edges[j + 1]) {
        b = j;
        break;
      }
    }
    bin_scores[b].push_back(scores[i]);
    bin_labels[b].push_back(labels[i]);
  }
  std::vector<QuantileBin> out(bins);
  for (int b = 0; b < bins; ++b) {
    out[b].dist_lo = edges[b];
    out[b].dist_hi = edges[b + 1];
    out[b].frames = static_cast<int>(bin_scores[b].size());
    bool has_pos = false, has_neg = false;
    for (char l : bin_labels[b]) (l ? has_pos : has_neg) = true;
    if (has_pos && has_neg) {
      out[b].auroc = auroc(bin_scores[b], bin_labels[b]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sequence-level commitment protocol

enum class Outcome { TP, FP, TN, FN };

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::TP: return "TP";
    case Outcome::FP: return "FP";
    case Outcome::TN: return "TN";
    case Outcome::FN: return "FN";
  }
  throw Error("unreachable outcome");
}

struct OutcomeRecord {
  std::string seq_id;
  Outcome outcome = Outcome::TN;
  std::optional<int> trigger_index;        // TP and FP only
  std::optional<double> advance_time;      // TP only, seconds
  std::optional<double> advance_distance;  // TP only, meters
};

/// Irreversible-commitment decision for one sequence: the first frame whose
/// score reaches tau triggers. For positive sequences only frames up to and
/// including the interaction frame are eligible, so a detection is always an
/// advance detection.
inline OutcomeRecord sequence_decision(const Sequence& seq,
                                       const std::vector<double>& scores,
                                       double tau) {
  if (scores.size() != seq.frames.size()) {
    throw ShapeError("scores length != frame count for " + seq.id);
  }
  if (!(tau >= 0.0)) throw ShapeError("tau must be >= 0");
  const int last_eval = seq.label ? *seq.interaction_index
                                  : static_cast<int>(seq.frames.size()) - 1;
  std::optional<int> trigger;
  for (int i = 0; i <= last_eval; ++i) {
    if (scores[i] >= tau) {
      trigger = i;
      break;
    }
  }
  OutcomeRecord rec;
  rec.seq_id = seq.id;
  if (seq.label) {
    if (trigger) {
      rec.outcome = Outcome::TP;
      rec.trigger_index = trigger;
      rec.advance_time =
          seq.frames[*seq.interaction_index].t - seq.frames[*trigger].t;
      rec.advance_distance = ground_distance(seq.frames[*trigger].p_c);
    } else {
      rec.outcome = Outcome::FN;
    }
  } else {
    if (trigger) {
      rec.outcome = Outcome::FP;
      rec.trigger_index = trigger;
    } else {
      rec.outcome = Outcome::TN;
    }
  }
  return rec;
}

struct CurvePoint {
  double tau = 0.0;
  double fpr = 0.0, tpr = 0.0, precision = 1.0, recall = 0.0, accuracy = 0.0;
  std::optional<double> mean_advance_distance;  // meters, over TPs
  std::optional<double> mean_advance_time;      // seconds, over TPs
};

inline std::vector<double> default_tau_grid() {
  std::vector<double> taus(101);
  for (int i = 0; i <= 100; ++i) taus[i] = static_cast<double>(i) / 100.0;
  return taus;
}

/// Sequence-level metrics for each threshold of the grid. Scores are given
/// per sequence id. Precision is reported as 1 when nothing triggers.
inline std::vector<CurvePoint> sweep_thresholds(
    const Dataset& data,
    const std::map<std::string, std::vector<double>>& scores,
    const std::vector<double>& taus) {
  std::size_t n_pos = 0, n_neg = 0;
  for (const auto& s : data.sequences) (s.label ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedMetric("threshold sweep needs both sequence classes");
  }
  std::vector<CurvePoint> out;
  out.reserve(taus.size());
  for (double tau : taus) {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double dist_sum = 0.0, time_sum = 0.0;
    for (const auto& seq : data.sequences) {
      const auto it = scores.find(seq.id);
      if (it == scores.end()) throw ShapeError("no scores for " + seq.id);
      const OutcomeRecord rec = sequence_decision(seq, it->second, tau);
      switch (rec.outcome) {
        case Outcome::TP:
          ++tp;
          dist_sum += *rec.advance_distance;
          time_sum += *rec.advance_time;
          break;
        case Outcome::FP: ++fp; break;
        case Outcome::TN: ++tn; break;
        case Outcome::FN: ++fn; break;
      }
    }
    CurvePoint p;
    p.tau = tau;
    p.fpr = static_cast<double>(fp) / static_cast<double>(fp + tn);
    p.tpr = static_cast<double>(tp) / static_cast<double>(tp + fn);
    p.recall = p.tpr;
    p.precision = (tp + fp) ? static_cast<double>(tp) /
                                  static_cast<double>(tp + fp)
                            : 1.0;
    p.accuracy = static_cast<double>(tp + tn) /
                 static_cast<double>(tp + fp + tn + fn);
    if (tp) {
      p.mean_advance_distance = dist_sum / static_cast<double>(tp);
      p.mean_advance_time = time_sum / static_cast<double>(tp);
    }
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Temporal alignment (t = 0 at the interaction for positives, at the closest
// approach for negatives)

struct AlignedRow {
  std::string series;  // distance_time | probability_time | probability_distance
  bool positive = false;
  double x = 0.0;  // aligned time (s) or distance (m)
  int n = 0;
  double median = 0.0, q25 = 0.0, q75 = 0.0;
};

inline std::vector<AlignedRow> align_sequences(
    const Dataset& data,
    const std::map<std::string, std::vector<double>>& scores,
    double time_step = 0.2, double dist_step = 0.25) {
  if (time_step <= 0 || dist_step <= 0) throw ShapeError("non-positive step");
  using Key = std::pair<long long, bool>;
  std::map<Key, std::vector<double>> dist_by_time, prob_by_time, prob_by_dist;

  for (const auto& seq : data.sequences) {
    const auto it = scores.find(seq.id);
    if (it == scores.end()) throw ShapeError("no scores for " + seq.id);
    if (it->second.size() != seq.frames.size()) {
      throw ShapeError("scores length != frame count for " + seq.id);
    }
    const int anchor = seq.label ? *seq.interaction_index : seq.closest_index();
    const double t0 = seq.frames[anchor].t;
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
      const double rel_t = seq.frames[i].t - t0;
      const double d = ground_distance(seq.frames[i].p_c);
      const long long tc = std::llround(rel_t / time_step);
      dist_by_time[{tc, seq.label}].push_back(d);
      prob_by_time[{tc, seq.label}].push_back(it->second[i]);
      // Negative samples past their closest approach are walking away and
      // excluded from the probability-vs-distance view.
      if (seq.label || rel_t <= 0.0) {
        const long long dc = static_cast<long long>(std::floor(d / dist_step));
        prob_by_dist[{dc, seq.label}].push_back(it->second[i]);
      }
    }
  }

  std::vector<AlignedRow> rows;
  auto emit = [&rows](const std::string& series,
                      std::map<Key, std::vector<double>>& cells, double step,
                      bool cell_center) {
    for (auto& [key, vals] : cells) {
      std::sort(vals.begin(), vals.end());
      AlignedRow r;
      r.series = series;
      r.positive = key.second;
      r.x = (static_cast<double>(key.first) + (cell_center ? 0.5 : 0.0)) * step;
      r.n = static_cast<int>(vals.size());
      r.median = percentile_sorted(vals, 0.5);
      r.q25 = percentile_sorted(vals, 0.25);
      r.q75 = percentile_sorted(vals, 0.75);
      rows.push_back(r);
    }
  };
  emit("distance_time", dist_by_time, time_step, false);
  emit("probability_time", prob_by_time, time_step, false);
  emit("probability_distance", prob_by_dist, dist_step, true);
  return rows;
}

// ---------------------------------------------------------------------------
// CSV exports (fixed column layouts)

struct FrameMetricsRow {
  std::string fold;  // fold index or "all"
  std::string kind;
  double auroc = 0.0, ap = 0.0, accuracy = 0.0;
};

inline void write_frame_metrics_csv(const std::vector<FrameMetricsRow>& rows,
                                    std::ostream& os) {
  os << "fold,kind,auroc,ap,accuracy\n";
  for (const auto& r : rows) {
    os << r.fold << ',' << r.kind << ',' << fmt_real(r.auroc) << ','
       << fmt_real(r.ap) << ',' << fmt_real(r.accuracy) << '\n';
  }
}

inline void write_threshold_sweep_csv(const std::vector<CurvePoint>& points,
                                      std::ostream& os) {
  os << "tau,fpr,tpr,precision,recall,accuracy,mean_advance_distance,"
        "mean_advance_time\n";
  for (const auto& p : points) {
    os << fmt_real(p.tau) << ',' << fmt_real(p.fpr) << ',' << fmt_real(p.tpr)
       << ',' << fmt_real(p.precision) << ',' << fmt_real(p.recall) << ','
       << fmt_real(p.accuracy) << ','
       << (p.mean_advance_distance ? fmt_real(*p.mean_advance_distance) : "")
       << ','
       << (p.mean_advance_time ? fmt_real(*p.mean_advance_time) : "") << '\n';
  }
}

inline void write_quantile_csv(const std::vector<QuantileBin>& bins,
                               std::ostream& os) {
  os << "bin,dist_lo,dist_hi,frames,auroc\n";
  for (std::size_t b = 0; b < bins.size(); ++b) {
    os << b << ',' << fmt_real(bins[b].dist_lo) << ','
       << fmt_real(bins[b].dist_hi) << ',' << bins[b].frames << ','
       << (bins[b].auroc ? fmt_real(*bins[b].auroc) : "") << '\n';
  }
}

inline void write_aligned_csv(const std::vector<AlignedRow>& rows,
                              std::ostream& os) {
  os << "series,cls,x,n,median,q25,q75\n";
  for (const auto& r : rows) {
    os << r.series << ',' << (r.positive ? "pos" : "neg") << ','
       << fmt_real(r.x) << ',' << r.n << ',' << fmt_real(r.median) << ','
       << fmt_real(r.q25) << ',' << fmt_real(r.q75) << '\n';
  }
}

template <class WriteFn>
inline void write_csv_file(const std::string& path, WriteFn&& fn) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  fn(os);
  if (!os) throw IoError("failed writing " + path);
}

}  // namespace iid
