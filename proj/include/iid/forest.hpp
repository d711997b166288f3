#pragma once

// Random forest of binary Gini trees, grown deterministically from a seed.
// Split scores are compared in exact integer arithmetic so the grown
// structure is reproducible and independent of floating-point rounding.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "iid/core.hpp"
#include "iid/dataset_io.hpp"
#include "iid/errors.hpp"
#include "iid/rng.hpp"

namespace iid {

struct ForestHyperparams {
  int n_trees = 100;
  int max_depth = 16;
  int min_leaf = 2;
  int features_per_split = 0;  // 0 selects ceil(sqrt(input_dim))
  bool bootstrap = true;
  std::uint64_t seed = 0;

  friend bool operator==(const ForestHyperparams&,
                         const ForestHyperparams&) = default;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  double positive_fraction = 0.0;  // leaves only
  int count = 0;                   // training samples that reached the leaf

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // preorder, root at 0

  friend bool operator==(const Tree&, const Tree&) = default;
};

struct ForestModel {
  ForestHyperparams hp;
  int input_dim = 0;
  std::optional<FeatureSetKind> feature_kind;  // absent for the gaze model
  std::vector<Tree> trees;

  friend bool operator==(const ForestModel&, const ForestModel&) = default;
};

namespace detail {

// Split quality is maximized as sum over children of
// (pos^2 + neg^2) / n_child, an affine transform of the negated weighted
// Gini impurity. Candidates are compared by cross-multiplication in
// unsigned 128-bit arithmetic, which is exact for n up to ~10^6.
struct SplitScore {
  unsigned __int128 num = 0;  // A_L * n_R + A_R * n_L
  unsigned __int128 den = 0;  // n_L * n_R

  bool better_than(const SplitScore& o) const {
    return num * o.den > o.num * den;
  }
};

inline SplitScore split_score(std::uint64_t pos_l, std::uint64_t n_l,
                              std::uint64_t pos_r, std::uint64_t n_r) {
  const std::uint64_t neg_l = n_l - pos_l, neg_r = n_r - pos_r;
  const unsigned __int128 a_l =
      static_cast<unsigned __int128>(pos_l) * pos_l +
      static_cast<unsigned __int128>(neg_l) * neg_l;
  const unsigned __int128 a_r =
      static_cast<unsigned __int128>(pos_r) * pos_r +
      static_cast<unsigned __int128>(neg_r) * neg_r;
  SplitScore s;
  s.num = a_l * n_r + a_r * n_l;
  s.den = static_cast<unsigned __int128>(n_l) * n_r;
  return s;
}

struct TreeBuilder {
  const std::vector<std::vector<double>>& x;
  const std::vector<char>& y;
  const ForestHyperparams& hp;
  int dim;
  int m;  // features drawn per split
  Rng& rng;
  Tree& tree;

  int build(std::vector<int>& samples, int depth) {
    const int node_idx = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const std::uint64_t n = samples.size();
    std::uint64_t pos = 0;
    for (int s : samples) pos += y[s] ? 1 : 0;

    const bool pure = (pos == 0 || pos == n);
    if (pure || depth >= hp.max_depth ||
        n < 2 * static_cast<std::uint64_t>(hp.min_leaf)) {
      make_leaf(node_idx, pos, n);
      return node_idx;
    }

    const std::vector<int> feats = draw_features();
    int best_feat = -1;
    double best_thr = 0.0;
    SplitScore best{};
    std::vector<std::pair<double, char>> vals(samples.size());
    for (int f : feats) {
      for (std::size_t i = 0; i < samples.size(); ++i) {
        vals[i] = {x[samples[i]][f], y[samples[i]]};
      }
      std::sort(vals.begin(), vals.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      std::uint64_t pos_l = 0, n_l = 0;
      std::size_t i = 0;
      while (i < vals.size()) {
        std::size_t j = i;
        while (j < vals.size() && vals[j].first == vals[i].first) {
          pos_l += vals[j].second ? 1 : 0;
          ++j;
        }
        n_l += j - i;
        if (j == vals.size()) break;  // no boundary after the last value
        const std::uint64_t n_r = n - n_l;
        if (n_l >= static_cast<std::uint64_t>(hp.min_leaf) &&
            n_r >= static_cast<std::uint64_t>(hp.min_leaf)) {
          const SplitScore cand = split_score(pos_l, n_l, pos - pos_l, n_r);
          // Strict improvement keeps the first candidate on ties, which is
          // the lowest feature index and then the lowest threshold.
          if (best_feat < 0 || cand.better_than(best)) {
            best = cand;
            best_feat = f;
            // Midpoint of two values one ulp apart can round down onto the
            // lower value, which would route the whole lower group right and
            // leave the left child empty. Snapping to the upper value keeps
            // the partition the sweep counted: below the boundary goes left.
            double thr = 0.5 * (vals[j - 1].first + vals[j].first);
            if (!(thr > vals[j - 1].first)) thr = vals[j].first;
            best_thr = thr;
          }
        }
        i = j;
      }
    }

    if (best_feat < 0) {
      make_leaf(node_idx, pos, n);
      return node_idx;
    }

    std::vector<int> left, right;
    left.reserve(samples.size());
    for (int s : samples) {
      (x[s][best_feat] < best_thr ? left : right).push_back(s);
    }
    samples.clear();
    samples.shrink_to_fit();
    tree.nodes[node_idx].feature = best_feat;
    tree.nodes[node_idx].threshold = best_thr;
    const int l = build(left, depth + 1);
    tree.nodes[node_idx].left = l;
    const int r = build(right, depth + 1);
    tree.nodes[node_idx].right = r;
    return node_idx;
  }

  void make_leaf(int node_idx, std::uint64_t pos, std::uint64_t n) {
    TreeNode& nd = tree.nodes[node_idx];
    nd.feature = -1;
    nd.positive_fraction = static_cast<double>(pos) / static_cast<double>(n);
    nd.count = static_cast<int>(n);
  }

  std::vector<int> draw_features() {
    if (m >= dim) {
      std::vector<int> all(dim);
      for (int f = 0; f < dim; ++f) all[f] = f;
      return all;
    }
    // Partial Fisher-Yates over [0, dim); the drawn prefix is then sorted so
    // features are always scanned in ascending order.
    std::vector<int> pool(dim);
    for (int f = 0; f < dim; ++f) pool[f] = f;
    std::vector<int> picked(m);
    for (int i = 0; i < m; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(
                                    rng.index(static_cast<std::size_t>(dim - i)));
      std::swap(pool[i], pool[j]);
      picked[i] = pool[i];
    }
    std::sort(picked.begin(), picked.end());
    return picked;
  }
};

}  // namespace detail

inline int resolve_features_per_split(const ForestHyperparams& hp, int dim) {
  if (hp.features_per_split > 0) return hp.features_per_split;
  return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(dim))));
}

inline ForestModel train_forest(const std::vector<std::vector<double>>& x,
                                const std::vector<char>& y,
                                const ForestHyperparams& hp) {
  if (x.size() != y.size()) throw ShapeError("x/y length mismatch");
  if (x.size() < 2) throw ShapeError("need at least 2 training samples");
  const std::size_t dim = x[0].size();
  if (dim == 0) throw ShapeError("zero-dimensional samples");
  for (const auto& row : x) {
    if (row.size() != dim) throw ShapeError("ragged feature matrix");
    for (double v : row) {
      if (!std::isfinite(v)) throw ShapeError("non-finite feature value");
    }
  }
  bool has_pos = false, has_neg = false;
  for (char l : y) (l ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) {
    throw DegenerateLabels("training labels are single-class");
  }
  if (hp.n_trees < 1) throw ConfigError("n_trees must be >= 1");
  if (hp.min_leaf < 1) throw ConfigError("min_leaf must be >= 1");
  if (hp.max_depth < 0) throw ConfigError("max_depth must be >= 0");

  ForestModel model;
  model.hp = hp;
  model.input_dim = static_cast<int>(dim);
  model.trees.resize(hp.n_trees);
  const int m = resolve_features_per_split(hp, static_cast<int>(dim));
  for (int t = 0; t < hp.n_trees; ++t) {
    Rng rng(derive_seed(hp.seed, static_cast<std::uint64_t>(t)));
    std::vector<int> samples(x.size());
    if (hp.bootstrap) {
      for (auto& s : samples) {
        s = static_cast<int>(rng.index(x.size()));
      }
    } else {
      for (std::size_t i = 0; i < x.size(); ++i) samples[i] = static_cast<int>(i);
    }
    detail::TreeBuilder builder{x, y, hp, static_cast<int>(dim), m, rng,
                                model.trees[t]};
    builder.build(samples, 0);
  }
  return model;
}

inline double predict_tree(const Tree& tree, const std::vector<double>& x) {
  int i = 0;
  while (tree.nodes[i].feature >= 0) {
    const TreeNode& nd = tree.nodes[i];
    i = x[nd.feature] < nd.threshold ? nd.left : nd.right;
  }
  return tree.nodes[i].positive_fraction;
}

inline double predict_proba(const ForestModel& model,
                            const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != model.input_dim) {
    throw ShapeError("input has " + std::to_string(x.size()) +
                     " features, model expects " +
                     std::to_string(model.input_dim));
  }
  double sum = 0.0;
  for (const Tree& t : model.trees) sum += predict_tree(t, x);
  return sum / static_cast<double>(model.trees.size());
}

/// Concatenated chest pose, head pose and landmark block fed to the
/// mutual-gaze classifier.
inline std::vector<double> gaze_input(const Frame& f) {
  if (!f.landmarks) throw MissingLandmarks("frame has no landmarks");
  std::vector<double> x;
  x.reserve(kGazeInputDim);
  x.insert(x.end(), f.p_c.v.begin(), f.p_c.v.end());
  x.insert(x.end(), f.p_h.v.begin(), f.p_h.v.end());
  x.insert(x.end(), f.landmarks->values.begin(), f.landmarks->values.end());
  return x;
}

/// Frames usable for mutual-gaze training: landmarks present and gaze
/// ground truth known.
inline std::vector<std::pair<const Frame*, bool>> collect_gaze_samples(
    const Dataset& data) {
  std::vector<std::pair<const Frame*, bool>> out;
  for (const auto& seq : data.sequences) {
    for (const auto& f : seq.frames) {
      if (f.landmarks && f.gaze_gt) out.push_back({&f, *f.gaze_gt});
    }
  }
  return out;
}

inline ForestModel train_mutual_gaze(
    const std::vector<std::pair<const Frame*, bool>>& samples,
    const ForestHyperparams& hp) {
  std::vector<std::vector<double>> x;
  std::vector<char> y;
  x.reserve(samples.size());
  y.reserve(samples.size());
  for (const auto& [frame, looking] : samples) {
    if (!frame->landmarks) {
      throw MissingLandmarks("gaze training frame has no landmarks");
    }
    x.push_back(gaze_input(*frame));
    y.push_back(looking ? 1 : 0);
  }
  return train_forest(x, y, hp);
}

// ---------------------------------------------------------------------------
// Persistence: line-oriented text container, exact double round-trip.

inline void save_forest(const ForestModel& model, std::ostream& os) {
  os << "IIDF1\n";
  os << "features "
     << (model.feature_kind ? to_string(*model.feature_kind) : "gaze") << '\n';
  os << "input_dim " << model.input_dim << '\n';
  os << "n_trees " << model.hp.n_trees << '\n';
  os << "max_depth " << model.hp.max_depth << '\n';
  os << "min_leaf " << model.hp.min_leaf << '\n';
  os << "features_per_split " << model.hp.features_per_split << '\n';
  os << "bootstrap " << (model.hp.bootstrap ? 1 : 0) << '\n';
  os << "seed " << model.hp.seed << '\n';
  os << "trees " << model.trees.size() << '\n';
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    const Tree& tree = model.trees[t];
    os << "tree " << t << ' ' << tree.nodes.size() << '\n';
    for (const TreeNode& nd : tree.nodes) {
      if (nd.feature >= 0) {
        os << "I " << nd.feature << ' ' << fmt_real(nd.threshold) << '\n';
      } else {
        os << "L " << fmt_real(nd.positive_fraction) << ' ' << nd.count << '\n';
      }
    }
  }
  if (!os) throw IoError("forest write failed");
}

inline void save_forest(const ForestModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  save_forest(model, os);
}

namespace detail {

inline std::string next_line(std::istream& is, int& line_no) {
  std::string line;
  if (!std::getline(is, line)) {
    throw ParseError(line_no + 1, "unexpected end of forest file");
  }
  ++line_no;
  return line;
}

inline std::uint64_t parse_kv_u64(const std::string& line,
                                  const std::string& key, int line_no) {
  std::istringstream ss(line);
  std::string k;
  std::uint64_t v = 0;
  if (!(ss >> k >> v) || k != key) {
    throw ParseError(line_no, "expected '" + key + " <value>'");
  }
  return v;
}

// Reconstructs child indices from the preorder node stream.
inline int link_subtree(std::vector<TreeNode>& nodes, int& cursor,
                        int total, int line_base) {
  if (cursor >= total) {
    throw ParseError(line_base, "tree node stream ended early");
  }
  const int idx = cursor++;
  if (nodes[idx].feature >= 0) {
    nodes[idx].left = link_subtree(nodes, cursor, total, line_base);
    nodes[idx].right = link_subtree(nodes, cursor, total, line_base);
  }
  return idx;
}

}  // namespace detail

inline ForestModel load_forest(std::istream& is) {
  int ln = 0;
  if (detail::next_line(is, ln) != "IIDF1") {
    throw ParseError(1, "bad magic, expected IIDF1");
  }
  ForestModel model;
  {
    std::istringstream ss(detail::next_line(is, ln));
    std::string k, v;
    if (!(ss >> k >> v) || k != "features") {
      throw ParseError(ln, "expected 'features <kind>'");
    }
    if (v != "gaze") model.feature_kind = parse_feature_kind(v);
  }
  model.input_dim = static_cast<int>(
      detail::parse_kv_u64(detail::next_line(is, ln), "input_dim", ln));
  model.hp.n_trees = static_cast<int>(
      detail::parse_kv_u64(detail::next_line(is, ln), "n_trees", ln));
  model.hp.max_depth = static_cast<int>(
      detail::parse_kv_u64(detail::next_line(is, ln), "max_depth", ln));
  model.hp.min_leaf = static_cast<int>(
      detail::parse_kv_u64(detail::next_line(is, ln), "min_leaf", ln));
  model.hp.features_per_split = static_cast<int>(
      detail::parse_kv_u64(detail::next_line(is, ln), "features_per_split", ln));
  model.hp.bootstrap =
      detail::parse_kv_u64(detail::next_line(is, ln), "bootstrap", ln) != 0;
  model.hp.seed = detail::parse_kv_u64(detail::next_line(is, ln), "seed", ln);
  const std::uint64_t n_trees =
      detail::parse_kv_u64(detail::next_line(is, ln), "trees", ln);
  model.trees.resize(n_trees);
  for (std::uint64_t t = 0; t < n_trees; ++t) {
    std::istringstream ss(detail::next_line(is, ln));
    std::string k;
    std::uint64_t idx = 0, n_nodes = 0;
    if (!(ss >> k >> idx >> n_nodes) || k != "tree" || idx != t) {
      throw ParseError(ln, "expected 'tree " + std::to_string(t) + " <n>'");
    }
    if (n_nodes == 0) throw ParseError(ln, "empty tree");
    std::vector<TreeNode>& nodes = model.trees[t].nodes;
    nodes.resize(n_nodes);
    const int tree_line = ln;
    for (std::uint64_t i = 0; i < n_nodes; ++i) {
      std::istringstream ns(detail::next_line(is, ln));
      std::string tag;
      ns >> tag;
      if (tag == "I") {
        int feat = -1;
        std::string thr;
        if (!(ns >> feat >> thr) || feat < 0 || feat >= model.input_dim) {
          throw ParseError(ln, "bad internal node");
        }
        nodes[i].feature = feat;
        nodes[i].threshold = std::strtod(thr.c_str(), nullptr);
      } else if (tag == "L") {
        std::string frac;
        int count = 0;
        if (!(ns >> frac >> count) || count < 0) {
          throw ParseError(ln, "bad leaf node");
        }
        nodes[i].feature = -1;
        nodes[i].positive_fraction = std::strtod(frac.c_str(), nullptr);
        nodes[i].count = count;
      } else {
        throw ParseError(ln, "expected node tag I or L");
      }
    }
    int cursor = 0;
    detail::link_subtree(nodes, cursor, static_cast<int>(n_nodes), tree_line);
    if (cursor != static_cast<int>(n_nodes)) {
      throw ParseError(ln, "tree has unreachable trailing nodes");
    }
  }
  if (model.feature_kind &&
      model.input_dim != feature_dim(*model.feature_kind)) {
    throw ParseError(ln, "input_dim inconsistent with feature kind");
  }
  return model;
}

inline ForestModel load_forest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return load_forest(is);
}

}  // namespace iid
