// Command-line front end: dataset generation, gaze and intent training,
// evaluation, cross-validation, and the adaptation experiment. Every
// command emits a manifest of input/output content hashes; reruns with the
// same arguments produce byte-identical artifacts.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "iid/adaptation.hpp"
#include "iid/core.hpp"
#include "iid/dataset_io.hpp"
#include "iid/experiment.hpp"
#include "iid/features.hpp"
#include "iid/forest.hpp"
#include "iid/lstm.hpp"
#include "iid/metrics.hpp"
#include "iid/simulator.hpp"
#include "iid/version.hpp"

namespace {

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw iid::IoError("cannot hash " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[65536];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) {
    const std::streamsize n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!is) break;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Sorted key=value file next to the primary output. Inputs are hashed
// before the run, outputs after; no timestamps, so equal runs give equal
// manifests.
struct Manifest {
  std::map<std::string, std::string> kv;

  void set(const std::string& k, const std::string& v) { kv[k] = v; }
  void set_u64(const std::string& k, std::uint64_t v) {
    kv[k] = std::to_string(v);
  }
  void input(const std::string& path) {
    kv["input." + path] = hex64(fnv1a64_file(path));
  }
  void output(const std::string& path) {
    kv["output." + path] = hex64(fnv1a64_file(path));
  }
  void write(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw iid::IoError("cannot write manifest " + path);
    for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
  }
};

iid::FeatureSetKind parse_kind_arg(const std::string& s) {
  return iid::parse_feature_kind(s);
}

// The eval and adapt commands accept either model container; sniff the
// magic line.
bool is_forest_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw iid::IoError("cannot open " + path);
  std::string magic;
  std::getline(is, magic);
  if (magic == "IIDF1") return true;
  if (magic == "IIDM1") return false;
  throw iid::ParseError(1, "unknown model magic in " + path);
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void ensure_parent_dir(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

struct GazeModelArg {
  std::string path;
  std::optional<iid::ForestModel> model;

  const iid::ForestModel* load_if_given(Manifest& man) {
    if (path.empty()) return nullptr;
    man.input(path);
    model = iid::load_forest(path);
    if (model->feature_kind) {
      throw iid::ConfigError(path + " is an intent model, not a gaze model");
    }
    return &*model;
  }
};

int cmd_generate(const std::string& out, const std::string& envs_path,
                 std::uint64_t seed, bool gaze_grid) {
  Manifest man;
  man.set("command", "generate");
  man.set("version", iid::kVersion);
  man.set_u64("seed", seed);
  man.set("mode", gaze_grid ? "gaze-grid" : "scenario");
  iid::Dataset data;
  if (gaze_grid) {
    data = iid::gen_gaze_dataset(iid::GazeGridConfig{}, seed);
  } else {
    std::vector<iid::EnvConfig> envs;
    if (envs_path.empty()) {
      envs = iid::default_envs();
      man.set("envs", "default");
    } else {
      man.input(envs_path);
      envs = iid::parse_env_configs(envs_path);
    }
    data = iid::gen_dataset(envs, seed);
  }
  ensure_parent_dir(out);
  iid::write_dataset(data, out);
  man.output(out);
  man.write(out + ".manifest");
  std::cout << "wrote " << data.sequences.size() << " sequences ("
            << data.total_frames() << " frames) to " << out << "\n";
  return 0;
}

int cmd_train_gaze(const std::string& data_path, const std::string& out,
                   const iid::ForestHyperparams& hp) {
  Manifest man;
  man.set("command", "train-gaze");
  man.set("version", iid::kVersion);
  man.input(data_path);
  man.set_u64("seed", hp.seed);
  man.set_u64("n_trees", static_cast<std::uint64_t>(hp.n_trees));
  man.set_u64("max_depth", static_cast<std::uint64_t>(hp.max_depth));
  man.set_u64("min_leaf", static_cast<std::uint64_t>(hp.min_leaf));
  man.set_u64("features_per_split",
              static_cast<std::uint64_t>(hp.features_per_split));
  man.set("bootstrap", hp.bootstrap ? "1" : "0");

  const iid::Dataset data = iid::read_dataset(data_path);
  const auto samples = iid::collect_gaze_samples(data);
  if (samples.empty()) {
    throw iid::MissingLandmarks("no frames with landmarks and gaze labels");
  }
  const iid::ForestModel model = iid::train_mutual_gaze(samples, hp);
  ensure_parent_dir(out);
  iid::save_forest(model, out);
  man.output(out);
  man.write(out + ".manifest");
  std::cout << "trained gaze forest on " << samples.size() << " frames -> "
            << out << "\n";
  return 0;
}

int cmd_train_intent(const std::string& data_path, const std::string& kind_s,
                     const std::string& out, GazeModelArg& gaze,
                     const iid::TrainConfig& cfg, const std::string& log_path) {
  Manifest man;
  man.set("command", "train-intent");
  man.set("version", iid::kVersion);
  man.input(data_path);
  man.set("kind", kind_s);
  man.set_u64("seed", cfg.seed);
  man.set_u64("epochs", static_cast<std::uint64_t>(cfg.epochs));
  man.set_u64("patience", static_cast<std::uint64_t>(cfg.patience));
  man.set("learning_rate", iid::fmt_real(cfg.learning_rate));
  man.set("grad_clip", iid::fmt_real(cfg.grad_clip));
  man.set("weight_decay", iid::fmt_real(cfg.weight_decay));
  man.set("input_dropout", iid::fmt_real(cfg.input_dropout));
  man.set("positive_weight", iid::fmt_real(cfg.positive_weight));
  man.set_u64("hidden_dim", static_cast<std::uint64_t>(cfg.hidden_dim));

  const iid::FeatureSetKind kind = parse_kind_arg(kind_s);
  iid::Dataset data = iid::read_dataset(data_path);
  const iid::ForestModel* gm = gaze.load_if_given(man);
  if (gm && iid::needs_gaze_score(kind)) iid::ensure_gaze_scores(data, *gm);

  std::vector<iid::TrainLogRow> log;
  const iid::LstmModel model =
      iid::train_final_lstm(data, kind, cfg, gm, &log);
  ensure_parent_dir(out);
  iid::save_lstm(model, out);
  man.output(out);
  if (!log_path.empty()) {
    ensure_parent_dir(log_path);
    iid::write_csv_file(log_path,
                        [&](std::ostream& os) { iid::write_trainlog_csv(log, os); });
    man.output(log_path);
  }
  man.write(out + ".manifest");
  std::cout << "trained " << kind_s << " lstm: epochs=" << model.epochs_run
            << " best_val_auroc=" << model.best_val_auroc << " -> " << out
            << "\n";
  return 0;
}

int cmd_eval(const std::string& data_path, const std::string& model_path,
             GazeModelArg& gaze, const std::string& out_dir) {
  Manifest man;
  man.set("command", "eval");
  man.set("version", iid::kVersion);
  man.input(data_path);
  man.input(model_path);
  iid::Dataset data = iid::read_dataset(data_path);
  const iid::ForestModel* gm = gaze.load_if_given(man);
  std::filesystem::create_directories(out_dir);
  const std::string prefix = out_dir + "/";

  std::map<std::string, std::vector<double>> scores;
  std::string kind_s;
  if (is_forest_file(model_path)) {
    const iid::ForestModel model = iid::load_forest(model_path);
    if (!model.feature_kind) {
      // Gaze classifier: frame-level metrics on labeled faces only.
      std::vector<double> s;
      std::vector<char> l;
      for (const auto& seq : data.sequences) {
        for (const auto& f : seq.frames) {
          if (f.landmarks && f.gaze_gt) {
            s.push_back(iid::predict_proba(model, iid::gaze_input(f)));
            l.push_back(*f.gaze_gt ? 1 : 0);
          }
        }
      }
      if (s.empty()) throw iid::MissingLandmarks("no labeled faces to score");
      std::vector<iid::FrameMetricsRow> rows{
          {"all", "gaze", iid::auroc(s, l), iid::average_precision(s, l),
           iid::accuracy_at(s, l, 0.5)}};
      iid::write_csv_file(prefix + "frame_metrics.csv", [&](std::ostream& os) {
        iid::write_frame_metrics_csv(rows, os);
      });
      man.output(prefix + "frame_metrics.csv");
      man.write(prefix + "eval.manifest");
      std::cout << "gaze auroc=" << rows[0].auroc << "\n";
      return 0;
    }
    if (gm && iid::needs_gaze_score(*model.feature_kind)) {
      iid::ensure_gaze_scores(data, *gm);
    }
    scores = iid::score_sequences_forest(model, data, gm);
    kind_s = iid::to_string(*model.feature_kind);
  } else {
    const iid::LstmModel model = iid::load_lstm(model_path);
    if (gm && iid::needs_gaze_score(model.kind)) {
      iid::ensure_gaze_scores(data, *gm);
    }
    scores = iid::score_sequences_lstm(model, data, gm);
    kind_s = iid::to_string(model.kind);
  }

  std::vector<double> s;
  std::vector<char> l;
  std::vector<double> dist;
  for (const auto& seq : data.sequences) {
    const auto& probs = scores.at(seq.id);
    for (std::size_t i = 0; i < probs.size(); ++i) {
      s.push_back(probs[i]);
      l.push_back(seq.label ? 1 : 0);
      dist.push_back(iid::ground_distance(seq.frames[i].p_c));
    }
  }
  std::vector<iid::FrameMetricsRow> rows{{"all", kind_s, iid::auroc(s, l),
                                          iid::average_precision(s, l),
                                          iid::accuracy_at(s, l, 0.5)}};
  iid::write_csv_file(prefix + "frame_metrics.csv", [&](std::ostream& os) {
    iid::write_frame_metrics_csv(rows, os);
  });
  man.output(prefix + "frame_metrics.csv");

  const auto sweep = iid::sweep_thresholds(data, scores, iid::default_tau_grid());
  iid::write_csv_file(prefix + "threshold_sweep.csv", [&](std::ostream& os) {
    iid::write_threshold_sweep_csv(sweep, os);
  });
  man.output(prefix + "threshold_sweep.csv");

  const auto bins = iid::distance_quantile_auroc(s, l, dist, 5);
  iid::write_csv_file(prefix + "quantile_auroc.csv", [&](std::ostream& os) {
    iid::write_quantile_csv(bins, os);
  });
  man.output(prefix + "quantile_auroc.csv");

  const auto aligned = iid::align_sequences(data, scores);
  iid::write_csv_file(prefix + "aligned_series.csv", [&](std::ostream& os) {
    iid::write_aligned_csv(aligned, os);
  });
  man.output(prefix + "aligned_series.csv");

  man.write(prefix + "eval.manifest");
  std::cout << "frame auroc=" << rows[0].auroc << " ap=" << rows[0].ap
            << " accuracy=" << rows[0].accuracy << "\n";
  return 0;
}

int cmd_cv(const std::string& data_path, const std::string& kind_s,
           const std::string& classifier, int folds, std::uint64_t split_seed,
           GazeModelArg& gaze, const iid::TrainConfig& cfg,
           const iid::ForestHyperparams& hp, const std::string& out_dir) {
  Manifest man;
  man.set("command", "cv");
  man.set("version", iid::kVersion);
  man.input(data_path);
  man.set("kind", kind_s);
  man.set("classifier", classifier);
  man.set_u64("folds", static_cast<std::uint64_t>(folds));
  man.set_u64("split_seed", split_seed);
  man.set_u64("seed", cfg.seed);

  const iid::FeatureSetKind kind = parse_kind_arg(kind_s);
  iid::Dataset data = iid::read_dataset(data_path);
  const iid::ForestModel* gm = gaze.load_if_given(man);
  if (gm && iid::needs_gaze_score(kind)) iid::ensure_gaze_scores(data, *gm);

  const iid::CvResult r =
      iid::run_cv(data, kind, classifier, folds, split_seed, cfg, hp, gm);
  std::filesystem::create_directories(out_dir);
  const std::string metrics_path = out_dir + "/frame_metrics.csv";
  iid::write_csv_file(metrics_path, [&](std::ostream& os) {
    iid::write_frame_metrics_csv(iid::cv_frame_metrics(r), os);
  });
  man.output(metrics_path);
  man.write(out_dir + "/cv.manifest");
  std::cout << classifier << " " << kind_s
            << " pooled auroc=" << r.pooled_auroc << " ap=" << r.pooled_ap
            << " accuracy=" << r.pooled_accuracy << "\n";
  return 0;
}

int cmd_adapt(const std::string& data_path, const std::string& deploy,
              const std::string& pretrain_list, const std::string& kind_s,
              int replicas, int day_groups, std::uint64_t sched_seed,
              GazeModelArg& gaze, const iid::TrainConfig& cfg,
              const std::string& out) {
  Manifest man;
  man.set("command", "adapt");
  man.set("version", iid::kVersion);
  man.input(data_path);
  man.set("kind", kind_s);
  man.set("deploy", deploy);
  man.set("pretrain", pretrain_list);
  man.set_u64("replicas", static_cast<std::uint64_t>(replicas));
  man.set_u64("day_groups", static_cast<std::uint64_t>(day_groups));
  man.set_u64("schedule_seed", sched_seed);
  man.set_u64("seed", cfg.seed);

  const iid::FeatureSetKind kind = parse_kind_arg(kind_s);
  iid::Dataset data = iid::read_dataset(data_path);
  const iid::ForestModel* gm = gaze.load_if_given(man);
  if (gm && iid::needs_gaze_score(kind)) iid::ensure_gaze_scores(data, *gm);

  std::map<std::string, iid::Dataset> by_env;
  for (const iid::Sequence& s : data.sequences) {
    by_env[s.env].sequences.push_back(s);
  }
  iid::AdaptationSchedule schedule;
  schedule.pretrain_envs = split_csv_list(pretrain_list);
  schedule.deploy_env = deploy;
  schedule.replicas = replicas;
  schedule.day_groups = day_groups;
  schedule.seed = sched_seed;

  const auto results = iid::run_adaptation(schedule, by_env, kind, cfg, gm);
  ensure_parent_dir(out);
  iid::write_csv_file(out, [&](std::ostream& os) {
    iid::write_adaptation_csv(results, os);
  });
  man.output(out);
  man.write(out + ".manifest");
  const auto med = iid::median_by_day(results);
  std::cout << "median auroc by day:";
  for (double m : med) std::cout << ' ' << m;
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"intention-to-interact toolkit"};
  app.require_subcommand(1);

  // generate
  std::string g_out, g_envs;
  std::uint64_t g_seed = 0;
  bool g_gaze_grid = false;
  auto* gen = app.add_subcommand("generate", "generate a synthetic dataset");
  gen->add_option("--out", g_out, "output JSONL path")->required();
  gen->add_option("--envs", g_envs, "environment config file");
  gen->add_option("--seed", g_seed, "generation seed");
  gen->add_flag("--gaze-grid", g_gaze_grid,
                "stationary gaze calibration grid instead of scenarios");

  // write-envs
  std::string we_out;
  auto* wenv = app.add_subcommand("write-envs",
                                  "write the default environment config");
  wenv->add_option("--out", we_out, "output path")->required();

  // train-gaze
  std::string tg_data, tg_out;
  iid::ForestHyperparams tg_hp;
  bool tg_no_bootstrap = false;
  auto* tg = app.add_subcommand("train-gaze", "train the mutual-gaze forest");
  tg->add_option("--data", tg_data, "gaze dataset JSONL")->required();
  tg->add_option("--out", tg_out, "output model path")->required();
  tg->add_option("--trees", tg_hp.n_trees, "number of trees");
  tg->add_option("--max-depth", tg_hp.max_depth, "maximum depth");
  tg->add_option("--min-leaf", tg_hp.min_leaf, "minimum samples per leaf");
  tg->add_option("--features-per-split", tg_hp.features_per_split,
                 "features drawn per split (0 = ceil(sqrt(d)))");
  tg->add_flag("--no-bootstrap", tg_no_bootstrap, "disable bootstrap");
  tg->add_option("--seed", tg_hp.seed, "training seed");

  // train-intent
  std::string ti_data, ti_kind = "full", ti_out, ti_log;
  GazeModelArg ti_gaze;
  iid::TrainConfig ti_cfg;
  auto* ti = app.add_subcommand("train-intent", "train an intent LSTM");
  ti->add_option("--data", ti_data, "dataset JSONL")->required();
  ti->add_option("--kind", ti_kind, "feature set: c|ch|m|chm|full");
  ti->add_option("--out", ti_out, "output model path")->required();
  ti->add_option("--gaze-model", ti_gaze.path, "gaze forest for scores");
  ti->add_option("--lr", ti_cfg.learning_rate, "learning rate");
  ti->add_option("--epochs", ti_cfg.epochs, "max epochs");
  ti->add_option("--patience", ti_cfg.patience, "early stopping patience");
  ti->add_option("--clip", ti_cfg.grad_clip, "gradient norm clip");
  ti->add_option("--decay", ti_cfg.weight_decay, "weight decay");
  ti->add_option("--input-dropout", ti_cfg.input_dropout,
                 "per-sequence feature blanking probability");
  ti->add_option("--pos-weight", ti_cfg.positive_weight,
                 "positive class weight (0 = auto)");
  ti->add_option("--hidden", ti_cfg.hidden_dim, "hidden width (0 = default)");
  ti->add_option("--proj", ti_cfg.proj_dim,
                 "input projection width (-1 = default, 0 = none)");
  ti->add_option("--seed", ti_cfg.seed, "training seed");
  ti->add_option("--log", ti_log, "optional training log CSV");

  // eval
  std::string ev_data, ev_model, ev_out = "eval_out";
  GazeModelArg ev_gaze;
  auto* ev = app.add_subcommand("eval", "evaluate a model on a dataset");
  ev->add_option("--data", ev_data, "dataset JSONL")->required();
  ev->add_option("--model", ev_model, "model file (forest or lstm)")->required();
  ev->add_option("--gaze-model", ev_gaze.path, "gaze forest for scores");
  ev->add_option("--out-dir", ev_out, "output directory");

  // cv
  std::string cv_data, cv_kind = "full", cv_classifier = "lstm",
              cv_out = "cv_out";
  int cv_folds = 5;
  std::uint64_t cv_split_seed = 0;
  GazeModelArg cv_gaze;
  iid::TrainConfig cv_cfg;
  iid::ForestHyperparams cv_hp;
  auto* cv = app.add_subcommand("cv", "stratified k-fold cross-validation");
  cv->add_option("--data", cv_data, "dataset JSONL")->required();
  cv->add_option("--kind", cv_kind, "feature set: c|ch|m|chm|full");
  cv->add_option("--classifier", cv_classifier, "lstm or rf");
  cv->add_option("--folds", cv_folds, "fold count");
  cv->add_option("--split-seed", cv_split_seed, "fold assignment seed");
  cv->add_option("--gaze-model", cv_gaze.path, "gaze forest for scores");
  cv->add_option("--seed", cv_cfg.seed, "training seed");
  cv->add_option("--epochs", cv_cfg.epochs, "max epochs");
  cv->add_option("--patience", cv_cfg.patience, "early stopping patience");
  cv->add_option("--decay", cv_cfg.weight_decay, "weight decay");
  cv->add_option("--input-dropout", cv_cfg.input_dropout,
                 "per-sequence feature blanking probability");
  cv->add_option("--hidden", cv_cfg.hidden_dim, "hidden width (0 = default)");
  cv->add_option("--proj", cv_cfg.proj_dim,
                 "input projection width (-1 = default, 0 = none)");
  cv->add_option("--lr", cv_cfg.learning_rate, "learning rate");
  cv->add_option("--out-dir", cv_out, "output directory");

  // adapt
  std::string ad_data, ad_deploy = "kids", ad_pretrain = "lab,office",
              ad_kind = "chm", ad_out = "adaptation.csv";
  int ad_replicas = 10, ad_days = 4;
  std::uint64_t ad_seed = 0;
  GazeModelArg ad_gaze;
  iid::TrainConfig ad_cfg;
  auto* ad = app.add_subcommand("adapt", "self-supervised adaptation study");
  ad->add_option("--data", ad_data, "dataset JSONL (all envs)")->required();
  ad->add_option("--deploy", ad_deploy, "deployment env name");
  ad->add_option("--pretrain", ad_pretrain, "comma-separated pretrain envs");
  ad->add_option("--kind", ad_kind, "feature set: c|ch|m|chm|full");
  ad->add_option("--replicas", ad_replicas, "replica count");
  ad->add_option("--day-groups", ad_days, "number of day groups");
  ad->add_option("--schedule-seed", ad_seed, "replica split seed");
  ad->add_option("--gaze-model", ad_gaze.path, "gaze forest for scores");
  ad->add_option("--seed", ad_cfg.seed, "training seed");
  ad->add_option("--epochs", ad_cfg.epochs, "max epochs");
  ad->add_option("--patience", ad_cfg.patience, "early stopping patience");
  ad->add_option("--out", ad_out, "output CSV path");

  auto* ver = app.add_subcommand("version", "print the tool version");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(g_out, g_envs, g_seed, g_gaze_grid);
    if (wenv->parsed()) {
      ensure_parent_dir(we_out);
      std::ofstream os(we_out, std::ios::binary);
      if (!os) throw iid::IoError("cannot write " + we_out);
      iid::write_env_configs(iid::default_envs(), os);
      std::cout << "wrote default envs to " << we_out << "\n";
      return 0;
    }
    if (tg->parsed()) {
      tg_hp.bootstrap = !tg_no_bootstrap;
      return cmd_train_gaze(tg_data, tg_out, tg_hp);
    }
    if (ti->parsed()) {
      return cmd_train_intent(ti_data, ti_kind, ti_out, ti_gaze, ti_cfg, ti_log);
    }
    if (ev->parsed()) return cmd_eval(ev_data, ev_model, ev_gaze, ev_out);
    if (cv->parsed()) {
      return cmd_cv(cv_data, cv_kind, cv_classifier, cv_folds, cv_split_seed,
                    cv_gaze, cv_cfg, cv_hp, cv_out);
    }
    if (ad->parsed()) {
      return cmd_adapt(ad_data, ad_deploy, ad_pretrain, ad_kind, ad_replicas,
                       ad_days, ad_seed, ad_gaze, ad_cfg, ad_out);
    }
    if (ver->parsed()) {
      std::cout << iid::kVersion << "\n";
      return 0;
    }
  } catch (const iid::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
