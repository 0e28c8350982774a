#include "treedoa/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <set>

#include "byte_io.hpp"
#include "treedoa/baselines.hpp"
#include "treedoa/parallel.hpp"
#include "treedoa/rng.hpp"

namespace treedoa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kKnownMethods = {"tdnn", "dnn", "root-music", "crlb", "oracle-tdnn"};

bool wants(const ExperimentConfig& cfg, const std::string& method) {
  return std::find(cfg.methods.begin(), cfg.methods.end(), method) != cfg.methods.end();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (profile != "desk" && profile != "full") throw ConfigError("profile must be 'desk' or 'full'");
  array.validate();
  tree.validate();
  if (tree.theta_min_deg != array.theta_min_deg || tree.theta_max_deg != array.theta_max_deg)
    throw ConfigError("tree and array must share one angular domain");
  if (methods.empty()) throw ConfigError("method list is empty");
  for (const auto& m : methods)
    if (!kKnownMethods.count(m)) throw ConfigError("unknown method: " + m);
  if (snr_db.empty()) throw ConfigError("SNR sweep is empty");
  if (q_values.empty()) throw ConfigError("Q sweep is empty");
  for (int q : q_values)
    if (q < 1 || q >= array.num_elements) throw ConfigError("Q values must lie in [1, M-1]");
  if (class_sweep.empty()) throw ConfigError("class sweep is empty");
  for (int k : class_sweep)
    if (k < 2) throw ConfigError("class sweep sizes must be at least 2");
  if (snapshots < 1) throw ConfigError("snapshot count must be positive");
  if (trials < 1) throw ConfigError("trials must be at least 1");
  if (theta_mode != "random" && theta_mode != "fixed") throw ConfigError("theta_mode must be 'random' or 'fixed'");
  if (theta_mode == "fixed" && !array.in_domain(fixed_theta_deg)) throw ConfigError("fixed theta outside the domain");
  if (training.offsets_per_cell < 0) throw ConfigError("offsets_per_cell must be non-negative");
  if (training.augment_realizations < 1 || training.augment_snapshots < 1)
    throw ConfigError("augmentation realizations and snapshots must be positive");
  if (training.tuples_per_cell < 1) throw ConfigError("tuples_per_cell must be positive");
  if (training.min_separation_deg < 0.0 || eval_min_separation_deg < 0.0)
    throw ConfigError("separations must be non-negative");
  if (!training.multi_include_clean && training.multi_snr_db.empty())
    throw ConfigError("multi-source training needs clean features or at least one SNR");
  training.node.validate();
}

double ExperimentConfig::min_separation() const {
  return training.min_separation_deg > 0.0 ? training.min_separation_deg : 2.0 * tree.resolution();
}

double ExperimentConfig::eval_min_separation() const {
  return eval_min_separation_deg > 0.0 ? eval_min_separation_deg : min_separation();
}

ExperimentConfig ExperimentConfig::desk() {
  ExperimentConfig c;
  c.training.node.epochs = 60;
  return c;
}

ExperimentConfig ExperimentConfig::full() {
  ExperimentConfig c = desk();
  c.profile = "full";
  c.array.num_elements = 64;
  c.tree.hidden_sizes = {512, 256, 128, 64, 32, 16};
  c.trials = 2000;
  return c;
}

ExperimentConfig ExperimentConfig::for_profile(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "full") return full();
  throw ConfigError("unknown profile: " + name);
}

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError("unknown config key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

const char* optimizer_name(nn::OptimizerKind k) { return k == nn::OptimizerKind::adam ? "adam" : "sgd"; }
const char* loss_name(nn::LossKind k) { return k == nn::LossKind::bce ? "bce" : "categorical_ce"; }

}  // namespace

ExperimentConfig experiment_config_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
    reject_unknown_keys(j,
                        {"profile", "array", "tree", "methods", "snr_db", "snapshots", "q_values", "q_snr_db", "trials",
                         "seed", "theta_mode", "fixed_theta_deg", "eval_min_separation_deg", "class_sweep",
                         "class_val_snr_db", "training", "record_timing", "workers", "output_dir", "library_version"},
                        "config");
    ExperimentConfig c = ExperimentConfig::for_profile(j.value("profile", std::string("desk")));
    if (j.contains("array")) {
      const auto& a = j.at("array");
      reject_unknown_keys(a, {"num_elements", "spacing_wavelengths", "theta_min_deg", "theta_max_deg"}, "array");
      read(a, "num_elements", c.array.num_elements);
      read(a, "spacing_wavelengths", c.array.spacing_wavelengths);
      read(a, "theta_min_deg", c.array.theta_min_deg);
      read(a, "theta_max_deg", c.array.theta_max_deg);
    }
    c.tree.theta_min_deg = c.array.theta_min_deg;
    c.tree.theta_max_deg = c.array.theta_max_deg;
    if (j.contains("tree")) {
      const auto& t = j.at("tree");
      reject_unknown_keys(t, {"fanouts", "hidden_sizes"}, "tree");
      read(t, "fanouts", c.tree.fanouts);
      read(t, "hidden_sizes", c.tree.hidden_sizes);
    }
    read(j, "methods", c.methods);
    read(j, "snr_db", c.snr_db);
    read(j, "snapshots", c.snapshots);
    read(j, "q_values", c.q_values);
    read(j, "q_snr_db", c.q_snr_db);
    read(j, "trials", c.trials);
    read(j, "seed", c.seed);
    read(j, "theta_mode", c.theta_mode);
    read(j, "fixed_theta_deg", c.fixed_theta_deg);
    read(j, "eval_min_separation_deg", c.eval_min_separation_deg);
    read(j, "class_sweep", c.class_sweep);
    read(j, "class_val_snr_db", c.class_val_snr_db);
    read(j, "record_timing", c.record_timing);
    read(j, "workers", c.workers);
    read(j, "output_dir", c.output_dir);
    if (j.contains("training")) {
      const auto& t = j.at("training");
      reject_unknown_keys(t,
                          {"offsets_per_cell", "augment_snr_db", "augment_realizations", "augment_snapshots",
                           "feature_scaling", "tuples_per_cell", "min_separation_deg", "multi_snr_db",
                           "multi_include_clean", "optimizer", "learning_rate", "batch_size", "epochs", "adam_beta1",
                           "adam_beta2", "adam_epsilon", "loss", "init_scheme", "seed"},
                          "training");
      auto& tr = c.training;
      read(t, "offsets_per_cell", tr.offsets_per_cell);
      read(t, "augment_snr_db", tr.augment_snr_db);
      read(t, "augment_realizations", tr.augment_realizations);
      read(t, "augment_snapshots", tr.augment_snapshots);
      if (t.contains("feature_scaling")) tr.scaling = feature_scaling_from_string(t.at("feature_scaling").get<std::string>());
      read(t, "tuples_per_cell", tr.tuples_per_cell);
      read(t, "min_separation_deg", tr.min_separation_deg);
      read(t, "multi_snr_db", tr.multi_snr_db);
      read(t, "multi_include_clean", tr.multi_include_clean);
      if (t.contains("optimizer")) {
        const auto name = t.at("optimizer").get<std::string>();
        if (name == "adam") tr.node.optimizer = nn::OptimizerKind::adam;
        else if (name == "sgd") tr.node.optimizer = nn::OptimizerKind::sgd;
        else throw ConfigError("unknown optimizer: " + name);
      }
      if (t.contains("loss")) {
        const auto name = t.at("loss").get<std::string>();
        if (name == "bce") tr.node.loss = nn::LossKind::bce;
        else if (name == "categorical_ce") tr.node.loss = nn::LossKind::categorical_ce;
        else throw ConfigError("unknown loss: " + name);
      }
      read(t, "learning_rate", tr.node.learning_rate);
      read(t, "batch_size", tr.node.batch_size);
      read(t, "epochs", tr.node.epochs);
      read(t, "adam_beta1", tr.node.adam_beta1);
      read(t, "adam_beta2", tr.node.adam_beta2);
      read(t, "adam_epsilon", tr.node.adam_epsilon);
      read(t, "init_scheme", tr.node.init_scheme);
      read(t, "seed", tr.node.seed);
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid experiment config: ") + e.what());
  }
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  json j;
  j["profile"] = c.profile;
  j["array"] = {{"num_elements", c.array.num_elements},
                {"spacing_wavelengths", c.array.spacing_wavelengths},
                {"theta_min_deg", c.array.theta_min_deg},
                {"theta_max_deg", c.array.theta_max_deg}};
  j["tree"] = {{"fanouts", c.tree.fanouts}, {"hidden_sizes", c.tree.hidden_sizes}};
  j["methods"] = c.methods;
  j["snr_db"] = c.snr_db;
  j["snapshots"] = c.snapshots;
  j["q_values"] = c.q_values;
  j["q_snr_db"] = c.q_snr_db;
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  j["theta_mode"] = c.theta_mode;
  j["fixed_theta_deg"] = c.fixed_theta_deg;
  j["eval_min_separation_deg"] = c.eval_min_separation_deg;
  j["class_sweep"] = c.class_sweep;
  j["class_val_snr_db"] = c.class_val_snr_db;
  const auto& t = c.training;
  j["training"] = {{"offsets_per_cell", t.offsets_per_cell},
                   {"augment_snr_db", t.augment_snr_db},
                   {"augment_realizations", t.augment_realizations},
                   {"augment_snapshots", t.augment_snapshots},
                   {"feature_scaling", to_string(t.scaling)},
                   {"tuples_per_cell", t.tuples_per_cell},
                   {"min_separation_deg", t.min_separation_deg},
                   {"multi_snr_db", t.multi_snr_db},
                   {"multi_include_clean", t.multi_include_clean},
                   {"optimizer", optimizer_name(t.node.optimizer)},
                   {"learning_rate", t.node.learning_rate},
                   {"batch_size", t.node.batch_size},
                   {"epochs", t.node.epochs},
                   {"adam_beta1", t.node.adam_beta1},
                   {"adam_beta2", t.node.adam_beta2},
                   {"adam_epsilon", t.node.adam_epsilon},
                   {"loss", loss_name(t.node.loss)},
                   {"init_scheme", t.node.init_scheme},
                   {"seed", t.node.seed}};
  j["record_timing"] = c.record_timing;
  j["workers"] = c.workers;
  j["output_dir"] = c.output_dir;
  return j.dump(2);
}

FeatureSet build_single_source_set(const ExperimentConfig& cfg) {
  GridOptions g;
  g.offsets_per_cell = cfg.training.offsets_per_cell;
  g.augment_snr_db = cfg.training.augment_snr_db;
  g.augment_realizations = cfg.training.augment_realizations;
  g.augment_snapshots = cfg.training.augment_snapshots;
  g.scaling = cfg.training.scaling;
  g.seed = derive_seed(cfg.seed, 0x6e1du);
  g.workers = cfg.workers;
  return build_training_grid(cfg.array, cfg.tree, g);
}

FeatureSet build_multi_source_set(const ExperimentConfig& cfg, int num_sources) {
  TupleSampling ts;
  ts.count = static_cast<std::size_t>(cfg.training.tuples_per_cell) * static_cast<std::size_t>(cfg.tree.total_classes());
  ts.min_separation_deg = cfg.min_separation();
  ts.seed = derive_seed(cfg.seed, {0x7a11u, static_cast<std::uint64_t>(num_sources)});
  const auto tuples = sample_source_tuples(cfg.tree, num_sources, ts);

  FeatureSet set;
  MultiFeatureOptions opt;
  opt.scaling = cfg.training.scaling;
  opt.workers = cfg.workers;
  opt.snapshots = cfg.training.augment_snapshots;
  if (cfg.training.multi_include_clean) set = build_multi_training_set(cfg.array, cfg.tree, tuples, ts.min_separation_deg, opt);
  if (!cfg.training.multi_snr_db.empty()) {
    opt.snr_db = cfg.training.multi_snr_db;
    opt.seed = derive_seed(cfg.seed, {0x7a12u, static_cast<std::uint64_t>(num_sources)});
    set.append(build_multi_training_set(cfg.array, cfg.tree, tuples, ts.min_separation_deg, opt));
  }
  return set;
}

SingleSourceModels train_single_source_models(const ExperimentConfig& cfg, const FeatureSet& set) {
  cfg.validate();
  SingleSourceModels m;
  if (wants(cfg, "tdnn")) {
    TreeTrainConfig tc;
    tc.node = cfg.training.node;
    tc.workers = cfg.workers;
    auto fit = train_tree(cfg.tree, set, tc);
    m.tdnn = std::move(fit.model);
    m.tdnn_nodes = std::move(fit.nodes);
  }
  if (wants(cfg, "dnn")) {
    nn::TrainConfig fc = cfg.training.node;
    fc.seed = derive_seed(cfg.training.node.seed, 0xf1a7u);
    auto fit = train_flat_dnn(FlatDnnSpec::matching(cfg.tree), set, fc);
    m.dnn = std::move(fit.model);
    m.dnn_train_accuracy = fit.train_accuracy;
  }
  return m;
}

MultiSourceModels train_multi_source_models(const ExperimentConfig& cfg, int num_sources, const FeatureSet& set) {
  cfg.validate();
  MultiSourceModels m;
  if (wants(cfg, "tdnn")) {
    TreeTrainConfig tc;
    tc.node = cfg.training.node;
    tc.node.seed = derive_seed(cfg.training.node.seed, {0x9u, static_cast<std::uint64_t>(num_sources)});
    tc.workers = cfg.workers;
    m.qtdnn = train_qtdnn(cfg.tree, num_sources, set, tc).model;
  }
  if (wants(cfg, "dnn")) {
    nn::TrainConfig fc = cfg.training.node;
    fc.seed = derive_seed(cfg.training.node.seed, {0xf1a7u, static_cast<std::uint64_t>(num_sources)});
    m.dnn = train_flat_dnn(FlatDnnSpec::matching(cfg.tree), set, fc).model;
  }
  return m;
}

namespace {

using Clock = std::chrono::steady_clock;

// Runs one estimator for one trial, turning exceptions into a failed row.
template <typename Estimator>
TrialResult run_method(const ExperimentConfig& cfg, const std::string& method, double snr, int q, int trial,
                       std::uint64_t seed, const std::vector<double>& truth, Estimator&& estimate) {
  TrialResult row;
  row.method = method;
  row.snr_db = snr;
  row.snapshots = cfg.snapshots;
  row.num_sources = q;
  row.trial = trial;
  row.seed = seed;
  row.truth = truth;
  const auto start = Clock::now();
  try {
    row.estimate = estimate();
    if (row.estimate.size() != truth.size()) throw RuntimeError("estimator returned the wrong number of angles");
  } catch (const std::exception&) {
    row.estimate.assign(truth.size(), std::numeric_limits<double>::quiet_NaN());
  }
  if (cfg.record_timing) row.ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  compute_errors(row);
  return row;
}

std::vector<double> crlb_offsets(const ExperimentConfig& cfg, const SourceSet& src) {
  const Eigen::MatrixXd bound = crlb_stochastic(cfg.array, src, cfg.snapshots);
  std::vector<double> est;
  for (std::size_t q = 0; q < src.size(); ++q)
    est.push_back(src.doas_deg[q] + std::sqrt(bound(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q))));
  return est;
}

}  // namespace

ResultTable run_rmse_vs_snr(const ExperimentConfig& cfg, const SingleSourceModels& models) {
  cfg.validate();
  if (wants(cfg, "tdnn") && !models.tdnn) throw ConfigError("run_rmse_vs_snr: tdnn requested but not trained");
  if (wants(cfg, "dnn") && !models.dnn) throw ConfigError("run_rmse_vs_snr: dnn requested but not trained");
  const auto trials = static_cast<std::size_t>(cfg.trials);
  ResultTable table;
  for (std::size_t s = 0; s < cfg.snr_db.size(); ++s) {
    const double snr = cfg.snr_db[s];
    std::vector<ResultTable> per_trial(trials);
    parallel_for(trials, [&](std::size_t i) {
      const std::uint64_t seed = derive_seed(cfg.seed, {0x5a1u, s, i});
      const double theta = cfg.theta_mode == "fixed"
                               ? cfg.fixed_theta_deg
                               : RngStream(derive_seed(seed, 1)).uniform(cfg.array.theta_min_deg, cfg.array.theta_max_deg);
      const SourceSet src = SourceSet::equal_power({theta}, snr);
      const CovarianceMatrix r = sample_covariance(synth_snapshots(cfg.array, src, cfg.snapshots, derive_seed(seed, 2)));
      const Eigen::VectorXd features = extract_features(r);
      const std::vector<double> truth{theta};
      const int t = static_cast<int>(i);
      for (const auto& method : cfg.methods) {
        std::function<std::vector<double>()> fn;
        if (method == "tdnn") fn = [&] { return std::vector<double>{models.tdnn->route_predict(features).theta_deg}; };
        else if (method == "dnn") fn = [&] { return models.dnn->predict(features, 1); };
        else if (method == "root-music") fn = [&] { return root_music(r, 1, cfg.array).doas_deg; };
        else if (method == "crlb") fn = [&] { return crlb_offsets(cfg, src); };
        else if (method == "oracle-tdnn") fn = [&] { return std::vector<double>{labels_to_doa(cfg.tree, doa_to_labels(cfg.tree, theta))}; };
        per_trial[i].push_back(run_method(cfg, method, snr, 1, t, seed, truth, fn));
      }
    }, cfg.workers);
    for (auto& rows : per_trial) table.insert(table.end(), rows.begin(), rows.end());
  }
  return table;
}

ResultTable run_rmse_vs_q(const ExperimentConfig& cfg, const std::map<int, MultiSourceModels>& models) {
  cfg.validate();
  const auto trials = static_cast<std::size_t>(cfg.trials);
  const double sep = cfg.eval_min_separation();
  ResultTable table;
  for (std::size_t qi = 0; qi < cfg.q_values.size(); ++qi) {
    const int q = cfg.q_values[qi];
    const MultiSourceModels* m = nullptr;
    if (auto it = models.find(q); it != models.end()) m = &it->second;
    if (wants(cfg, "tdnn") && !(m && m->qtdnn)) throw ConfigError("run_rmse_vs_q: no Q-TDNN for Q=" + std::to_string(q));
    if (wants(cfg, "dnn") && !(m && m->dnn)) throw ConfigError("run_rmse_vs_q: no flat DNN for Q=" + std::to_string(q));
    std::vector<ResultTable> per_trial(trials);
    parallel_for(trials, [&](std::size_t i) {
      const std::uint64_t seed = derive_seed(cfg.seed, {0x9a1u, static_cast<std::uint64_t>(q), i});
      const std::vector<double> truth = random_separated_tuple(cfg.tree, q, sep, derive_seed(seed, 1));
      const SourceSet src = SourceSet::equal_power(truth, cfg.q_snr_db);
      const CovarianceMatrix r = sample_covariance(synth_snapshots(cfg.array, src, cfg.snapshots, derive_seed(seed, 2)));
      const Eigen::VectorXd features = extract_features(r);
      const int t = static_cast<int>(i);
      for (const auto& method : cfg.methods) {
        std::function<std::vector<double>()> fn;
        std::string label = method;
        if (method == "tdnn") {
          label = "qtdnn";
          fn = [&] { return m->qtdnn->predict_multi(features); };
        } else if (method == "dnn") {
          fn = [&] { return m->dnn->predict(features, q); };
        } else if (method == "root-music") {
          fn = [&] { return root_music(r, q, cfg.array).doas_deg; };
        } else if (method == "crlb") {
          fn = [&] { return crlb_offsets(cfg, src); };
        } else if (method == "oracle-tdnn") {
          fn = [&] {
            std::vector<double> est;
            for (double th : truth) est.push_back(labels_to_doa(cfg.tree, doa_to_labels(cfg.tree, th)));
            return est;
          };
        }
        per_trial[i].push_back(run_method(cfg, label, cfg.q_snr_db, q, t, seed, truth, fn));
      }
    }, cfg.workers);
    for (auto& rows : per_trial) table.insert(table.end(), rows.begin(), rows.end());
  }
  return table;
}

namespace {

std::string tree_series_name(const TreeSpec& t) {
  std::string s = "tree-";
  for (std::size_t i = 0; i < t.fanouts.size(); ++i) s += (i ? "x" : "") + std::to_string(t.fanouts[i]);
  return s;
}

}  // namespace

std::vector<AccuracyRow> run_accuracy_vs_classes(const ExperimentConfig& cfg) {
  cfg.validate();
  const FeatureSet train_set = build_single_source_set(cfg);

  // Validation: fresh off-grid angles through the sample covariance.
  FeatureSet val;
  val.scaling = cfg.training.scaling;
  val.features.resize(cfg.array.feature_dim(), cfg.trials);
  val.doas.resize(static_cast<std::size_t>(cfg.trials));
  parallel_for(static_cast<std::size_t>(cfg.trials), [&](std::size_t i) {
    const std::uint64_t seed = derive_seed(cfg.seed, {0xacc1u, i});
    const double theta = RngStream(derive_seed(seed, 1)).uniform(cfg.array.theta_min_deg, cfg.array.theta_max_deg);
    Eigen::VectorXd f =
        sample_features(cfg.array, SourceSet::equal_power({theta}, cfg.class_val_snr_db), cfg.snapshots, derive_seed(seed, 2));
    apply_scaling(val.scaling, f);
    val.features.col(static_cast<Eigen::Index>(i)) = f;
    val.doas[i] = {theta};
  }, cfg.workers);

  std::vector<AccuracyRow> rows;
  for (int k : cfg.class_sweep) {
    FlatDnnSpec spec;
    spec.classes = k;
    spec.theta_min_deg = cfg.tree.theta_min_deg;
    spec.theta_max_deg = cfg.tree.theta_max_deg;
    spec.hidden_sizes = cfg.tree.hidden_sizes;
    nn::TrainConfig tc = cfg.training.node;
    tc.seed = derive_seed(cfg.training.node.seed, {0xc1a5u, static_cast<std::uint64_t>(k)});
    const auto fit = train_flat_dnn(spec, train_set, tc);
    AccuracyRow row;
    row.series = "flat";
    row.classes = k;
    row.train_samples = train_set.size();
    row.val_samples = val.size();
    row.train_accuracy = fit.train_accuracy;
    row.val_accuracy = nn::accuracy(fit.model.network(), flat_dataset(spec, val));
    row.seed = tc.seed;
    rows.push_back(row);
  }

  std::vector<TreeSpec> trees;
  TreeSpec two_level = cfg.tree;
  two_level.fanouts = {12, 10};
  trees.push_back(two_level);
  if (!(cfg.tree.fanouts == two_level.fanouts)) trees.push_back(cfg.tree);
  for (const auto& spec : trees) {
    TreeTrainConfig tc;
    tc.node = cfg.training.node;
    tc.node.seed = derive_seed(cfg.training.node.seed, {0x7ee5u, static_cast<std::uint64_t>(spec.depth())});
    tc.empty_nodes = EmptyNodePolicy::borrow_parent;
    tc.workers = cfg.workers;
    const auto fit = train_tree(spec, train_set, tc);
    for (const auto& node : fit.nodes) {
      AccuracyRow row;
      row.series = tree_series_name(spec);
      row.classes = spec.fanout(node.level);
      row.level = node.level;
      row.node = node_index(spec, node.prefix);
      row.train_samples = node.samples;
      row.train_accuracy = node.train_accuracy;
      row.seed = tc.node.seed;
      try {
        const auto vset = build_node_training_set(spec, node.level, node.prefix, val);
        row.val_samples = vset.data.size();
        row.val_accuracy = nn::accuracy(fit.model.node(node.level, row.node), vset.data);
      } catch (const EmptyNodeError&) {
        row.val_accuracy = std::numeric_limits<double>::quiet_NaN();
      }
      rows.push_back(row);
    }
  }
  return rows;
}

void write_experiment_outputs(const fs::path& dir, const std::string& name, const ExperimentConfig& cfg,
                              const ResultTable& table, SweepAxis axis) {
  fs::create_directories(dir);
  emit_results(table, dir / (name + ".csv"));
  emit_plot_data(aggregate(table, axis), dir / (name + ".plot.csv"));
  json meta;
  meta["experiment"] = name;
  meta["library_version"] = library_version();
  meta["config"] = json::parse(experiment_config_to_json(cfg));
  detail::write_text(dir / (name + ".config.json"), meta.dump(2) + "\n");
}

namespace {
constexpr std::string_view kFeatureMagic("TDFSET\0\0", 8);
constexpr std::uint32_t kFeatureFormatVersion = 1;
}  // namespace

void save_feature_set(const FeatureSet& set, const fs::path& path) {
  detail::ByteWriter w;
  w.raw(kFeatureMagic);
  w.u32(kFeatureFormatVersion);
  w.u32(set.scaling == FeatureScaling::unit_norm ? 1u : 0u);
  w.u64(static_cast<std::uint64_t>(set.dim()));
  w.u64(static_cast<std::uint64_t>(set.size()));
  for (Eigen::Index c = 0; c < set.size(); ++c) {
    const auto& d = set.doas[static_cast<std::size_t>(c)];
    w.u32(static_cast<std::uint32_t>(d.size()));
    for (double v : d) w.f64(v);
    for (Eigen::Index r = 0; r < set.dim(); ++r) w.f64(set.features(r, c));
  }
  auto& bytes = w.bytes();
  w.u64(detail::fnv1a64(bytes.data(), bytes.size()));
  detail::write_file(path, bytes);
}

FeatureSet load_feature_set(const fs::path& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes, "feature set " + path.string());
  if (r.raw(kFeatureMagic.size()) != kFeatureMagic) throw RuntimeError("feature set: bad magic");
  if (r.u32() != kFeatureFormatVersion) throw RuntimeError("feature set: unsupported version");
  FeatureSet set;
  set.scaling = r.u32() == 1u ? FeatureScaling::unit_norm : FeatureScaling::none;
  const std::uint64_t dim = r.u64();
  const std::uint64_t n = r.u64();
  if (dim > (1u << 24) || n * dim * 8 > bytes.size()) throw RuntimeError("feature set: implausible dimensions");
  set.features.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(n));
  set.doas.resize(n);
  for (std::uint64_t c = 0; c < n; ++c) {
    const std::uint32_t q = r.u32();
    if (q > 1024) throw RuntimeError("feature set: implausible source count");
    for (std::uint32_t i = 0; i < q; ++i) set.doas[c].push_back(r.f64());
    for (std::uint64_t d = 0; d < dim; ++d) set.features(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(c)) = r.f64();
  }
  const std::size_t payload = r.position();
  if (r.u64() != detail::fnv1a64(bytes.data(), payload)) throw RuntimeError("feature set: checksum mismatch");
  return set;
}

}  // namespace treedoa
