// treedoa: data generation, training, evaluation and benchmark sweeps.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "treedoa/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace treedoa;

namespace {

constexpr const char* kOutputEnv = "TREEDOA_OUTPUT_DIR";

struct Overrides {
  std::string config_file;
  std::string profile;
  std::uint64_t seed = 0;
  int trials = 0;
  int snapshots = 0;
  int epochs = 0;
  std::size_t workers = 0;
  std::string output_dir;
  std::vector<std::string> methods;
  std::vector<double> snr_db;
  std::vector<int> q_values;
  double q_snr_db = 0.0;
  std::string theta_mode;
  double fixed_theta_deg = 0.0;
  bool timing = false;
};

struct Flags {
  CLI::Option* profile;
  CLI::Option* seed;
  CLI::Option* trials;
  CLI::Option* snapshots;
  CLI::Option* epochs;
  CLI::Option* workers;
  CLI::Option* output_dir;
  CLI::Option* methods;
  CLI::Option* snr;
  CLI::Option* q;
  CLI::Option* q_snr;
  CLI::Option* theta_mode;
  CLI::Option* fixed_theta;
};

std::string read_file_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Precedence: command-line flags, then the environment (output directory
// only), then the config file, then the profile defaults.
ExperimentConfig resolve_config(const Overrides& o, const Flags& f) {
  ExperimentConfig cfg;
  if (!o.config_file.empty()) {
    cfg = experiment_config_from_json(read_file_text(o.config_file));
    if (f.profile->count()) throw ConfigError("--profile cannot be combined with --config");
  } else {
    cfg = ExperimentConfig::for_profile(o.profile.empty() ? "desk" : o.profile);
  }
  if (const char* env = std::getenv(kOutputEnv); env && *env) cfg.output_dir = env;
  if (f.output_dir->count()) cfg.output_dir = o.output_dir;
  if (f.seed->count()) cfg.seed = o.seed;
  if (f.trials->count()) cfg.trials = o.trials;
  if (f.snapshots->count()) cfg.snapshots = o.snapshots;
  if (f.epochs->count()) cfg.training.node.epochs = o.epochs;
  if (f.workers->count()) cfg.workers = o.workers;
  if (f.methods->count()) cfg.methods = o.methods;
  if (f.snr->count()) cfg.snr_db = o.snr_db;
  if (f.q->count()) cfg.q_values = o.q_values;
  if (f.q_snr->count()) cfg.q_snr_db = o.q_snr_db;
  if (f.theta_mode->count()) cfg.theta_mode = o.theta_mode;
  if (f.fixed_theta->count()) cfg.fixed_theta_deg = o.fixed_theta_deg;
  if (o.timing) cfg.record_timing = true;
  cfg.validate();
  return cfg;
}

void print_plot(const std::vector<PlotPoint>& points, const char* x_name) {
  std::printf("%-12s %8s %8s %10s %10s %8s\n", "series", x_name, "n", "rmse", "ci95", "failed");
  for (const auto& p : points)
    std::printf("%-12s %8g %8zu %10.4f %10.4f %8zu\n", p.series.c_str(), p.x, p.count, p.rmse, 1.96 * p.rmse_stderr,
                p.failures);
}

std::string checkpoint_format(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  if (!fs::exists(manifest)) throw RuntimeError("no manifest.json in " + dir.string());
  try {
    return json::parse(read_file_text(manifest)).at("format").get<std::string>();
  } catch (const json::exception& e) {
    throw RuntimeError("unreadable manifest in " + dir.string() + ": " + e.what());
  }
}

FeatureSet training_data(const ExperimentConfig& cfg, const std::string& data_file, int sources) {
  if (!data_file.empty()) return load_feature_set(data_file);
  std::cerr << "building training features (Q=" << sources << ")\n";
  return sources == 1 ? build_single_source_set(cfg) : build_multi_source_set(cfg, sources);
}

void print_node_summary(const std::vector<NodeReport>& nodes) {
  for (const auto& n : nodes) {
    std::string prefix;
    for (int d : n.prefix) prefix += std::to_string(d) + ".";
    std::printf("  level %d node %-8s samples %6lld  acc %.4f  loss %.5f%s\n", n.level,
                prefix.empty() ? "root" : prefix.c_str(), static_cast<long long>(n.samples), n.train_accuracy,
                n.final_loss, n.borrowed ? "  (borrowed)" : "");
  }
}

json spec_json(const TreeSpec& s) {
  return {{"fanouts", s.fanouts},
          {"theta_min_deg", s.theta_min_deg},
          {"theta_max_deg", s.theta_max_deg},
          {"hidden_sizes", s.hidden_sizes},
          {"resolution_deg", s.resolution()},
          {"level_node_counts", level_node_counts(s)}};
}

json tree_summary(const TdnnModel& m) {
  const auto c = complexity_report(m.spec(), m.input_dim());
  std::size_t params = 0;
  for (int h = 0; h < m.spec().depth(); ++h)
    for (std::int64_t i = 0; i < m.spec().nodes_at_level(h); ++i) params += m.node(h, i).parameter_count();
  return {{"spec", spec_json(m.spec())},
          {"input_dim", m.input_dim()},
          {"feature_scaling", to_string(m.scaling())},
          {"model_classes", c.model_classes},
          {"flat_equivalent", c.flat_equivalent},
          {"node_count", c.node_count},
          {"macs_per_estimate", c.mac_count},
          {"parameters", params}};
}

json inspect(const fs::path& dir) {
  const std::string format = checkpoint_format(dir);
  json out{{"path", dir.string()}, {"format", format}};
  if (format == "treedoa-tdnn") {
    out.update(tree_summary(load_tree(dir)));
  } else if (format == "treedoa-qtdnn") {
    const auto m = load_qtdnn(dir);
    out["num_sources"] = m.num_sources();
    out["branch"] = tree_summary(m.branch(0));
  } else if (format == "treedoa-flat-dnn") {
    const auto m = load_flat_dnn(dir);
    out["classes"] = m.spec().classes;
    out["layers"] = m.network().spec().sizes;
    out["feature_scaling"] = to_string(m.scaling());
    out["parameters"] = m.network().parameter_count();
    out["macs_per_estimate"] = m.network().spec().mac_count();
  } else {
    throw RuntimeError("unknown checkpoint format '" + format + "'");
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Tree-structured DNN direction-of-arrival estimation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(library_version()));

  Overrides o;
  Flags f{};
  app.add_option("-c,--config", o.config_file, "JSON experiment config")->check(CLI::ExistingFile);
  f.profile = app.add_option("--profile", o.profile, "desk or full (when no config file)");
  f.seed = app.add_option("--seed", o.seed, "master seed");
  f.trials = app.add_option("--trials", o.trials, "Monte-Carlo trials per sweep point");
  f.snapshots = app.add_option("-T,--snapshots", o.snapshots, "snapshots per trial");
  f.epochs = app.add_option("--epochs", o.epochs, "training epochs per node");
  f.workers = app.add_option("-j,--workers", o.workers, "worker threads (0 = hardware)");
  f.output_dir = app.add_option("-o,--output-dir", o.output_dir, std::string("results directory (env ") + kOutputEnv + ")");
  f.methods = app.add_option("--methods", o.methods, "tdnn,dnn,root-music,crlb,oracle-tdnn")->delimiter(',');
  f.snr = app.add_option("--snr", o.snr_db, "SNR sweep in dB, comma separated")->delimiter(',');
  f.q = app.add_option("--q", o.q_values, "source-count sweep, comma separated")->delimiter(',');
  f.q_snr = app.add_option("--q-snr", o.q_snr_db, "SNR of the source-count sweep");
  f.theta_mode = app.add_option("--theta-mode", o.theta_mode, "random or fixed");
  f.fixed_theta = app.add_option("--fixed-theta", o.fixed_theta_deg, "DOA used in fixed mode (deg)");
  app.add_flag("--timing", o.timing, "record per-trial wall time (breaks byte-identical reruns)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "build and save a training feature set");
  int gen_sources = 1;
  std::string gen_out;
  gen->add_option("-Q,--sources", gen_sources, "sources per example")->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "output file (default <output-dir>/features_q<Q>.bin)");

  // train
  auto* train = app.add_subcommand("train", "train a model and write a checkpoint directory");
  std::string train_kind, train_data, train_out;
  int train_sources = 1;
  train->add_option("kind", train_kind, "tdnn, dnn or qtdnn")->required()->check(CLI::IsMember({"tdnn", "dnn", "qtdnn"}));
  train->add_option("--data", train_data, "feature set from gen-data")->check(CLI::ExistingFile);
  train->add_option("-Q,--sources", train_sources, "sources (qtdnn, dnn)")->check(CLI::PositiveNumber);
  train->add_option("--out", train_out, "checkpoint directory (default <output-dir>/models/<kind>)");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate saved checkpoints against the baselines");
  std::vector<std::string> eval_models;
  std::string eval_name = "eval";
  eval->add_option("-m,--model", eval_models, "checkpoint directory (repeatable)")->required();
  eval->add_option("--name", eval_name, "output file stem");

  // bench
  auto* bench = app.add_subcommand("bench", "train and run a full sweep");
  bench->require_subcommand(1);
  std::string bench_name, save_models;
  auto* bench_snr = bench->add_subcommand("snr", "RMSE versus SNR (single source)");
  auto* bench_q = bench->add_subcommand("q", "RMSE versus number of sources");
  auto* bench_classes = bench->add_subcommand("classes", "classifier accuracy versus output size");
  for (auto* sub : {bench_snr, bench_q, bench_classes}) sub->add_option("--name", bench_name, "output file stem");
  for (auto* sub : {bench_snr, bench_q}) sub->add_option("--save-models", save_models, "also write checkpoints here");

  // inspect
  auto* insp = app.add_subcommand("inspect", "describe saved artifacts");
  insp->require_subcommand(1);
  auto* insp_model = insp->add_subcommand("model", "print a checkpoint summary as JSON");
  std::string insp_dir;
  insp_model->add_option("dir", insp_dir, "checkpoint directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (insp_model->parsed()) {
    std::cout << inspect(insp_dir).dump(2) << "\n";
    return 0;
  }

  const ExperimentConfig cfg = resolve_config(o, f);
  const fs::path out_dir = cfg.output_dir;

  if (gen->parsed()) {
    const fs::path path = gen_out.empty() ? out_dir / ("features_q" + std::to_string(gen_sources) + ".bin") : fs::path(gen_out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const FeatureSet set = training_data(cfg, "", gen_sources);
    save_feature_set(set, path);
    std::cout << "wrote " << set.size() << " examples of dimension " << set.dim() << " to " << path.string() << "\n";
    return 0;
  }

  if (train->parsed()) {
    const fs::path dir = train_out.empty() ? out_dir / "models" / train_kind : fs::path(train_out);
    const int sources = train_kind == "tdnn" ? 1 : train_sources;
    if (train_kind == "tdnn" && train_sources != 1) throw ConfigError("train tdnn is single-source; use qtdnn");
    const FeatureSet set = training_data(cfg, train_data, sources);
    if (train_kind == "qtdnn") {
      TreeTrainConfig tc;
      tc.node = cfg.training.node;
      tc.workers = cfg.workers;
      auto fit = train_qtdnn(cfg.tree, sources, set, tc);
      for (std::size_t q = 0; q < fit.branch_nodes.size(); ++q) {
        std::cout << "branch " << q << "\n";
        print_node_summary(fit.branch_nodes[q]);
      }
      save_qtdnn(fit.model, dir);
    } else {
      ExperimentConfig one = cfg;
      one.methods = {train_kind};
      auto models = train_single_source_models(one, set);
      if (models.tdnn) {
        print_node_summary(models.tdnn_nodes);
        save_tree(*models.tdnn, dir);
      } else {
        std::printf("flat DNN training accuracy %.4f\n", models.dnn_train_accuracy);
        save_flat_dnn(*models.dnn, dir);
      }
    }
    std::cout << "checkpoint written to " << dir.string() << "\n";
    return 0;
  }

  if (eval->parsed()) {
    ExperimentConfig ec = cfg;
    std::vector<std::string> baselines;
    for (const auto& m : cfg.methods)
      if (m == "root-music" || m == "crlb" || m == "oracle-tdnn") baselines.push_back(m);
    SingleSourceModels single;
    MultiSourceModels multi;
    int q = 0;
    for (const auto& dir : eval_models) {
      const std::string format = checkpoint_format(dir);
      if (format == "treedoa-tdnn") single.tdnn = load_tree(dir);
      else if (format == "treedoa-flat-dnn") single.dnn = multi.dnn = load_flat_dnn(dir);
      else if (format == "treedoa-qtdnn") {
        multi.qtdnn = load_qtdnn(dir);
        q = multi.qtdnn->num_sources();
      } else throw RuntimeError("unknown checkpoint format '" + format + "' in " + dir);
    }
    const bool q_mode = multi.qtdnn.has_value();
    if (q_mode && single.tdnn) throw ConfigError("eval: mix of single-source tree and Q-TDNN checkpoints");
    const TreeSpec& spec = q_mode ? multi.qtdnn->spec() : (single.tdnn ? single.tdnn->spec() : single.dnn->spec().as_tree());
    ec.tree = spec;
    ec.tree.hidden_sizes = cfg.tree.hidden_sizes;
    if (spec.theta_min_deg != cfg.array.theta_min_deg || spec.theta_max_deg != cfg.array.theta_max_deg)
      throw ConfigError("eval: checkpoint domain differs from the array domain");
    ec.methods.clear();
    if (single.tdnn || multi.qtdnn) ec.methods.push_back("tdnn");
    if (single.dnn) ec.methods.push_back("dnn");
    ec.methods.insert(ec.methods.end(), baselines.begin(), baselines.end());
    ResultTable table;
    SweepAxis axis = SweepAxis::snr;
    if (q_mode) {
      if (single.dnn && single.dnn->spec().classes != spec.total_classes())
        throw ConfigError("eval: flat DNN grid does not match the Q-TDNN grid");
      ec.q_values = {q};
      table = run_rmse_vs_q(ec, {{q, multi}});
      axis = SweepAxis::num_sources;
    } else {
      table = run_rmse_vs_snr(ec, single);
    }
    write_experiment_outputs(out_dir, eval_name, ec, table, axis);
    print_plot(aggregate(table, axis), q_mode ? "Q" : "snr_db");
    return 0;
  }

  if (bench_snr->parsed()) {
    const std::string name = bench_name.empty() ? "rmse_vs_snr" : bench_name;
    SingleSourceModels models;
    if (std::count(cfg.methods.begin(), cfg.methods.end(), "tdnn") || std::count(cfg.methods.begin(), cfg.methods.end(), "dnn")) {
      const FeatureSet set = training_data(cfg, "", 1);
      std::cerr << "training on " << set.size() << " examples\n";
      models = train_single_source_models(cfg, set);
      if (!save_models.empty()) {
        if (models.tdnn) save_tree(*models.tdnn, fs::path(save_models) / "tdnn");
        if (models.dnn) save_flat_dnn(*models.dnn, fs::path(save_models) / "dnn");
      }
    }
    const ResultTable table = run_rmse_vs_snr(cfg, models);
    write_experiment_outputs(out_dir, name, cfg, table, SweepAxis::snr);
    print_plot(aggregate(table, SweepAxis::snr), "snr_db");
    return 0;
  }

  if (bench_q->parsed()) {
    const std::string name = bench_name.empty() ? "rmse_vs_q" : bench_name;
    std::map<int, MultiSourceModels> models;
    const bool learned = std::count(cfg.methods.begin(), cfg.methods.end(), "tdnn") ||
                         std::count(cfg.methods.begin(), cfg.methods.end(), "dnn");
    if (learned) {
      for (int q : cfg.q_values) {
        const FeatureSet set = training_data(cfg, "", q);
        std::cerr << "training Q=" << q << " on " << set.size() << " examples\n";
        models[q] = train_multi_source_models(cfg, q, set);
        if (!save_models.empty()) {
          const fs::path base = fs::path(save_models) / ("q" + std::to_string(q));
          if (models[q].qtdnn) save_qtdnn(*models[q].qtdnn, base / "qtdnn");
          if (models[q].dnn) save_flat_dnn(*models[q].dnn, base / "dnn");
        }
      }
    }
    const ResultTable table = run_rmse_vs_q(cfg, models);
    write_experiment_outputs(out_dir, name, cfg, table, SweepAxis::num_sources);
    print_plot(aggregate(table, SweepAxis::num_sources), "Q");
    return 0;
  }

  if (bench_classes->parsed()) {
    const std::string name = bench_name.empty() ? "accuracy_vs_classes" : bench_name;
    const auto rows = run_accuracy_vs_classes(cfg);
    fs::create_directories(out_dir);
    emit_accuracy(rows, out_dir / (name + ".csv"));
    json meta{{"experiment", name}, {"library_version", library_version()},
              {"config", json::parse(experiment_config_to_json(cfg))}};
    std::ofstream(out_dir / (name + ".config.json")) << meta.dump(2) << "\n";
    std::printf("%-10s %8s %6s %10s %10s\n", "series", "classes", "level", "train_acc", "val_acc");
    for (const auto& r : rows)
      if (r.level < 0) std::printf("%-10s %8d %6s %10.4f %10.4f\n", r.series.c_str(), r.classes, "-", r.train_accuracy, r.val_accuracy);
    std::cout << "per-node rows in " << (out_dir / (name + ".csv")).string() << "\n";
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
