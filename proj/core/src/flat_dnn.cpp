#include "treedoa/flat_dnn.hpp"

#include <algorithm>
#include <json.hpp>
#include <numeric>

#include "byte_io.hpp"
#include "treedoa/rng.hpp"

namespace treedoa {

namespace fs = std::filesystem;
using nlohmann::json;

void FlatDnnSpec::validate() const { as_tree().validate(); }

TreeSpec FlatDnnSpec::as_tree() const {
  TreeSpec t;
  t.fanouts = {classes};
  t.theta_min_deg = theta_min_deg;
  t.theta_max_deg = theta_max_deg;
  t.hidden_sizes = hidden_sizes;
  return t;
}

FlatDnnSpec FlatDnnSpec::matching(const TreeSpec& tree) {
  tree.validate();
  FlatDnnSpec s;
  s.classes = static_cast<int>(tree.total_classes());
  s.theta_min_deg = tree.theta_min_deg;
  s.theta_max_deg = tree.theta_max_deg;
  s.hidden_sizes = tree.hidden_sizes;
  return s;
}

nn::Dataset flat_dataset(const FlatDnnSpec& spec, const FeatureSet& set) {
  const TreeSpec grid = spec.as_tree();
  grid.validate();
  nn::Dataset d;
  d.inputs = set.features;
  d.targets = Eigen::MatrixXd::Zero(spec.classes, set.size());
  for (Eigen::Index c = 0; c < set.size(); ++c)
    for (double theta : set.doas[static_cast<std::size_t>(c)]) d.targets(leaf_index(grid, theta), c) = 1.0;
  return d;
}

FlatDnnModel::FlatDnnModel(FlatDnnSpec spec, nn::Mlnn net, FeatureScaling scaling)
    : spec_(std::move(spec)), net_(std::move(net)), scaling_(scaling) {
  spec_.validate();
  if (net_.output_size() != spec_.classes) throw ConfigError("flat network output size must equal the class count");
}

std::vector<int> FlatDnnModel::top_classes(const Eigen::VectorXd& features, int num_sources) const {
  if (num_sources < 1 || num_sources > spec_.classes) throw ConfigError("num_sources out of range");
  if (features.size() != net_.input_size()) throw ConfigError("feature dimension does not match the flat network");
  Eigen::VectorXd x = features;
  apply_scaling(scaling_, x);
  const Eigen::VectorXd p = net_.forward(x);
  std::vector<int> idx(static_cast<std::size_t>(p.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return p(a) > p(b); });
  idx.resize(static_cast<std::size_t>(num_sources));
  return idx;
}

std::vector<double> FlatDnnModel::predict(const Eigen::VectorXd& features, int num_sources) const {
  const TreeSpec grid = spec_.as_tree();
  std::vector<double> out;
  for (int k : top_classes(features, num_sources)) out.push_back(labels_to_doa(grid, std::vector<int>{k}));
  std::sort(out.begin(), out.end());
  return out;
}

FlatDnnTrainResult train_flat_dnn(const FlatDnnSpec& spec, const FeatureSet& set, const nn::TrainConfig& cfg) {
  spec.validate();
  const nn::Dataset data = flat_dataset(spec, set);
  nn::LayerSpec layers = spec.as_tree().node_layers(0, static_cast<int>(set.dim()));
  auto fit = nn::train(nn::Mlnn::initialized(std::move(layers), derive_seed(cfg.seed, 0x1a1u)), data, cfg);
  FlatDnnTrainResult r;
  r.model = FlatDnnModel(spec, std::move(fit.model), set.scaling);
  r.loss_history = std::move(fit.loss_history);
  r.train_accuracy = fit.train_accuracy;
  return r;
}

void save_flat_dnn(const FlatDnnModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "treedoa-flat-dnn";
  manifest["version"] = 1;
  manifest["library_version"] = library_version();
  manifest["classes"] = model.spec().classes;
  manifest["theta_min_deg"] = model.spec().theta_min_deg;
  manifest["theta_max_deg"] = model.spec().theta_max_deg;
  manifest["hidden_sizes"] = model.spec().hidden_sizes;
  manifest["feature_scaling"] = to_string(model.scaling());
  manifest["file"] = "model.mlnn";
  nn::save_model(model.network(), dir / "model.mlnn");
  detail::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

FlatDnnModel load_flat_dnn(const fs::path& dir) {
  try {
    const json manifest = json::parse(detail::read_text(dir / "manifest.json"));
    if (manifest.at("format") != "treedoa-flat-dnn") throw RuntimeError("not a flat DNN checkpoint: " + dir.string());
    if (manifest.at("version").get<int>() != 1) throw RuntimeError("unsupported flat DNN manifest version");
    FlatDnnSpec spec;
    spec.classes = manifest.at("classes").get<int>();
    spec.theta_min_deg = manifest.at("theta_min_deg").get<double>();
    spec.theta_max_deg = manifest.at("theta_max_deg").get<double>();
    spec.hidden_sizes = manifest.at("hidden_sizes").get<std::vector<int>>();
    return FlatDnnModel(spec, nn::load_model(dir / manifest.at("file").get<std::string>()),
                        feature_scaling_from_string(manifest.at("feature_scaling").get<std::string>()));
  } catch (const json::exception& e) {
    throw RuntimeError("malformed flat DNN manifest in " + dir.string() + ": " + e.what());
  }
}

}  // namespace treedoa
