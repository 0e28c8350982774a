#include "treedoa/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "treedoa/parallel.hpp"
#include "treedoa/rng.hpp"

namespace treedoa {

void TreeSpec::validate() const {
  if (fanouts.empty()) throw ConfigError("tree needs at least one level");
  for (int l : fanouts)
    if (l < 2) throw ConfigError("every level fan-out must be at least 2");
  if (!(theta_min_deg < theta_max_deg)) throw ConfigError("tree domain: theta_min must be below theta_max");
  if (hidden_sizes.empty()) throw ConfigError("node networks need at least one hidden layer");
  for (int w : hidden_sizes)
    if (w < 1) throw ConfigError("hidden layer widths must be positive");
  double n = 1.0;
  for (int l : fanouts) n *= l;
  if (n > 1e12) throw ConfigError("tree has too many leaf cells");
}

std::int64_t TreeSpec::nodes_at_level(int level) const {
  std::int64_t g = 1;
  for (int h = 0; h < level; ++h) g *= fanout(h);
  return g;
}

std::int64_t TreeSpec::total_classes() const { return nodes_at_level(depth()); }

std::int64_t TreeSpec::total_nodes() const {
  std::int64_t n = 0;
  for (int h = 0; h < depth(); ++h) n += nodes_at_level(h);
  return n;
}

nn::LayerSpec TreeSpec::node_layers(int level, int input_dim) const {
  nn::LayerSpec s;
  s.sizes.push_back(input_dim);
  s.sizes.insert(s.sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
  s.sizes.push_back(fanout(level));
  return s;
}

std::vector<std::int64_t> level_node_counts(const TreeSpec& spec) {
  spec.validate();
  std::vector<std::int64_t> g(static_cast<std::size_t>(spec.depth()));
  g[0] = 1;
  for (int h = 0; h + 1 < spec.depth(); ++h) g[static_cast<std::size_t>(h) + 1] = g[static_cast<std::size_t>(h)] * spec.fanout(h);
  return g;
}

std::vector<double> level_resolutions(const TreeSpec& spec) {
  const auto g = level_node_counts(spec);
  std::vector<double> res;
  for (int h = 0; h < spec.depth(); ++h)
    res.push_back(spec.span() / static_cast<double>(g[static_cast<std::size_t>(h)] * spec.fanout(h)));
  return res;
}

namespace {

// Left boundary of leaf cell k; boundary(N) is theta_max exactly.
double leaf_boundary(const TreeSpec& spec, std::int64_t k) {
  const std::int64_t n = spec.total_classes();
  if (k >= n) return spec.theta_max_deg;
  return spec.theta_min_deg + spec.span() * static_cast<double>(k) / static_cast<double>(n);
}

// Leaves spanned by prefix: [first, first + count).
std::pair<std::int64_t, std::int64_t> prefix_leaves(const TreeSpec& spec, std::span<const int> prefix) {
  if (prefix.size() > static_cast<std::size_t>(spec.depth())) throw ConfigError("label prefix longer than the tree");
  std::int64_t first = 0;
  for (std::size_t h = 0; h < prefix.size(); ++h) {
    const int l = prefix[h];
    if (l < 0 || l >= spec.fanout(static_cast<int>(h)))
      throw ConfigError("label " + std::to_string(l) + " out of range at level " + std::to_string(h));
    first = first * spec.fanout(static_cast<int>(h)) + l;
  }
  std::int64_t count = 1;
  for (int h = static_cast<int>(prefix.size()); h < spec.depth(); ++h) count *= spec.fanout(h);
  return {first * count, count};
}

}  // namespace

AngleInterval cell_interval(const TreeSpec& spec, std::span<const int> prefix) {
  const auto [first, count] = prefix_leaves(spec, prefix);
  return {leaf_boundary(spec, first), leaf_boundary(spec, first + count)};
}

std::int64_t leaf_index(const TreeSpec& spec, double theta_deg) {
  if (!(theta_deg >= spec.theta_min_deg && theta_deg < spec.theta_max_deg))
    throw ConfigError("angle " + std::to_string(theta_deg) + " outside [" + std::to_string(spec.theta_min_deg) + ", " +
                      std::to_string(spec.theta_max_deg) + ")");
  const std::int64_t n = spec.total_classes();
  auto k = static_cast<std::int64_t>(std::floor((theta_deg - spec.theta_min_deg) / spec.span() * static_cast<double>(n)));
  k = std::clamp<std::int64_t>(k, 0, n - 1);
  // Reconcile the division with the boundaries used by cell_interval.
  while (k > 0 && theta_deg < leaf_boundary(spec, k)) --k;
  while (k + 1 < n && theta_deg >= leaf_boundary(spec, k + 1)) ++k;
  return k;
}

LabelPath leaf_path(const TreeSpec& spec, std::int64_t leaf) {
  if (leaf < 0 || leaf >= spec.total_classes()) throw ConfigError("leaf index out of range");
  LabelPath path(static_cast<std::size_t>(spec.depth()));
  for (int h = spec.depth() - 1; h >= 0; --h) {
    path[static_cast<std::size_t>(h)] = static_cast<int>(leaf % spec.fanout(h));
    leaf /= spec.fanout(h);
  }
  return path;
}

std::int64_t path_to_leaf(const TreeSpec& spec, std::span<const int> path) {
  validate_path(spec, path);
  return prefix_leaves(spec, path).first;
}

std::int64_t node_index(const TreeSpec& spec, std::span<const int> prefix) {
  std::int64_t idx = 0;
  for (std::size_t h = 0; h < prefix.size(); ++h) {
    if (prefix[h] < 0 || prefix[h] >= spec.fanout(static_cast<int>(h))) throw ConfigError("prefix label out of range");
    idx = idx * spec.fanout(static_cast<int>(h)) + prefix[h];
  }
  return idx;
}

LabelPath node_prefix(const TreeSpec& spec, int level, std::int64_t index) {
  if (index < 0 || index >= spec.nodes_at_level(level)) throw ConfigError("node index out of range");
  LabelPath prefix(static_cast<std::size_t>(level));
  for (int h = level - 1; h >= 0; --h) {
    prefix[static_cast<std::size_t>(h)] = static_cast<int>(index % spec.fanout(h));
    index /= spec.fanout(h);
  }
  return prefix;
}

LabelPath doa_to_labels(const TreeSpec& spec, double theta_deg) {
  return leaf_path(spec, leaf_index(spec, theta_deg));
}

void validate_path(const TreeSpec& spec, std::span<const int> labels) {
  if (labels.size() != static_cast<std::size_t>(spec.depth()))
    throw ConfigError("label path has " + std::to_string(labels.size()) + " levels, tree has " +
                      std::to_string(spec.depth()));
  for (std::size_t h = 0; h < labels.size(); ++h)
    if (labels[h] < 0 || labels[h] >= spec.fanout(static_cast<int>(h)))
      throw ConfigError("label " + std::to_string(labels[h]) + " out of range at level " + std::to_string(h));
}

double labels_to_doa(const TreeSpec& spec, std::span<const int> labels, DoaDecoder decoder) {
  validate_path(spec, labels);
  if (decoder == DoaDecoder::midpoint) return cell_interval(spec, labels).midpoint();
  const auto res = level_resolutions(spec);
  double theta = spec.theta_min_deg;
  for (std::size_t h = 0; h < labels.size(); ++h) theta += labels[h] * res[h];
  return theta;
}

LabelPath route_labels(const TreeSpec& spec, const NodeClassifier& classify, RouteTrace* trace) {
  LabelPath path;
  path.reserve(static_cast<std::size_t>(spec.depth()));
  for (int h = 0; h < spec.depth(); ++h) {
    if (trace) trace->visited.emplace_back(h, node_index(spec, path));
    const int l = classify(h, path);
    if (l < 0 || l >= spec.fanout(h)) throw RuntimeError("node classifier returned an out-of-range class");
    path.push_back(l);
  }
  return path;
}

void FeatureSet::append(const FeatureSet& other) {
  if (other.size() == 0) return;
  if (size() == 0) {
    features = other.features;
    doas = other.doas;
    scaling = other.scaling;
    return;
  }
  if (other.dim() != dim()) throw ConfigError("cannot append feature sets of different dimension");
  if (other.scaling != scaling) throw ConfigError("cannot append feature sets with different scaling");
  Eigen::MatrixXd merged(dim(), size() + other.size());
  merged << features, other.features;
  features = std::move(merged);
  doas.insert(doas.end(), other.doas.begin(), other.doas.end());
}

std::vector<double> training_angles(const TreeSpec& spec, int offsets_per_cell) {
  if (offsets_per_cell < 0) throw ConfigError("offsets_per_cell must be non-negative");
  std::vector<double> angles;
  const std::int64_t n = spec.total_classes();
  const int per_cell = offsets_per_cell + 1;
  angles.reserve(static_cast<std::size_t>(n * per_cell));
  for (std::int64_t k = 0; k < n; ++k) {
    const double lo = leaf_boundary(spec, k);
    const double width = leaf_boundary(spec, k + 1) - lo;
    for (int i = 0; i < per_cell; ++i) angles.push_back(lo + width * (i + 0.5) / per_cell);
  }
  return angles;
}

FeatureSet build_training_grid(const ArrayConfig& array, const TreeSpec& spec, const GridOptions& options) {
  array.validate();
  spec.validate();
  if (options.augment_realizations < 1 || options.augment_snapshots < 1)
    throw ConfigError("augmentation needs positive realizations and snapshots");
  const std::vector<double> angles = training_angles(spec, options.offsets_per_cell);
  const auto n_angles = angles.size();
  const std::size_t n_aug = options.augment_snr_db.size() * static_cast<std::size_t>(options.augment_realizations);
  const std::size_t total = n_angles * (1 + n_aug);

  FeatureSet set;
  set.scaling = options.scaling;
  set.features.resize(array.feature_dim(), static_cast<Eigen::Index>(total));
  set.doas.resize(total);

  parallel_for(total, [&](std::size_t col) {
    const std::size_t angle_idx = col % n_angles;
    const std::size_t copy = col / n_angles;
    const double theta = angles[angle_idx];
    Eigen::VectorXd f;
    if (copy == 0) {
      f = extract_features(analytic_covariance(array, SourceSet::noiseless({theta})));
    } else {
      const std::size_t aug = copy - 1;
      const double snr = options.augment_snr_db[aug / static_cast<std::size_t>(options.augment_realizations)];
      f = sample_features(array, SourceSet::equal_power({theta}, snr), options.augment_snapshots,
                          derive_seed(options.seed, {angle_idx, aug}));
    }
    apply_scaling(options.scaling, f);
    set.features.col(static_cast<Eigen::Index>(col)) = f;
    set.doas[col] = {theta};
  }, options.workers);
  return set;
}

namespace {

nn::Dataset gather(const FeatureSet& set, const std::vector<Eigen::Index>& cols, const std::vector<int>& labels,
                   int n_classes) {
  nn::Dataset d;
  d.inputs.resize(set.dim(), static_cast<Eigen::Index>(cols.size()));
  d.targets = Eigen::MatrixXd::Zero(n_classes, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) {
    d.inputs.col(static_cast<Eigen::Index>(i)) = set.features.col(cols[i]);
    d.targets(labels[i], static_cast<Eigen::Index>(i)) = 1.0;
  }
  return d;
}

double ranked_angle(const FeatureSet& set, Eigen::Index col, std::size_t rank) {
  const auto& d = set.doas[static_cast<std::size_t>(col)];
  if (rank >= d.size()) throw ConfigError("example has fewer sources than the requested rank");
  return d[rank];
}

std::string describe(int level, std::span<const int> prefix) {
  std::string s = "level " + std::to_string(level) + " prefix [";
  for (std::size_t i = 0; i < prefix.size(); ++i) s += (i ? "," : "") + std::to_string(prefix[i]);
  return s + "]";
}

}  // namespace

NodeTrainingSet build_node_training_set(const TreeSpec& spec, int level, std::span<const int> prefix,
                                        const FeatureSet& set, std::size_t rank) {
  if (level < 0 || level >= spec.depth()) throw ConfigError("level out of range");
  if (prefix.size() != static_cast<std::size_t>(level)) throw ConfigError("prefix length must equal the level");
  const AngleInterval cell = cell_interval(spec, prefix);
  NodeTrainingSet out;
  std::vector<int> labels;
  for (Eigen::Index c = 0; c < set.size(); ++c) {
    const double theta = ranked_angle(set, c, rank);
    if (!cell.contains(theta)) continue;
    out.source_columns.push_back(c);
    labels.push_back(doa_to_labels(spec, theta)[static_cast<std::size_t>(level)]);
  }
  if (out.source_columns.empty())
    throw EmptyNodeError("no training examples fall in the cell of " + describe(level, prefix));
  out.data = gather(set, out.source_columns, labels, spec.fanout(level));
  return out;
}

NodeTrainingSet build_borrowed_node_training_set(const TreeSpec& spec, int level, std::span<const int> prefix,
                                                 const FeatureSet& set, std::size_t rank) {
  if (level < 1 || level >= spec.depth()) throw ConfigError("only non-root nodes can borrow training data");
  if (prefix.size() != static_cast<std::size_t>(level)) throw ConfigError("prefix length must equal the level");
  const AngleInterval parent = cell_interval(spec, prefix.first(prefix.size() - 1));
  const AngleInterval cell = cell_interval(spec, prefix);
  const double inner_hi = std::nextafter(cell.hi, -std::numeric_limits<double>::infinity());
  NodeTrainingSet out;
  std::vector<int> labels;
  for (Eigen::Index c = 0; c < set.size(); ++c) {
    const double theta = ranked_angle(set, c, rank);
    if (!parent.contains(theta)) continue;
    out.source_columns.push_back(c);
    labels.push_back(doa_to_labels(spec, std::clamp(theta, cell.lo, inner_hi))[static_cast<std::size_t>(level)]);
  }
  if (out.source_columns.empty())
    throw EmptyNodeError("neither the node nor its parent has training examples: " + describe(level, prefix));
  out.data = gather(set, out.source_columns, labels, spec.fanout(level));
  return out;
}

TdnnModel::TdnnModel(TreeSpec spec, int input_dim, FeatureScaling scaling)
    : spec_(std::move(spec)), input_dim_(input_dim), scaling_(scaling) {
  spec_.validate();
  if (input_dim_ < 1) throw ConfigError("input dimension must be positive");
  for (int h = 0; h < spec_.depth(); ++h)
    levels_.emplace_back(static_cast<std::size_t>(spec_.nodes_at_level(h)));
}

nn::Mlnn& TdnnModel::node(int level, std::int64_t index) {
  return levels_.at(static_cast<std::size_t>(level)).at(static_cast<std::size_t>(index));
}

const nn::Mlnn& TdnnModel::node(int level, std::int64_t index) const {
  return levels_.at(static_cast<std::size_t>(level)).at(static_cast<std::size_t>(index));
}

void TdnnModel::set_node(int level, std::int64_t index, nn::Mlnn model) {
  if (!(model.spec() == spec_.node_layers(level, input_dim_)))
    throw ConfigError("node network layout does not match its level");
  node(level, index) = std::move(model);
}

TdnnModel::Estimate TdnnModel::route_predict(const Eigen::VectorXd& features, RouteTrace* trace,
                                             DoaDecoder decoder) const {
  if (features.size() != input_dim_)
    throw ConfigError("feature vector has length " + std::to_string(features.size()) + ", model expects " +
                      std::to_string(input_dim_));
  Eigen::VectorXd x = features;
  apply_scaling(scaling_, x);
  Estimate e;
  e.labels = route_labels(
      spec_, [&](int level, std::span<const int> prefix) { return node(level, prefix).predict_class(x); }, trace);
  e.theta_deg = labels_to_doa(spec_, e.labels, decoder);
  return e;
}

bool TdnnModel::operator==(const TdnnModel& other) const {
  return spec_ == other.spec_ && input_dim_ == other.input_dim_ && scaling_ == other.scaling_ &&
         levels_ == other.levels_;
}

TreeTrainResult train_tree(const TreeSpec& spec, const FeatureSet& set, const TreeTrainConfig& cfg) {
  spec.validate();
  cfg.node.validate();
  if (set.size() == 0) throw ConfigError("training set is empty");

  TreeTrainResult result{TdnnModel(spec, static_cast<int>(set.dim()), set.scaling), {}};
  for (int h = 0; h < spec.depth(); ++h) {
    const auto g = static_cast<std::size_t>(spec.nodes_at_level(h));
    std::vector<NodeReport> reports(g);
    std::vector<nn::Mlnn> trained(g);
    parallel_for(g, [&](std::size_t idx) {
      const LabelPath prefix = node_prefix(spec, h, static_cast<std::int64_t>(idx));
      NodeReport& report = reports[idx];
      report.level = h;
      report.prefix = prefix;
      NodeTrainingSet node_set;
      try {
        node_set = build_node_training_set(spec, h, prefix, set, cfg.rank);
      } catch (const EmptyNodeError&) {
        if (cfg.empty_nodes != EmptyNodePolicy::borrow_parent || h == 0) throw;
        node_set = build_borrowed_node_training_set(spec, h, prefix, set, cfg.rank);
        report.borrowed = true;
      }
      nn::TrainConfig node_cfg = cfg.node;
      node_cfg.seed = derive_seed(cfg.node.seed, {static_cast<std::uint64_t>(h), idx});
      try {
        auto fit = nn::train(nn::Mlnn::initialized(spec.node_layers(h, static_cast<int>(set.dim())),
                                                   derive_seed(node_cfg.seed, 0x1a1u)),
                             node_set.data, node_cfg);
        report.samples = node_set.data.size();
        report.train_accuracy = fit.train_accuracy;
        report.final_loss = fit.loss_history.back();
        trained[idx] = std::move(fit.model);
      } catch (const RuntimeError& e) {
        throw RuntimeError("node " + describe(h, prefix) + ": " + e.what());
      }
    }, cfg.workers);
    for (std::size_t idx = 0; idx < g; ++idx) result.model.set_node(h, static_cast<std::int64_t>(idx), std::move(trained[idx]));
    result.nodes.insert(result.nodes.end(), reports.begin(), reports.end());
  }
  return result;
}

ComplexityReport complexity_report(const TreeSpec& spec, int input_dim) {
  spec.validate();
  ComplexityReport r;
  r.flat_equivalent = spec.total_classes();
  r.node_count = spec.total_nodes();
  for (int h = 0; h < spec.depth(); ++h) {
    r.model_classes += spec.fanout(h);
    r.mac_count += spec.node_layers(h, input_dim).mac_count();
  }
  return r;
}

}  // namespace treedoa
