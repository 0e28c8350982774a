#include "treedoa/qtdnn.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "byte_io.hpp"
#include "treedoa/parallel.hpp"
#include "treedoa/rng.hpp"

namespace treedoa {

namespace fs = std::filesystem;
using nlohmann::json;

QTdnnModel::QTdnnModel(std::vector<TdnnModel> branches) : branches_(std::move(branches)) {
  if (branches_.empty()) throw ConfigError("Q-TDNN needs at least one branch");
  for (const auto& b : branches_) {
    if (!(b.spec() == branches_.front().spec()) || b.input_dim() != branches_.front().input_dim() ||
        b.scaling() != branches_.front().scaling())
      throw ConfigError("all Q-TDNN branches must share one structure");
  }
}

std::vector<double> QTdnnModel::predict_multi(const Eigen::VectorXd& features) const {
  std::vector<double> out;
  out.reserve(branches_.size());
  for (const auto& b : branches_) out.push_back(b.route_predict(features).theta_deg);
  std::sort(out.begin(), out.end());
  return out;
}

void validate_tuple(const TreeSpec& spec, const std::vector<double>& tuple, double min_separation_deg) {
  if (tuple.empty()) throw ConfigError("empty source tuple");
  for (std::size_t i = 0; i < tuple.size(); ++i) {
    if (!(tuple[i] >= spec.theta_min_deg && tuple[i] < spec.theta_max_deg))
      throw ConfigError("source angle " + std::to_string(tuple[i]) + " outside the domain");
    if (i > 0 && !(tuple[i] - tuple[i - 1] >= min_separation_deg - 1e-9))
      throw ConfigError("source tuple violates the minimum separation of " + std::to_string(min_separation_deg) +
                        " deg");
    if (i > 0 && !(tuple[i] > tuple[i - 1])) throw ConfigError("source tuple must be strictly increasing");
  }
}

namespace {

// k sorted points in [lo, hi] with consecutive gaps >= gap, uniform over all
// such configurations (spacing transform of k sorted uniforms).
std::vector<double> separated_points(RngStream& rng, int k, double lo, double hi, double gap) {
  std::vector<double> u;
  const double reduced_hi = hi - (k - 1) * gap;
  for (int i = 0; i < k; ++i) u.push_back(rng.uniform(lo, reduced_hi));
  std::sort(u.begin(), u.end());
  for (int i = 0; i < k; ++i) u[static_cast<std::size_t>(i)] += i * gap;
  return u;
}

}  // namespace

std::vector<double> random_separated_tuple(const TreeSpec& spec, int num_sources, double min_separation_deg,
                                           std::uint64_t seed) {
  if (num_sources < 1) throw ConfigError("number of sources must be positive");
  if ((num_sources - 1) * min_separation_deg >= spec.span()) throw ConfigError("domain too narrow for the separation");
  RngStream rng(seed);
  return separated_points(rng, num_sources, spec.theta_min_deg, std::nextafter(spec.theta_max_deg, spec.theta_min_deg),
                          min_separation_deg);
}

std::vector<std::vector<double>> sample_source_tuples(const TreeSpec& spec, int num_sources,
                                                      const TupleSampling& sampling) {
  spec.validate();
  if (num_sources < 1) throw ConfigError("number of sources must be positive");
  const std::int64_t n = spec.total_classes();
  const std::size_t count = sampling.count ? sampling.count : static_cast<std::size_t>(50 * n);
  const double sep = sampling.min_separation_deg > 0.0 ? sampling.min_separation_deg : 2.0 * spec.resolution();
  if ((num_sources - 1) * sep >= spec.span()) throw ConfigError("domain too narrow for the requested separation");

  // Upper bound kept just inside the half-open domain.
  const double top = std::nextafter(spec.theta_max_deg, spec.theta_min_deg);
  std::vector<std::vector<double>> tuples(count);
  for (std::size_t i = 0; i < count; ++i) {
    RngStream rng(derive_seed(sampling.seed, i));
    const auto cell = static_cast<std::int64_t>(i % static_cast<std::size_t>(n));
    const LabelPath path = leaf_path(spec, cell);
    const AngleInterval iv = cell_interval(spec, path);
    const double anchor = rng.uniform(iv.lo, iv.hi);
    const int preferred = static_cast<int>((i / static_cast<std::size_t>(n)) % static_cast<std::size_t>(num_sources));
    int rank = -1;
    for (int step = 0; step < num_sources; ++step) {
      const int r = (preferred + step) % num_sources;
      const bool below_ok = anchor - r * sep >= spec.theta_min_deg;
      const bool above_ok = anchor + (num_sources - 1 - r) * sep <= top;
      if (below_ok && above_ok) {
        rank = r;
        break;
      }
    }
    if (rank < 0) throw ConfigError("cannot place a separated tuple around a cell; domain too narrow");
    std::vector<double> tuple = separated_points(rng, rank, spec.theta_min_deg, anchor - sep, sep);
    tuple.push_back(anchor);
    const auto above = separated_points(rng, num_sources - 1 - rank, anchor + sep, top, sep);
    tuple.insert(tuple.end(), above.begin(), above.end());
    tuples[i] = std::move(tuple);
  }
  return tuples;
}

FeatureSet build_multi_training_set(const ArrayConfig& array, const TreeSpec& spec,
                                    const std::vector<std::vector<double>>& tuples, double min_separation_deg,
                                    const MultiFeatureOptions& options) {
  array.validate();
  spec.validate();
  if (tuples.empty()) throw ConfigError("no source tuples given");
  for (const auto& t : tuples) validate_tuple(spec, t, min_separation_deg);
  const std::size_t copies = options.snr_db.empty() ? 1 : options.snr_db.size();
  const std::size_t total = tuples.size() * copies;

  FeatureSet set;
  set.scaling = options.scaling;
  set.features.resize(array.feature_dim(), static_cast<Eigen::Index>(total));
  set.doas.resize(total);
  parallel_for(total, [&](std::size_t col) {
    const std::size_t t = col % tuples.size();
    const std::size_t copy = col / tuples.size();
    Eigen::VectorXd f;
    if (options.snr_db.empty()) {
      f = extract_features(analytic_covariance(array, SourceSet::noiseless(tuples[t])));
    } else {
      f = sample_features(array, SourceSet::equal_power(tuples[t], options.snr_db[copy]), options.snapshots,
                          derive_seed(options.seed, {t, copy}));
    }
    apply_scaling(options.scaling, f);
    set.features.col(static_cast<Eigen::Index>(col)) = f;
    set.doas[col] = tuples[t];
  }, options.workers);
  return set;
}

NodeTrainingSet build_branch_node_training_set(const TreeSpec& spec, int level, std::span<const int> prefix,
                                               const FeatureSet& set, int branch) {
  if (branch < 0) throw ConfigError("branch index must be non-negative");
  return build_node_training_set(spec, level, prefix, set, static_cast<std::size_t>(branch));
}

QTdnnTrainResult train_qtdnn(const TreeSpec& spec, int num_sources, const FeatureSet& set, const TreeTrainConfig& cfg) {
  if (num_sources < 1) throw ConfigError("number of sources must be positive");
  for (const auto& d : set.doas)
    if (d.size() != static_cast<std::size_t>(num_sources))
      throw ConfigError("every training example must carry exactly Q source angles");
  QTdnnTrainResult result;
  std::vector<TdnnModel> branches;
  for (int q = 0; q < num_sources; ++q) {
    TreeTrainConfig branch_cfg = cfg;
    branch_cfg.rank = static_cast<std::size_t>(q);
    branch_cfg.empty_nodes = EmptyNodePolicy::borrow_parent;
    branch_cfg.node.seed = derive_seed(cfg.node.seed, 0xb0u + static_cast<std::uint64_t>(q));
    auto fit = train_tree(spec, set, branch_cfg);
    branches.push_back(std::move(fit.model));
    result.branch_nodes.push_back(std::move(fit.nodes));
  }
  result.model = QTdnnModel(std::move(branches));
  return result;
}

double multi_rmse(const std::vector<std::vector<double>>& truths, const std::vector<std::vector<double>>& estimates) {
  if (truths.size() != estimates.size()) throw ConfigError("multi_rmse: trial count mismatch");
  if (truths.empty()) throw ConfigError("multi_rmse: no trials");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i].size() != estimates[i].size()) throw ConfigError("multi_rmse: source count mismatch");
    auto t = truths[i];
    auto e = estimates[i];
    std::sort(t.begin(), t.end());
    std::sort(e.begin(), e.end());
    for (std::size_t q = 0; q < t.size(); ++q) {
      const double d = e[q] - t[q];
      sum += d * d;
      ++n;
    }
  }
  return std::sqrt(sum / static_cast<double>(n));
}

void save_qtdnn(const QTdnnModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "treedoa-qtdnn";
  manifest["version"] = 1;
  manifest["library_version"] = library_version();
  manifest["num_sources"] = model.num_sources();
  json branches = json::array();
  for (int q = 0; q < model.num_sources(); ++q) {
    const std::string sub = "branch_" + std::to_string(q);
    save_tree(model.branch(q), dir / sub);
    branches.push_back(sub);
  }
  manifest["branches"] = std::move(branches);
  detail::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

QTdnnModel load_qtdnn(const fs::path& dir) {
  try {
    const json manifest = json::parse(detail::read_text(dir / "manifest.json"));
    if (manifest.at("format") != "treedoa-qtdnn") throw RuntimeError("not a Q-TDNN checkpoint: " + dir.string());
    if (manifest.at("version").get<int>() != 1) throw RuntimeError("unsupported Q-TDNN manifest version");
    const auto& subs = manifest.at("branches");
    if (static_cast<int>(subs.size()) != manifest.at("num_sources").get<int>())
      throw RuntimeError("Q-TDNN manifest branch count mismatch");
    std::vector<TdnnModel> branches;
    for (const auto& s : subs) branches.push_back(load_tree(dir / s.get<std::string>()));
    return QTdnnModel(std::move(branches));
  } catch (const json::exception& e) {
    throw RuntimeError("malformed Q-TDNN manifest in " + dir.string() + ": " + e.what());
  }
}

}  // namespace treedoa
