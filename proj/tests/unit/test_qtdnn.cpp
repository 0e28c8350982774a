#include <algorithm>
#include <catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "treedoa/common.hpp"
#include "treedoa/qtdnn.hpp"
#include "treedoa/rng.hpp"

using namespace treedoa;
using Catch::Matchers::WithinAbs;
namespace fs = std::filesystem;

namespace {

TreeSpec three_level() { return TreeSpec{{6, 5, 4}, -60.0, 60.0, {8}}; }

ArrayConfig small_array() {
  ArrayConfig a;
  a.num_elements = 6;
  return a;
}

// Minimum-cost assignment by exhaustive search over permutations.
double assignment_rmse(const std::vector<std::vector<double>>& truths, const std::vector<std::vector<double>>& est) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < truths.size(); ++t) {
    std::vector<std::size_t> perm(truths[t].size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double cost = 0.0;
      for (std::size_t q = 0; q < perm.size(); ++q) cost += std::pow(est[t][perm[q]] - truths[t][q], 2);
      best = std::min(best, cost);
    } while (std::next_permutation(perm.begin(), perm.end()));
    total += best;
    n += truths[t].size();
  }
  return std::sqrt(total / static_cast<double>(n));
}

TreeTrainConfig quick_config() {
  TreeTrainConfig tc;
  tc.node.epochs = 3;
  tc.node.batch_size = 8;
  tc.workers = 2;
  return tc;
}

}  // namespace

TEST_CASE("multi-source features are the sum of single-source features", "[qtdnn]") {
  const auto a = small_array();
  RngStream rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto tuple = random_separated_tuple(three_level(), 3, 2.0, derive_seed(77, trial));
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(a.feature_dim());
    for (double th : tuple) sum += extract_features(analytic_covariance(a, SourceSet::noiseless({th})));
    const auto joint = extract_features(analytic_covariance(a, SourceSet::noiseless(tuple)));
    CHECK((joint - sum).cwiseAbs().maxCoeff() < 1e-12);
  }
  MultiFeatureOptions opt;
  opt.scaling = FeatureScaling::none;
  const std::vector<std::vector<double>> tuples{{-30.0, 40.0}};
  const auto set = build_multi_training_set(a, three_level(), tuples, 2.0, opt);
  const Eigen::VectorXd expected = extract_features(analytic_covariance(a, SourceSet::noiseless({-30.0}))) +
                                   extract_features(analytic_covariance(a, SourceSet::noiseless({40.0})));
  CHECK((set.features.col(0) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("branch q is labelled with the q-th smallest angle", "[qtdnn]") {
  const auto s = three_level();
  const std::vector<std::vector<double>> tuples{{-30.0, 40.0}};
  const auto set = build_multi_training_set(small_array(), s, tuples, 2.0, MultiFeatureOptions{});
  const auto b0 = build_branch_node_training_set(s, 0, {}, set, 0);
  const auto b1 = build_branch_node_training_set(s, 0, {}, set, 1);
  CHECK(b0.data.targets(doa_to_labels(s, -30.0)[0], 0) == 1.0);
  CHECK(b1.data.targets(doa_to_labels(s, 40.0)[0], 0) == 1.0);
  const auto deep = doa_to_labels(s, 40.0);
  const auto leaf = build_branch_node_training_set(s, 2, std::span<const int>(deep.data(), 2), set, 1);
  CHECK(leaf.data.targets(deep[2], 0) == 1.0);
}

TEST_CASE("single-source sets reduce to the tree's node sets", "[qtdnn]") {
  const auto s = three_level();
  const std::vector<std::vector<double>> tuples{{-41.2}, {3.3}, {27.0}};
  const auto set = build_multi_training_set(small_array(), s, tuples, 0.0, MultiFeatureOptions{});
  const LabelPath p{4};
  const auto a = build_branch_node_training_set(s, 1, p, set, 0);
  const auto b = build_node_training_set(s, 1, p, set, 0);
  CHECK(a.data.inputs == b.data.inputs);
  CHECK(a.data.targets == b.data.targets);
}

TEST_CASE("invalid tuples are rejected", "[qtdnn]") {
  const auto s = three_level();
  const auto a = small_array();
  CHECK_THROWS_AS(build_multi_training_set(a, s, {{10.0, 11.0}}, 2.0, MultiFeatureOptions{}), ConfigError);
  CHECK_THROWS_AS(build_multi_training_set(a, s, {{10.0, 70.0}}, 2.0, MultiFeatureOptions{}), ConfigError);
  CHECK_THROWS_AS(build_multi_training_set(a, s, {{20.0, 10.0}}, 2.0, MultiFeatureOptions{}), ConfigError);
  CHECK_THROWS_AS(validate_tuple(s, {}, 2.0), ConfigError);
  CHECK_NOTHROW(validate_tuple(s, {-60.0, -58.0}, 2.0));
}

TEST_CASE("stratified tuples are sorted, separated and cover every cell", "[qtdnn]") {
  const auto s = three_level();
  for (int q : {2, 3}) {
    TupleSampling ts;
    ts.seed = 3;
    const auto tuples = sample_source_tuples(s, q, ts);
    REQUIRE(tuples.size() == 50u * 120u);
    std::vector<int> hits(120, 0);
    for (const auto& t : tuples) {
      REQUIRE(t.size() == static_cast<std::size_t>(q));
      CHECK_NOTHROW(validate_tuple(s, t, 2.0));
      for (double th : t) ++hits[static_cast<std::size_t>(leaf_index(s, th))];
    }
    CHECK(*std::min_element(hits.begin(), hits.end()) > 0);
    CHECK(sample_source_tuples(s, q, ts) == tuples);
  }
}

TEST_CASE("random separated tuples respect the separation", "[qtdnn]") {
  const auto s = three_level();
  for (std::uint64_t i = 0; i < 500; ++i) {
    const auto t = random_separated_tuple(s, 4, 10.0, i);
    CHECK_NOTHROW(validate_tuple(s, t, 10.0));
  }
  CHECK_THROWS_AS(random_separated_tuple(s, 3, 61.0, 1), ConfigError);
}

TEST_CASE("multi_rmse examples", "[qtdnn]") {
  CHECK(multi_rmse({{1.0, 5.0}}, {{1.0, 5.0}}) == 0.0);
  CHECK_THAT(multi_rmse({{0.0, 10.0}}, {{1.0, 9.0}}), WithinAbs(1.0, 1e-15));
  CHECK_THAT(multi_rmse({{0.0, 10.0}}, {{9.0, 1.0}}), WithinAbs(1.0, 1e-15));
  CHECK_THROWS_AS(multi_rmse({{0.0}}, {}), ConfigError);
  CHECK_THROWS_AS(multi_rmse({{0.0}}, {{0.0, 1.0}}), ConfigError);
}

TEST_CASE("sorted pairing matches optimal assignment for separated sources", "[qtdnn]") {
  RngStream rng(8);
  std::vector<std::vector<double>> truths, est;
  for (std::uint64_t i = 0; i < 200; ++i) {
    const int q = 2 + static_cast<int>(i % 3);
    auto t = random_separated_tuple(three_level(), q, 10.0, derive_seed(1, i));
    auto e = t;
    for (auto& v : e) v += rng.uniform(-2.0, 2.0);
    std::reverse(e.begin(), e.end());
    truths.push_back(t);
    est.push_back(e);
  }
  CHECK_THAT(multi_rmse(truths, est), WithinAbs(assignment_rmse(truths, est), 1e-12));
}

TEST_CASE("Q-TDNN predictions are sorted and Q=1 equals the single tree", "[qtdnn][train]") {
  const auto s = TreeSpec{{2, 3}, -60.0, 60.0, {6}};
  const auto a = small_array();
  TupleSampling ts;
  ts.count = 60;
  const auto tuples = sample_source_tuples(s, 2, ts);
  const auto set = build_multi_training_set(a, s, tuples, s.resolution() * 2, MultiFeatureOptions{});
  const auto fit = train_qtdnn(s, 2, set, quick_config());
  REQUIRE(fit.model.num_sources() == 2);
  for (Eigen::Index c = 0; c < set.size(); ++c) {
    const auto est = fit.model.predict_multi(set.features.col(c));
    CHECK(std::is_sorted(est.begin(), est.end()));
  }

  const QTdnnModel single({fit.model.branch(0)});
  for (Eigen::Index c = 0; c < 10; ++c)
    CHECK(single.predict_multi(set.features.col(c))[0] == fit.model.branch(0).route_predict(set.features.col(c)).theta_deg);

  const fs::path dir = fs::temp_directory_path() / "treedoa_tests" / "qtdnn_ckpt";
  fs::remove_all(dir);
  save_qtdnn(fit.model, dir);
  CHECK(load_qtdnn(dir) == fit.model);
  CHECK_THROWS_AS(QTdnnModel(std::vector<TdnnModel>{}), ConfigError);
}
