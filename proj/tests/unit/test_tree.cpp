#include <catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "treedoa/common.hpp"
#include "treedoa/rng.hpp"
#include "treedoa/tree.hpp"

using namespace treedoa;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
namespace fs = std::filesystem;

namespace {

TreeSpec three_level() { return TreeSpec{{6, 5, 4}, -60.0, 60.0, {128, 64, 32}}; }
TreeSpec two_level() { return TreeSpec{{12, 10}, -60.0, 60.0, {128, 64, 32}}; }

// Independent cell scan: the k-th 1-degree cell of [-60, 60).
std::int64_t scan_cell(double theta) {
  for (int k = 0; k < 120; ++k)
    if (theta >= -60.0 + k && theta < -59.0 + k) return k;
  return -1;
}

struct Tiny {
  ArrayConfig array;
  TreeSpec spec{{2, 2}, -60.0, 60.0, {6}};
  FeatureSet set;
  Tiny() {
    array.num_elements = 4;
    GridOptions g;
    g.offsets_per_cell = 4;
    set = build_training_grid(array, spec, g);
  }
};

TreeTrainConfig quick_config(std::size_t workers = 1) {
  TreeTrainConfig tc;
  tc.node.epochs = 5;
  tc.node.batch_size = 4;
  tc.node.learning_rate = 1e-2;
  tc.node.seed = 31;
  tc.workers = workers;
  return tc;
}

}  // namespace

TEST_CASE("fan-out algebra", "[tree]") {
  CHECK(level_node_counts(two_level()) == std::vector<std::int64_t>{1, 12});
  CHECK(level_node_counts(three_level()) == std::vector<std::int64_t>{1, 6, 30});
  CHECK(three_level().total_nodes() == 37);
  CHECK(two_level().total_nodes() == 13);
  CHECK(three_level().total_classes() == 120);
  CHECK(level_resolutions(two_level()) == std::vector<double>{10.0, 1.0});
  CHECK(level_resolutions(three_level()) == std::vector<double>{20.0, 4.0, 1.0});
  for (const auto& s : {two_level(), three_level(), TreeSpec{{3, 7, 2, 5}, -45, 45, {8}}}) {
    const auto g = level_node_counts(s);
    for (int h = 0; h + 1 < s.depth(); ++h) CHECK(g[h + 1] == g[h] * s.fanout(h));
  }
}

TEST_CASE("complexity report", "[tree]") {
  const auto c2 = complexity_report(two_level(), 4032);
  CHECK(c2.model_classes == 22);
  CHECK(c2.flat_equivalent == 120);
  const auto c3 = complexity_report(three_level(), 240);
  CHECK(c3.model_classes == 15);
  CHECK(c3.flat_equivalent == 120);
  CHECK(c3.node_count == 37);
  const std::int64_t body = 240 * 128 + 128 * 64 + 64 * 32;
  CHECK(c3.mac_count == 3 * body + 32 * (6 + 5 + 4));
  for (const auto& s : {TreeSpec{{2, 3}, -60, 60, {4}}, TreeSpec{{3, 4, 5}, -60, 60, {4}}, TreeSpec{{2, 2, 2}, -60, 60, {4}}}) {
    const auto c = complexity_report(s, 12);
    CHECK(c.model_classes < c.flat_equivalent);
  }
  // Two binary levels are the one tie: 2 + 2 == 2 * 2.
  const auto tie = complexity_report(TreeSpec{{2, 2}, -60, 60, {4}}, 12);
  CHECK(tie.model_classes == tie.flat_equivalent);
}

TEST_CASE("tree spec validation", "[tree]") {
  CHECK_THROWS_AS((TreeSpec{{}, -60, 60, {4}}.validate()), ConfigError);
  CHECK_THROWS_AS((TreeSpec{{4, 1}, -60, 60, {4}}.validate()), ConfigError);
  CHECK_THROWS_AS((TreeSpec{{4, 2}, 60, -60, {4}}.validate()), ConfigError);
  CHECK_THROWS_AS((TreeSpec{{4, 2}, -60, 60, {}}.validate()), ConfigError);
}

TEST_CASE("label encoding examples", "[tree][codec]") {
  const auto s = three_level();
  CHECK(doa_to_labels(s, 27.0) == LabelPath{4, 1, 3});
  CHECK(doa_to_labels(s, -60.0) == LabelPath{0, 0, 0});
  CHECK(doa_to_labels(s, std::nextafter(60.0, 0.0)) == LabelPath{5, 4, 3});
  CHECK_THROWS_AS(doa_to_labels(s, 60.0), ConfigError);
  CHECK_THROWS_AS(doa_to_labels(s, -60.5), ConfigError);
}

TEST_CASE("label decoding examples", "[tree][codec]") {
  const auto s = three_level();
  const LabelPath l{4, 1, 3};
  CHECK_THAT(labels_to_doa(s, l), WithinAbs(27.5, 1e-12));
  CHECK_THAT(labels_to_doa(s, l, DoaDecoder::left_edge), WithinAbs(27.0, 1e-12));
  CHECK_THAT(labels_to_doa(s, LabelPath{0, 0, 0}), WithinAbs(-59.5, 1e-12));
  CHECK_THROWS_AS(labels_to_doa(s, LabelPath{6, 0, 0}), ConfigError);
  CHECK_THROWS_AS(labels_to_doa(s, LabelPath{0, 0}), ConfigError);
  CHECK_THROWS_AS(labels_to_doa(s, LabelPath{0, -1, 0}), ConfigError);
}

TEST_CASE("codec agrees with a cell scan on every leaf", "[tree][codec]") {
  const auto s = three_level();
  for (int k = 0; k < 120; ++k) {
    for (double frac : {0.0, 0.3, 0.5, 0.999}) {
      const double theta = -60.0 + k + frac;
      REQUIRE(scan_cell(theta) == k);
      const auto labels = doa_to_labels(s, theta);
      CHECK(labels[0] * 20 + labels[1] * 4 + labels[2] == k);
      CHECK(leaf_index(s, theta) == k);
      CHECK(path_to_leaf(s, labels) == k);
      CHECK(leaf_path(s, k) == labels);
      CHECK_THAT(labels_to_doa(s, labels), WithinAbs(-59.5 + k, 1e-12));
      const auto cell = cell_interval(s, labels);
      CHECK(cell.contains(theta));
      CHECK_THAT(cell.width(), WithinAbs(1.0, 1e-12));
    }
  }
}

TEST_CASE("round trip error is at most half a cell", "[tree][codec]") {
  RngStream rng(1);
  for (const auto& s : {two_level(), three_level()}) {
    for (int i = 0; i < 10000; ++i) {
      const double theta = rng.uniform(-60.0, 60.0);
      CHECK(std::abs(labels_to_doa(s, doa_to_labels(s, theta)) - theta) <= 0.5 * s.resolution() + 1e-12);
    }
  }
}

TEST_CASE("node indices and prefixes are inverse", "[tree]") {
  const auto s = three_level();
  for (int h = 0; h < s.depth(); ++h)
    for (std::int64_t i = 0; i < s.nodes_at_level(h); ++i) CHECK(node_index(s, node_prefix(s, h, i)) == i);
  CHECK(node_index(s, LabelPath{4, 1}) == 21);
  const auto c = cell_interval(s, LabelPath{4});
  CHECK(c.lo == 20.0);
  CHECK(c.hi == 40.0);
}

TEST_CASE("oracle routing visits one node per level and recovers every cell", "[tree][route]") {
  const auto s = three_level();
  for (int k = 0; k < 120; ++k) {
    const double theta = -59.5 + k;
    const auto truth = doa_to_labels(s, theta);
    RouteTrace trace;
    const auto path = route_labels(
        s, [&](int level, std::span<const int>) { return truth[static_cast<std::size_t>(level)]; }, &trace);
    CHECK(path == truth);
    REQUIRE(trace.visited.size() == 3);
    for (int h = 0; h < 3; ++h) {
      CHECK(trace.visited[h].first == h);
      CHECK(trace.visited[h].second == node_index(s, std::span<const int>(truth.data(), h)));
    }
  }
  CHECK_THROWS_AS(route_labels(s, [](int, std::span<const int>) { return 9; }), RuntimeError);
}

TEST_CASE("training grid layout", "[tree][data]") {
  const auto s = three_level();
  const auto angles = training_angles(s, 4);
  REQUIRE(angles.size() == 600);
  for (int k = 0; k < 120; ++k) {
    for (int i = 0; i < 5; ++i) CHECK(scan_cell(angles[k * 5 + i]) == k);
    CHECK_THAT(angles[k * 5 + 2], WithinAbs(-59.5 + k, 1e-12));
  }
  ArrayConfig a;
  a.num_elements = 4;
  GridOptions g;
  g.augment_snr_db = {0.0, 10.0};
  g.augment_realizations = 2;
  const auto set = build_training_grid(a, s, g);
  CHECK(set.size() == 600 * 5);
  CHECK(set.dim() == 12);
  for (Eigen::Index c = 0; c < set.size(); ++c) CHECK_THAT(set.features.col(c).norm(), WithinAbs(1.0, 1e-12));
  CHECK(set.features == build_training_grid(a, s, g).features);
}

TEST_CASE("node training sets partition the grid", "[tree][data]") {
  const auto s = three_level();
  ArrayConfig a;
  a.num_elements = 4;
  const auto set = build_training_grid(a, s, GridOptions{});

  const auto root = build_node_training_set(s, 0, {}, set);
  CHECK(root.data.size() == set.size());

  const LabelPath p4{4};
  const auto node = build_node_training_set(s, 1, p4, set);
  CHECK(node.data.size() == 100);
  for (std::size_t i = 0; i < node.source_columns.size(); ++i) {
    const double theta = set.doas[static_cast<std::size_t>(node.source_columns[i])][0];
    CHECK(theta >= 20.0);
    CHECK(theta < 40.0);
    CHECK(node.data.targets.col(static_cast<Eigen::Index>(i)).sum() == 1.0);
    CHECK(node.data.targets(doa_to_labels(s, theta)[1], static_cast<Eigen::Index>(i)) == 1.0);
  }

  for (int h = 1; h < s.depth(); ++h) {
    std::set<Eigen::Index> seen;
    std::size_t total = 0;
    for (std::int64_t i = 0; i < s.nodes_at_level(h); ++i) {
      const auto part = build_node_training_set(s, h, node_prefix(s, h, i), set);
      total += part.source_columns.size();
      seen.insert(part.source_columns.begin(), part.source_columns.end());
    }
    CHECK(total == static_cast<std::size_t>(set.size()));
    CHECK(seen.size() == static_cast<std::size_t>(set.size()));
  }
}

TEST_CASE("empty nodes are reported", "[tree][data]") {
  const auto s = three_level();
  FeatureSet sparse;
  sparse.features = Eigen::MatrixXd::Zero(4, 1);
  sparse.doas = {{25.0}};
  const LabelPath other{0};
  CHECK_THROWS_AS(build_node_training_set(s, 1, other, sparse), EmptyNodeError);
  const LabelPath mine{4};
  CHECK(build_node_training_set(s, 1, mine, sparse).data.size() == 1);
  const LabelPath deep{4, 0};
  const auto borrowed = build_borrowed_node_training_set(s, 2, deep, sparse);
  REQUIRE(borrowed.data.size() == 1);
  // 25 deg clamped into [20, 24) lands in the last 1-degree cell.
  CHECK(borrowed.data.targets(3, 0) == 1.0);
}

TEST_CASE("tree training is deterministic and independent of workers", "[tree][train]") {
  const Tiny t;
  const auto a = train_tree(t.spec, t.set, quick_config(1));
  const auto b = train_tree(t.spec, t.set, quick_config(3));
  CHECK(a.model == b.model);
  REQUIRE(a.nodes.size() == 3);
  CHECK(a.nodes[0].samples == t.set.size());
  CHECK(a.nodes[1].samples + a.nodes[2].samples == t.set.size());
  for (const auto& n : a.nodes) CHECK(std::isfinite(n.final_loss));

  RouteTrace trace;
  const auto est = a.model.route_predict(t.set.features.col(0), &trace);
  CHECK(trace.visited.size() == 2);
  CHECK(est.labels.size() == 2);
  CHECK(est.theta_deg == labels_to_doa(t.spec, est.labels));
  CHECK_THROWS_AS(a.model.route_predict(Eigen::VectorXd::Zero(5)), ConfigError);
}

TEST_CASE("sparse grids fail under the error policy and train under borrow_parent", "[tree][train]") {
  Tiny t;
  // Keep only examples from the lowest quarter of the domain.
  FeatureSet few;
  few.scaling = t.set.scaling;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < t.set.size(); ++c)
    if (t.set.doas[static_cast<std::size_t>(c)][0] < -30.0) keep.push_back(c);
  few.features.resize(t.set.dim(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    few.features.col(static_cast<Eigen::Index>(i)) = t.set.features.col(keep[i]);
    few.doas.push_back(t.set.doas[static_cast<std::size_t>(keep[i])]);
  }
  CHECK_THROWS_AS(train_tree(t.spec, few, quick_config()), RuntimeError);
  auto cfg = quick_config();
  cfg.empty_nodes = EmptyNodePolicy::borrow_parent;
  const auto fit = train_tree(t.spec, few, cfg);
  CHECK(fit.nodes[2].borrowed);
  CHECK_FALSE(fit.nodes[1].borrowed);
}

TEST_CASE("tree checkpoint round trip", "[tree][checkpoint]") {
  const Tiny t;
  const auto model = train_tree(t.spec, t.set, quick_config()).model;
  const fs::path dir = fs::temp_directory_path() / "treedoa_tests" / "tree_ckpt";
  fs::remove_all(dir);
  save_tree(model, dir);
  CHECK(fs::exists(dir / "manifest.json"));
  const auto back = load_tree(dir);
  CHECK(back == model);
  CHECK(back.route_predict(t.set.features.col(7)).labels == model.route_predict(t.set.features.col(7)).labels);

  fs::remove(dir / "nodes" / "L1_1.mlnn");
  CHECK_THROWS_AS(load_tree(dir), RuntimeError);
  CHECK_THROWS_AS(load_tree(dir / "missing"), RuntimeError);
}
