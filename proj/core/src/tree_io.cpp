#include <json.hpp>
#include <string>

#include "byte_io.hpp"
#include "treedoa/tree.hpp"

namespace treedoa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kTreeManifestVersion = 1;

std::string node_file_name(int level, std::span<const int> prefix) {
  std::string name = "L" + std::to_string(level);
  for (int l : prefix) name += "_" + std::to_string(l);
  return name + ".mlnn";
}

}  // namespace

void save_tree(const TdnnModel& model, const fs::path& dir) {
  const TreeSpec& spec = model.spec();
  fs::create_directories(dir / "nodes");
  json manifest;
  manifest["format"] = "treedoa-tdnn";
  manifest["version"] = kTreeManifestVersion;
  manifest["library_version"] = library_version();
  manifest["fanouts"] = spec.fanouts;
  manifest["theta_min_deg"] = spec.theta_min_deg;
  manifest["theta_max_deg"] = spec.theta_max_deg;
  manifest["hidden_sizes"] = spec.hidden_sizes;
  manifest["input_dim"] = model.input_dim();
  manifest["feature_scaling"] = to_string(model.scaling());
  json nodes = json::array();
  for (int h = 0; h < spec.depth(); ++h) {
    for (std::int64_t i = 0; i < spec.nodes_at_level(h); ++i) {
      const LabelPath prefix = node_prefix(spec, h, i);
      const std::string file = "nodes/" + node_file_name(h, prefix);
      nn::save_model(model.node(h, i), dir / file);
      nodes.push_back({{"level", h}, {"prefix", prefix}, {"file", file}});
    }
  }
  manifest["nodes"] = std::move(nodes);
  detail::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

TdnnModel load_tree(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(detail::read_text(dir / "manifest.json"));
    if (manifest.at("format") != "treedoa-tdnn") throw RuntimeError("not a tree checkpoint: " + dir.string());
    if (manifest.at("version").get<int>() != kTreeManifestVersion)
      throw RuntimeError("unsupported tree manifest version in " + dir.string());
    TreeSpec spec;
    spec.fanouts = manifest.at("fanouts").get<std::vector<int>>();
    spec.theta_min_deg = manifest.at("theta_min_deg").get<double>();
    spec.theta_max_deg = manifest.at("theta_max_deg").get<double>();
    spec.hidden_sizes = manifest.at("hidden_sizes").get<std::vector<int>>();
    TdnnModel model(spec, manifest.at("input_dim").get<int>(),
                    feature_scaling_from_string(manifest.at("feature_scaling").get<std::string>()));
    const auto& nodes = manifest.at("nodes");
    if (static_cast<std::int64_t>(nodes.size()) != spec.total_nodes())
      throw RuntimeError("tree manifest lists " + std::to_string(nodes.size()) + " nodes, expected " +
                         std::to_string(spec.total_nodes()));
    for (const auto& entry : nodes) {
      const int level = entry.at("level").get<int>();
      const auto prefix = entry.at("prefix").get<std::vector<int>>();
      if (level < 0 || level >= spec.depth() || prefix.size() != static_cast<std::size_t>(level))
        throw RuntimeError("malformed node entry in tree manifest");
      try {
        model.set_node(level, node_index(spec, prefix), nn::load_model(dir / entry.at("file").get<std::string>()));
      } catch (const ConfigError& e) {
        throw RuntimeError(std::string("tree checkpoint shape mismatch: ") + e.what());
      }
    }
    for (int h = 0; h < spec.depth(); ++h)
      for (std::int64_t i = 0; i < spec.nodes_at_level(h); ++i)
        if (model.node(h, i).spec().sizes.empty())
          throw RuntimeError("tree manifest is missing node " + std::to_string(i) + " of level " + std::to_string(h));
    return model;
  } catch (const json::exception& e) {
    throw RuntimeError("malformed tree manifest in " + dir.string() + ": " + e.what());
  }
}

}  // namespace treedoa
