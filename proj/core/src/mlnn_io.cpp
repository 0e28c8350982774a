#include <string>

#include "byte_io.hpp"
#include "treedoa/mlnn.hpp"

namespace treedoa::nn {

namespace {
constexpr std::string_view kMagic("TDMLNN\0\0", 8);
}

std::vector<std::uint8_t> serialize_model(const Mlnn& model) {
  detail::ByteWriter w;
  w.raw(kMagic);
  w.u32(kModelFormatVersion);
  const auto& sizes = model.spec().sizes;
  w.u32(static_cast<std::uint32_t>(sizes.size()));
  for (int s : sizes) w.u32(static_cast<std::uint32_t>(s));
  for (int k = 0; k < model.num_transforms(); ++k) w.u8(static_cast<std::uint8_t>(model.activation(k)));
  for (int k = 0; k < model.num_transforms(); ++k) {
    const auto& wk = model.weights(k);
    for (Eigen::Index i = 0; i < wk.rows(); ++i)
      for (Eigen::Index j = 0; j < wk.cols(); ++j) w.f64(wk(i, j));
    const auto& bk = model.biases(k);
    for (Eigen::Index i = 0; i < bk.size(); ++i) w.f64(bk(i));
  }
  auto& bytes = w.bytes();
  w.u64(detail::fnv1a64(bytes.data(), bytes.size()));
  return std::move(bytes);
}

Mlnn deserialize_model(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "model checkpoint");
  if (r.raw(kMagic.size()) != kMagic) throw RuntimeError("model checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion)
    throw RuntimeError("model checkpoint: unsupported format version " + std::to_string(version));
  const std::uint32_t n_sizes = r.u32();
  if (n_sizes < 3 || n_sizes > 64) throw RuntimeError("model checkpoint: implausible layer count");
  LayerSpec spec;
  for (std::uint32_t i = 0; i < n_sizes; ++i) {
    const std::uint32_t s = r.u32();
    if (s == 0 || s > (1u << 24)) throw RuntimeError("model checkpoint: implausible layer width");
    spec.sizes.push_back(static_cast<int>(s));
  }
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw RuntimeError(std::string("model checkpoint: ") + e.what());
  }
  Mlnn model(spec);
  for (int k = 0; k < model.num_transforms(); ++k) {
    if (r.u8() != static_cast<std::uint8_t>(model.activation(k)))
      throw RuntimeError("model checkpoint: activation tags do not match layer layout");
  }
  for (int k = 0; k < model.num_transforms(); ++k) {
    auto& wk = model.weights(k);
    for (Eigen::Index i = 0; i < wk.rows(); ++i)
      for (Eigen::Index j = 0; j < wk.cols(); ++j) wk(i, j) = r.f64();
    auto& bk = model.biases(k);
    for (Eigen::Index i = 0; i < bk.size(); ++i) bk(i) = r.f64();
  }
  const std::size_t payload = r.position();
  const std::uint64_t stored = r.u64();
  if (r.remaining() != 0) throw RuntimeError("model checkpoint: trailing bytes after checksum");
  if (stored != detail::fnv1a64(bytes.data(), payload)) throw RuntimeError("model checkpoint: checksum mismatch");
  return model;
}

void save_model(const Mlnn& model, const std::filesystem::path& path) {
  detail::write_file(path, serialize_model(model));
}

Mlnn load_model(const std::filesystem::path& path) {
  return deserialize_model(detail::read_file(path));
}

}  // namespace treedoa::nn
