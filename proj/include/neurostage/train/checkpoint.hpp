#pragma once

#include "neurostage/io/container.hpp"
#include "neurostage/model/config.hpp"
#include "neurostage/model/params.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

namespace neurostage {

inline constexpr int kCheckpointVersion = 1;

// A checkpoint is a level-5 container holding every parameter flattened into
// one row (payload = 4 bytes x parameter count), plus "<path>.json":
//   {"checkpoint_version": 1, "model_config": {...}, "payload_hash": "<hex>",
//    "params": [{"name": "...", "rows": r, "cols": c, "offset": o}, ...],
//    "extra": {...}}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline Mat<float> flatten_params(const ParamSet<float>& ps) {
  Mat<float> flat(1, static_cast<Index>(ps.count()));
  Index off = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Mat<float>& m = ps[i];
    std::copy(m.data(), m.data() + m.size(), flat.data() + off);
    off += m.size();
  }
  return flat;
}

/// Hash over parameter names, shapes and values; equal iff two parameter sets
/// are bit-identical.
inline std::string params_hash(const ParamSet<float>& ps) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& name = ps.name(i);
    h = fnv1a(name.data(), name.size(), h);
    const std::int64_t shape[2] = {ps[i].rows(), ps[i].cols()};
    h = fnv1a(shape, sizeof shape, h);
    h = fnv1a(ps[i].data(), sizeof(float) * static_cast<std::size_t>(ps[i].size()), h);
  }
  return hex64(h);
}

inline std::filesystem::path checkpoint_table_path(const std::filesystem::path& p) {
  return p.string() + ".json";
}

inline void save_checkpoint(const ParamSet<float>& ps, const ModelConfig& cfg,
                            const std::filesystem::path& path,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  const Mat<float> flat = flatten_params(ps);
  nlohmann::json table;
  table["checkpoint_version"] = kCheckpointVersion;
  table["model_config"] = cfg;
  table["payload_hash"] =
      hex64(fnv1a(flat.data(), sizeof(float) * static_cast<std::size_t>(flat.size())));
  table["params_hash"] = params_hash(ps);
  nlohmann::json list = nlohmann::json::array();
  Index off = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    list.push_back({{"name", ps.name(i)},
                    {"rows", ps[i].rows()},
                    {"cols", ps[i].cols()},
                    {"offset", off}});
    off += ps[i].size();
  }
  table["params"] = list;
  table["extra"] = extra;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  io::write_container(path, io::LevelCode::params, flat);
  io::write_file_atomic(checkpoint_table_path(path), table.dump(1));
}

struct Checkpoint {
  ModelConfig config;
  ParamSet<float> params;
  nlohmann::json extra;
};

/// Loads a checkpoint; if `expected` is given the stored model config must
/// equal it.
inline Checkpoint load_checkpoint(const std::filesystem::path& path,
                                  const std::optional<ModelConfig>& expected = std::nullopt) {
  nlohmann::json table;
  try {
    table = nlohmann::json::parse(io::read_text(checkpoint_table_path(path)));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(checkpoint_table_path(path).string() + ": " + e.what());
  }
  const int version = table.value("checkpoint_version", -1);
  if (version != kCheckpointVersion)
    throw VersionMismatchError(detail::concat(path.string(), ": checkpoint version ", version,
                                              ", this build reads ", kCheckpointVersion));
  Checkpoint ck;
  ck.config = table.at("model_config").get<ModelConfig>();
  ck.extra = table.value("extra", nlohmann::json::object());
  if (expected && !(*expected == ck.config))
    throw ConfigError(path.string() + ": model config differs from the requested one");

  io::Container c = io::read_container(path, io::LevelCode::params);
  const auto n = static_cast<std::size_t>(c.data.size());
  if (hex64(fnv1a(c.data.data(), sizeof(float) * n)) != table.at("payload_hash").get<std::string>())
    throw ChecksumError(path.string() + ": payload hash does not match the parameter table");
  for (const auto& p : table.at("params")) {
    const Index rows = p.at("rows").get<Index>();
    const Index cols = p.at("cols").get<Index>();
    const Index off = p.at("offset").get<Index>();
    require<ShapeMismatchError>(off + rows * cols <= c.data.size(), path.string(),
                                ": parameter table exceeds payload");
    const ParamId id = ck.params.add(p.at("name").get<std::string>(), rows, cols);
    std::copy(c.data.data() + off, c.data.data() + off + rows * cols, ck.params[id].data());
  }
  require<ShapeMismatchError>(ck.params.count() == n, path.string(), ": payload has ", n,
                              " values, table describes ", ck.params.count());
  return ck;
}

}  // namespace neurostage
