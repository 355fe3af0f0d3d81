#pragma once

#include "neurostage/features/feature_bundle.hpp"
#include "neurostage/io/container.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace neurostage {

// Cache directory layout:
//   <level>.nsfc         binary container, one per level (low, high, final, text)
//   <level>.index.json   {"<id>": row, ...}
//   manifest.json        {"stimulus_class": {...}, "metadata": {...}}

namespace detail {

inline io::LevelCode level_code(FeatureLevel l) {
  switch (l) {
    case FeatureLevel::low: return io::LevelCode::low;
    case FeatureLevel::high: return io::LevelCode::high;
    case FeatureLevel::final: return io::LevelCode::final;
    case FeatureLevel::text: return io::LevelCode::text;
  }
  return io::LevelCode::low;
}

inline constexpr FeatureLevel kAllLevels[] = {FeatureLevel::low, FeatureLevel::high,
                                              FeatureLevel::final, FeatureLevel::text};

// Rows whose norm is off unit by more than float rounding are renormalized;
// already-unit rows pass through untouched so load is idempotent.
inline void ensure_unit_rows(Mat<float>& m, const std::string& what) {
  for (Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).cast<double>().norm();
    if (!(n > 0.0)) throw NumericError(detail::concat("zero ", what, " feature at row ", r));
    if (std::abs(n - 1.0) > 1e-5) m.row(r) = (m.row(r).cast<double>() / n).cast<float>();
  }
}

}  // namespace detail

inline void write_cache(const FeatureBundle& fb, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (auto l : detail::kAllLevels) {
    const FeatureTable& t = fb.level(l);
    io::write_container(dir / (std::string(to_string(l)) + ".nsfc"), detail::level_code(l),
                        t.matrix());
    nlohmann::ordered_json index = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < t.ids().size(); ++i) index[t.ids()[i]] = i;
    io::write_file_atomic(dir / (std::string(to_string(l)) + ".index.json"), index.dump(1));
  }
  nlohmann::json manifest;
  manifest["stimulus_class"] = fb.stimulus_class;
  manifest["metadata"] = fb.metadata;
  io::write_file_atomic(dir / "manifest.json", manifest.dump(1));
}

/// Loads all four levels. Missing level -> MissingLevelError; header/payload
/// disagreement -> ShapeMismatchError; corruption -> ChecksumError.
inline FeatureBundle load_cached_features(const std::filesystem::path& dir) {
  FeatureBundle fb;
  for (auto l : detail::kAllLevels) {
    const std::string name = to_string(l);
    const auto bin = dir / (name + ".nsfc");
    const auto idx = dir / (name + ".index.json");
    if (!std::filesystem::exists(bin) || !std::filesystem::exists(idx))
      throw MissingLevelError("feature cache " + dir.string() + " has no '" + name + "' level");
    io::Container c = io::read_container(bin, detail::level_code(l));
    nlohmann::json index;
    try {
      index = nlohmann::json::parse(io::read_text(idx));
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(idx.string() + ": " + e.what());
    }
    std::vector<std::string> ids(static_cast<std::size_t>(c.rows));
    std::vector<bool> seen(ids.size(), false);
    if (index.size() != c.rows)
      throw ShapeMismatchError(idx.string() + " lists " + std::to_string(index.size()) +
                               " ids, container has " + std::to_string(c.rows) + " rows");
    for (auto it = index.begin(); it != index.end(); ++it) {
      const auto row = it.value().get<std::size_t>();
      if (row >= ids.size() || seen[row])
        throw LoadError(idx.string() + ": bad row " + std::to_string(row) + " for id " + it.key());
      ids[row] = it.key();
      seen[row] = true;
    }
    if (!c.data.allFinite()) throw NonFiniteDataError(bin.string() + " contains non-finite values");
    if (l == FeatureLevel::final || l == FeatureLevel::text) detail::ensure_unit_rows(c.data, name);
    fb.level(l).set_matrix(std::move(ids), std::move(c.data));
  }
  const auto mpath = dir / "manifest.json";
  if (std::filesystem::exists(mpath)) {
    const auto m = nlohmann::json::parse(io::read_text(mpath));
    if (m.contains("stimulus_class")) m.at("stimulus_class").get_to(fb.stimulus_class);
    if (m.contains("metadata")) m.at("metadata").get_to(fb.metadata);
  }
  return fb;
}

class CachedFeatureProvider : public FeatureProvider {
 public:
  explicit CachedFeatureProvider(const std::filesystem::path& dir)
      : bundle_(load_cached_features(dir)) {}
  const FeatureBundle& bundle() const override { return bundle_; }
  std::string kind() const override { return "cache"; }

 private:
  FeatureBundle bundle_;
};

}  // namespace neurostage
