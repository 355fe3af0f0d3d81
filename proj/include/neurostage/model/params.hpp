#pragma once

#include "neurostage/common.hpp"

#include <map>
#include <string>
#include <vector>

namespace neurostage {

using ParamId = std::size_t;

/// Ordered, name-addressable collection of trainable arrays. Every array is
/// stored as a row-major matrix; vectors are 1 x n. Insertion order is the
/// serialization and optimizer order.
template <class S>
class ParamSet {
 public:
  ParamId add(const std::string& name, Index rows, Index cols) {
    require<ConfigError>(!index_.contains(name), "duplicate parameter path '", name, "'");
    index_.emplace(name, names_.size());
    names_.push_back(name);
    values_.push_back(Mat<S>::Zero(rows, cols));
    return names_.size() - 1;
  }

  std::size_t size() const { return values_.size(); }
  const std::string& name(ParamId id) const { return names_[id]; }
  const std::vector<std::string>& names() const { return names_; }

  Mat<S>& operator[](ParamId id) { return values_[id]; }
  const Mat<S>& operator[](ParamId id) const { return values_[id]; }

  bool contains(const std::string& name) const { return index_.contains(name); }
  ParamId id(const std::string& name) const {
    auto it = index_.find(name);
    require<ArgumentError>(it != index_.end(), "no parameter named '", name, "'");
    return it->second;
  }
  Mat<S>& at(const std::string& name) { return values_[id(name)]; }
  const Mat<S>& at(const std::string& name) const { return values_[id(name)]; }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
    return n;
  }

  // Same-shaped zero buffers, used for gradients and optimizer moments.
  std::vector<Mat<S>> zeros_like() const {
    std::vector<Mat<S>> out;
    out.reserve(values_.size());
    for (const auto& v : values_) out.push_back(Mat<S>::Zero(v.rows(), v.cols()));
    return out;
  }

  template <class To>
  ParamSet<To> cast() const {
    ParamSet<To> out;
    for (std::size_t i = 0; i < size(); ++i) {
      out.add(names_[i], values_[i].rows(), values_[i].cols());
      out[i] = values_[i].template cast<To>();
    }
    return out;
  }

  bool all_finite() const {
    for (const auto& v : values_)
      if (!v.allFinite()) return false;
    return true;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Mat<S>> values_;
  std::map<std::string, ParamId> index_;
};

template <class S>
using Grads = std::vector<Mat<S>>;

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual affine-layer scheme.
template <class S>
void init_uniform_fan_in(Mat<S>& m, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = static_cast<S>(rng.uniform(-bound, bound));
}

}  // namespace neurostage
