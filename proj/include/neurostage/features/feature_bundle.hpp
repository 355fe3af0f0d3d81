#pragma once

#include "neurostage/common.hpp"
#include "neurostage/model/layers.hpp"

#include <cstring>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace neurostage {

enum class FeatureLevel { low, high, final, text };

inline const char* to_string(FeatureLevel l) {
  switch (l) {
    case FeatureLevel::low: return "low";
    case FeatureLevel::high: return "high";
    case FeatureLevel::final: return "final";
    case FeatureLevel::text: return "text";
  }
  return "?";
}

/// id -> fixed-width vector table.
class FeatureTable {
 public:
  FeatureTable() = default;
  explicit FeatureTable(Index dim) : data_(0, dim) {}

  void add(const std::string& id, const RowVec<float>& v) {
    require(v.size() == dim(), "feature '", id, "' has width ", v.size(), ", table holds ", dim());
    require<ArgumentError>(!rows_.contains(id), "duplicate feature id '", id, "'");
    rows_.emplace(id, ids_.size());
    ids_.push_back(id);
    pending_.push_back(v);
  }

  Index dim() const { return data_.cols(); }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  bool contains(const std::string& id) const { return rows_.contains(id); }

  std::size_t row_of(const std::string& id) const {
    auto it = rows_.find(id);
    require<ProtocolError>(it != rows_.end(), "no feature for id '", id, "'");
    return it->second;
  }

  const Mat<float>& matrix() const {
    flush();
    return data_;
  }
  RowVec<float> at(const std::string& id) const { return matrix().row(static_cast<Index>(row_of(id))); }

  // Rows for `ids`, in order.
  Mat<float> gather(const std::vector<std::string>& ids) const {
    const Mat<float>& m = matrix();
    Mat<float> out(static_cast<Index>(ids.size()), dim());
    for (std::size_t i = 0; i < ids.size(); ++i)
      out.row(static_cast<Index>(i)) = m.row(static_cast<Index>(row_of(ids[i])));
    return out;
  }

  void set_matrix(std::vector<std::string> ids, Mat<float> data) {
    require(static_cast<Index>(ids.size()) == data.rows(), "id count ", ids.size(), " vs ",
            data.rows(), " rows");
    ids_ = std::move(ids);
    rows_.clear();
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      require<ArgumentError>(!rows_.contains(ids_[i]), "duplicate feature id '", ids_[i], "'");
      rows_.emplace(ids_[i], i);
    }
    data_ = std::move(data);
    pending_.clear();
  }

  bool operator==(const FeatureTable& o) const {
    return ids_ == o.ids_ && matrix().rows() == o.matrix().rows() &&
           matrix().cols() == o.matrix().cols() &&
           std::memcmp(matrix().data(), o.matrix().data(),
                       sizeof(float) * static_cast<std::size_t>(matrix().size())) == 0;
  }

 private:
  void flush() const {
    if (pending_.empty()) return;
    Mat<float> m(data_.rows() + static_cast<Index>(pending_.size()), data_.cols());
    m.topRows(data_.rows()) = data_;
    for (std::size_t i = 0; i < pending_.size(); ++i)
      m.row(data_.rows() + static_cast<Index>(i)) = pending_[i];
    data_ = std::move(m);
    pending_.clear();
  }

  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> rows_;
  mutable Mat<float> data_;
  mutable std::vector<RowVec<float>> pending_;
};

/// Per-stimulus image features at three backbone depths plus per-class text
/// features. Final and text vectors are unit-norm; low/high stay raw because
/// trainable projectors follow them.
struct FeatureBundle {
  FeatureTable low;
  FeatureTable high;
  FeatureTable final;
  FeatureTable text;
  std::map<std::string, std::string> stimulus_class;  // stimulus id -> class id
  std::map<std::string, std::string> metadata;        // pooling, prompt template, provenance

  const FeatureTable& level(FeatureLevel l) const {
    switch (l) {
      case FeatureLevel::low: return low;
      case FeatureLevel::high: return high;
      case FeatureLevel::final: return final;
      case FeatureLevel::text: return text;
    }
    return low;
  }
  FeatureTable& level(FeatureLevel l) {
    return const_cast<FeatureTable&>(std::as_const(*this).level(l));
  }

  const std::string& class_of(const std::string& stimulus) const {
    auto it = stimulus_class.find(stimulus);
    require<ProtocolError>(it != stimulus_class.end(), "unknown stimulus '", stimulus, "'");
    return it->second;
  }

  // Stimulus ids of one class, in id order.
  std::vector<std::string> stimuli_of(const std::string& class_id) const {
    std::vector<std::string> out;
    for (const auto& [s, c] : stimulus_class)
      if (c == class_id) out.push_back(s);
    return out;
  }

  bool operator==(const FeatureBundle& o) const {
    return low == o.low && high == o.high && final == o.final && text == o.text &&
           stimulus_class == o.stimulus_class;
  }
};

/// Source of a FeatureBundle. Implementations are immutable after
/// construction and return the same vectors for the same id on every call.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual const FeatureBundle& bundle() const = 0;
  virtual std::string kind() const = 0;
};

}  // namespace neurostage
