#pragma once

#include "neurostage/common.hpp"

#include <nlohmann/json.hpp>

#include <set>
#include <string>
#include <vector>

namespace neurostage {

enum class GalleryKind { standard, expanded, text };
enum class MatchMode { exact, category };

inline const char* to_string(GalleryKind k) {
  switch (k) {
    case GalleryKind::standard: return "standard";
    case GalleryKind::expanded: return "expanded";
    case GalleryKind::text: return "text";
  }
  return "?";
}
inline const char* to_string(MatchMode m) { return m == MatchMode::exact ? "exact" : "category"; }

/// Candidate embeddings with their stimulus and class ids.
struct Gallery {
  GalleryKind kind = GalleryKind::standard;
  std::vector<std::string> stimulus_ids;
  std::vector<std::string> class_ids;
  Mat<float> embeddings;  // G x d, unit rows

  Index size() const { return embeddings.rows(); }

  void validate() const {
    const auto n = static_cast<std::size_t>(embeddings.rows());
    require(stimulus_ids.size() == n && class_ids.size() == n, "gallery id tables have ",
            stimulus_ids.size(), "/", class_ids.size(), " rows for ", n, " embeddings");
    std::set<std::string> seen(stimulus_ids.begin(), stimulus_ids.end());
    require<ArgumentError>(seen.size() == n, "gallery ids are not unique");
    if (kind == GalleryKind::standard) {
      std::set<std::string> cls(class_ids.begin(), class_ids.end());
      require<ArgumentError>(cls.size() == n, "a standard gallery holds one item per class");
    }
    for (Index r = 0; r < embeddings.rows(); ++r) {
      const double norm = embeddings.row(r).cast<double>().norm();
      require<NumericError>(std::abs(norm - 1.0) < 1e-3, "gallery item ", stimulus_ids[r],
                            " is not unit-norm (", norm, ")");
    }
  }
};

/// Top-k accuracy (percent) per k.
struct TopK {
  std::vector<int> ks;
  std::vector<double> accuracy;
  Index n_queries = 0;
  std::vector<Index> hits;
};

/// Ranks the gallery by cosine similarity for every query. A query hits at k
/// when its target (exact: the query's stimulus; category: any item of the
/// query's class) is among the first k. Equal scores rank by gallery index.
inline TopK retrieval_topk(const Mat<float>& queries, const std::vector<std::string>& query_stimuli,
                           const std::vector<std::string>& query_classes, const Gallery& g,
                           const std::vector<int>& ks, MatchMode mode) {
  g.validate();
  require(queries.cols() == g.embeddings.cols(), "queries have width ", queries.cols(),
          ", gallery ", g.embeddings.cols());
  const auto nq = static_cast<std::size_t>(queries.rows());
  require(query_stimuli.size() == nq && query_classes.size() == nq, "query id tables mismatch");
  for (int k : ks)
    require<ArgumentError>(k >= 1 && k <= g.size(), "k = ", k, " outside [1, gallery size ",
                           g.size(), "]");

  TopK out;
  out.ks = ks;
  out.n_queries = queries.rows();
  out.hits.assign(ks.size(), 0);
  const Mat<float> scores = queries * g.embeddings.transpose();
  for (Index q = 0; q < queries.rows(); ++q) {
    // Best-ranked matching item: highest score, then lowest index.
    Index best = -1;
    for (Index j = 0; j < g.size(); ++j) {
      const bool match = mode == MatchMode::exact
                             ? g.stimulus_ids[j] == query_stimuli[q]
                             : g.class_ids[j] == query_classes[q];
      if (match && (best < 0 || scores(q, j) > scores(q, best))) best = j;
    }
    if (best < 0)
      throw ProtocolError(detail::concat("no gallery item matches query ", query_stimuli[q], " (",
                                         to_string(mode), " mode)"));
    Index rank = 0;
    const float sb = scores(q, best);
    for (Index j = 0; j < g.size(); ++j)
      if (scores(q, j) > sb || (scores(q, j) == sb && j < best)) ++rank;
    for (std::size_t i = 0; i < ks.size(); ++i)
      if (rank < ks[i]) ++out.hits[i];
  }
  for (auto h : out.hits)
    out.accuracy.push_back(out.n_queries ? 100.0 * static_cast<double>(h) / out.n_queries : 0.0);
  return out;
}

// ---------------------------------------------------------------------------

/// Central interval [lo, hi] of hit counts under Binomial(n, p) holding at
/// least 1 - alpha of the mass (exact tails).
inline std::pair<Index, Index> binomial_interval(Index n, double p, double alpha = 0.05) {
  require<ArgumentError>(n >= 0 && p >= 0 && p <= 1, "invalid binomial parameters");
  std::vector<double> pmf(static_cast<std::size_t>(n + 1));
  for (Index k = 0; k <= n; ++k) {
    const double lc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    const double lp = (k > 0 ? k * std::log(p) : 0.0) + (n - k > 0 ? (n - k) * std::log1p(-p) : 0.0);
    pmf[static_cast<std::size_t>(k)] = (p == 0 && k > 0) || (p == 1 && k < n) ? 0.0 : std::exp(lc + lp);
  }
  Index lo = 0;
  double tail = 0;
  while (lo < n && tail + pmf[static_cast<std::size_t>(lo)] <= alpha / 2) tail += pmf[static_cast<std::size_t>(lo++)];
  Index hi = n;
  tail = 0;
  while (hi > 0 && tail + pmf[static_cast<std::size_t>(hi)] <= alpha / 2) tail += pmf[static_cast<std::size_t>(hi--)];
  return {lo, hi};
}

/// Same interval expressed in percent accuracy.
inline std::pair<double, double> chance_interval_percent(Index n, double p, double alpha = 0.05) {
  const auto [lo, hi] = binomial_interval(n, p, alpha);
  return {100.0 * static_cast<double>(lo) / n, 100.0 * static_cast<double>(hi) / n};
}

}  // namespace neurostage
