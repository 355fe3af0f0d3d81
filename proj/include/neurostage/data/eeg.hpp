#pragma once

#include "neurostage/common.hpp"
#include "neurostage/io/container.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace neurostage {

inline const std::vector<std::string>& visual_channels() {
  static const std::vector<std::string> names = {"P7",  "P5",  "P3",  "P1",  "Pz", "P2",
                                                 "P4",  "P6",  "P8",  "PO7", "PO3", "POz",
                                                 "PO4", "PO8", "O1",  "Oz",  "O2"};
  return names;
}

// Language-comprehension channels used by the xC-Ori-12 ablation.
inline const std::vector<std::string>& language_channels() {
  static const std::vector<std::string> names = {"Fp1", "F3", "F7",  "FC5", "FC1", "C3",
                                                 "T7",  "CP5", "P7", "FT7", "F5",  "TP7"};
  return names;
}

/// A set of EEG trials, (n, C, T) stored as an n x (C*T) float matrix with
/// channel-major rows.
struct EegStore {
  Mat<float> data;
  std::vector<std::string> channel_names;
  Index timesteps = 0;
  std::vector<std::string> stimulus_ids;
  std::vector<std::string> class_ids;
  std::vector<int> repetitions;

  Index size() const { return data.rows(); }
  Index channels() const { return static_cast<Index>(channel_names.size()); }

  std::set<std::string> classes() const { return {class_ids.begin(), class_ids.end()}; }

  void validate(const std::string& what) const {
    require<CountMismatchError>(data.cols() == channels() * timesteps, what, ": ", data.cols(),
                                " values per trial, expected ", channels(), " x ", timesteps);
    const auto n = static_cast<std::size_t>(data.rows());
    require<CountMismatchError>(stimulus_ids.size() == n && class_ids.size() == n &&
                                    repetitions.size() == n,
                                what, ": id table has ", stimulus_ids.size(), " rows, data has ",
                                n);
    for (Index r = 0; r < data.rows(); ++r)
      for (Index k = 0; k < data.cols(); ++k)
        if (!std::isfinite(data(r, k)))
          throw NonFiniteDataError(detail::concat(what, ": non-finite sample at trial ", r,
                                                  ", channel ", channel_names[k / timesteps],
                                                  ", time ", k % timesteps));
  }

  EegStore select_rows(const std::vector<std::size_t>& rows) const {
    EegStore out;
    out.channel_names = channel_names;
    out.timesteps = timesteps;
    out.data.resize(static_cast<Index>(rows.size()), data.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.data.row(static_cast<Index>(i)) = data.row(static_cast<Index>(rows[i]));
      out.stimulus_ids.push_back(stimulus_ids[rows[i]]);
      out.class_ids.push_back(class_ids[rows[i]]);
      out.repetitions.push_back(repetitions[rows[i]]);
    }
    return out;
  }

  void append(const EegStore& o) {
    require(o.channel_names == channel_names && o.timesteps == timesteps,
            "cannot append stores with different montages");
    Mat<float> m(data.rows() + o.data.rows(), data.cols());
    m << data, o.data;
    data = std::move(m);
    stimulus_ids.insert(stimulus_ids.end(), o.stimulus_ids.begin(), o.stimulus_ids.end());
    class_ids.insert(class_ids.end(), o.class_ids.begin(), o.class_ids.end());
    repetitions.insert(repetitions.end(), o.repetitions.begin(), o.repetitions.end());
  }
};

/// Selects channels by name, preserving the order of `names`.
inline EegStore select_channels(const EegStore& s, const std::vector<std::string>& names) {
  std::vector<Index> idx;
  for (const auto& n : names) {
    auto it = std::find(s.channel_names.begin(), s.channel_names.end(), n);
    if (it == s.channel_names.end())
      throw ChannelSelectionError("channel '" + n + "' not present in montage");
    idx.push_back(static_cast<Index>(it - s.channel_names.begin()));
  }
  const Index t = s.timesteps;
  EegStore out;
  out.channel_names = names;
  out.timesteps = t;
  out.stimulus_ids = s.stimulus_ids;
  out.class_ids = s.class_ids;
  out.repetitions = s.repetitions;
  out.data.resize(s.data.rows(), static_cast<Index>(names.size()) * t);
  for (std::size_t c = 0; c < idx.size(); ++c)
    out.data.middleCols(static_cast<Index>(c) * t, t) = s.data.middleCols(idx[c] * t, t);
  return out;
}

struct SubjectDataset {
  std::string subject_id;
  EegStore train;
  EegStore test;
  std::vector<std::string> channel_names;
  double epoch_start_ms = 0.0;
  double epoch_end_ms = 1000.0;
};

/// One query per test stimulus; the input to every retrieval protocol.
struct EvalView {
  std::string subject_id;
  Mat<float> queries;  // Q x (C*T)
  std::vector<std::string> stimulus_ids;
  std::vector<std::string> class_ids;
  std::vector<std::string> channel_names;
  Index timesteps = 0;
  double epoch_start_ms = 0.0;
  double epoch_end_ms = 1000.0;

  Index size() const { return queries.rows(); }
};

// ---------------------------------------------------------------------------
// On-disk layout: <root>/<subject>/{train_eeg.bin, test_eeg.bin, ids.json}.
// ids.json:
//   { "channel_names": [...], "n_timesteps": 175, "epoch_ms": [0, 1000],
//     "train": [{"stimulus": "...", "class": "...", "repetition": 0}, ...],
//     "test":  [ ... same ... ] }

namespace detail {

inline nlohmann::json id_rows(const EegStore& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < s.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    rows.push_back({{"stimulus", s.stimulus_ids[k]},
                    {"class", s.class_ids[k]},
                    {"repetition", s.repetitions[k]}});
  }
  return rows;
}

inline void fill_ids(EegStore& s, const nlohmann::json& rows, const std::string& what) {
  if (!rows.is_array()) throw LoadError("ids.json: '" + what + "' must be an array");
  for (const auto& r : rows) {
    s.stimulus_ids.push_back(r.at("stimulus").get<std::string>());
    s.class_ids.push_back(r.at("class").get<std::string>());
    s.repetitions.push_back(r.value("repetition", 0));
  }
}

}  // namespace detail

inline void write_subject(const std::filesystem::path& root, const SubjectDataset& ds) {
  const auto dir = root / ds.subject_id;
  std::filesystem::create_directories(dir);
  io::write_container(dir / "train_eeg.bin", io::LevelCode::eeg, ds.train.data);
  io::write_container(dir / "test_eeg.bin", io::LevelCode::eeg, ds.test.data);
  nlohmann::json j;
  j["channel_names"] = ds.channel_names;
  j["n_timesteps"] = ds.train.timesteps;
  j["epoch_ms"] = {ds.epoch_start_ms, ds.epoch_end_ms};
  j["train"] = detail::id_rows(ds.train);
  j["test"] = detail::id_rows(ds.test);
  io::write_file_atomic(dir / "ids.json", j.dump());
}

struct LoadOptions {
  Index timesteps = 175;
  // Counts enforced when loading the full benchmark (66,160 / 16,000).
  std::optional<Index> expected_train;
  std::optional<Index> expected_test;

  static LoadOptions things_eeg() { return {175, 66160, 16000}; }
};

inline SubjectDataset load_subject(const std::filesystem::path& root, const std::string& subject,
                                   const LoadOptions& opt = {}) {
  const auto dir = root / subject;
  if (!std::filesystem::is_directory(dir))
    throw LoadError("subject directory " + dir.string() + " does not exist");
  nlohmann::json ids;
  try {
    ids = nlohmann::json::parse(io::read_text(dir / "ids.json"));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError((dir / "ids.json").string() + ": " + e.what());
  }
  SubjectDataset ds;
  ds.subject_id = subject;
  ds.channel_names = ids.at("channel_names").get<std::vector<std::string>>();
  const Index t = ids.at("n_timesteps").get<Index>();
  if (t != opt.timesteps)
    throw CountMismatchError(detail::concat(subject, ": ", t, " time steps, configured ",
                                            opt.timesteps));
  if (ids.contains("epoch_ms")) {
    ds.epoch_start_ms = ids["epoch_ms"][0].get<double>();
    ds.epoch_end_ms = ids["epoch_ms"][1].get<double>();
  }
  for (auto* part : {&ds.train, &ds.test}) {
    const bool is_train = part == &ds.train;
    const std::string name = is_train ? "train" : "test";
    io::Container c = io::read_container(dir / (name + "_eeg.bin"), io::LevelCode::eeg);
    part->data = std::move(c.data);
    part->channel_names = ds.channel_names;
    part->timesteps = t;
    detail::fill_ids(*part, ids.at(name), name);
    part->validate(subject + "/" + name);
    const auto& expect = is_train ? opt.expected_train : opt.expected_test;
    if (expect && part->size() != *expect)
      throw CountMismatchError(detail::concat(subject, "/", name, ": ", part->size(),
                                              " samples, expected ", *expect));
  }
  return ds;
}

/// Averages the repetitions of each test stimulus into one query. Queries are
/// ordered by class id. Every stimulus must have `expected_reps` repetitions
/// (default: as many as the most repeated stimulus).
inline EvalView collapse_test_repetitions(const EegStore& test,
                                          std::optional<int> expected_reps = std::nullopt) {
  std::map<std::string, std::vector<std::size_t>> by_stim;
  std::map<std::string, std::string> stim_class;
  for (std::size_t i = 0; i < test.stimulus_ids.size(); ++i) {
    by_stim[test.stimulus_ids[i]].push_back(i);
    stim_class[test.stimulus_ids[i]] = test.class_ids[i];
  }
  std::size_t want = 0;
  if (expected_reps) {
    want = static_cast<std::size_t>(*expected_reps);
  } else {
    for (const auto& [s, rows] : by_stim) want = std::max(want, rows.size());
  }
  std::vector<std::string> short_ids;
  for (const auto& [s, rows] : by_stim)
    if (rows.size() != want) short_ids.push_back(s);
  if (!short_ids.empty()) {
    std::string list;
    for (const auto& s : short_ids) list += (list.empty() ? "" : ", ") + s;
    throw CountMismatchError(detail::concat("test stimuli without ", want,
                                            " repetitions: ", list));
  }
  std::vector<std::pair<std::string, std::string>> order;  // (class, stimulus)
  for (const auto& [s, c] : stim_class) order.emplace_back(c, s);
  std::sort(order.begin(), order.end());

  EvalView v;
  v.channel_names = test.channel_names;
  v.timesteps = test.timesteps;
  v.queries.resize(static_cast<Index>(order.size()), test.data.cols());
  for (std::size_t q = 0; q < order.size(); ++q) {
    const auto& rows = by_stim[order[q].second];
    Eigen::Matrix<double, 1, Eigen::Dynamic> acc =
        Eigen::Matrix<double, 1, Eigen::Dynamic>::Zero(test.data.cols());
    for (auto r : rows) acc += test.data.row(static_cast<Index>(r)).cast<double>();
    v.queries.row(static_cast<Index>(q)) = (acc / static_cast<double>(rows.size())).cast<float>();
    v.stimulus_ids.push_back(order[q].second);
    v.class_ids.push_back(order[q].first);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Per-channel z-scoring with training-set statistics.

struct ChannelStats {
  std::vector<std::string> channel_names;
  std::vector<double> mean;
  std::vector<double> sd;
};

inline ChannelStats channel_stats(const EegStore& s) {
  ChannelStats st;
  st.channel_names = s.channel_names;
  const Index t = s.timesteps;
  for (Index c = 0; c < s.channels(); ++c) {
    const auto block = s.data.middleCols(c * t, t).cast<double>();
    const double n = static_cast<double>(block.size());
    const double mu = block.sum() / n;
    const double var = (block.array() - mu).square().sum() / n;
    st.mean.push_back(mu);
    st.sd.push_back(var > 0 ? std::sqrt(var) : 1.0);
  }
  return st;
}

inline void standardize(Mat<float>& data, Index timesteps, const ChannelStats& st) {
  for (std::size_t c = 0; c < st.mean.size(); ++c) {
    auto block = data.middleCols(static_cast<Index>(c) * timesteps, timesteps);
    block = ((block.cast<double>().array() - st.mean[c]) / st.sd[c]).cast<float>().matrix();
  }
}

// ---------------------------------------------------------------------------

enum class SplitMode { dependent, independent };

inline SplitMode split_mode_from_string(const std::string& s) {
  if (s == "dependent") return SplitMode::dependent;
  if (s == "independent") return SplitMode::independent;
  throw ArgumentError("unknown split mode '" + s + "'");
}

struct Split {
  EegStore train;
  EvalView eval;
  std::vector<std::string> train_subjects;
  std::optional<ChannelStats> stats;
};

/// dependent: train on the target's own training set; independent: pool the
/// training sets of every other subject. Evaluation is always the target's
/// collapsed test queries. Optionally z-scores both with training statistics.
inline Split make_split(const std::vector<SubjectDataset>& subjects, SplitMode mode,
                        const std::string& target, bool zscore = true) {
  auto it = std::find_if(subjects.begin(), subjects.end(),
                         [&](const SubjectDataset& s) { return s.subject_id == target; });
  if (it == subjects.end()) throw ArgumentError("target subject '" + target + "' not found");
  Split sp;
  if (mode == SplitMode::dependent) {
    sp.train = it->train;
    sp.train_subjects = {target};
  } else {
    bool first = true;
    for (const auto& s : subjects) {
      if (s.subject_id == target) continue;
      if (first) {
        sp.train = s.train;
        first = false;
      } else {
        sp.train.append(s.train);
      }
      sp.train_subjects.push_back(s.subject_id);
    }
    if (first) throw ArgumentError("independent split needs at least one non-target subject");
  }
  if (std::find(sp.train_subjects.begin(), sp.train_subjects.end(), target) !=
      sp.train_subjects.end())
    require<ArgumentError>(mode == SplitMode::dependent,
                           "target subject leaked into an independent training view");

  sp.eval = collapse_test_repetitions(it->test);
  sp.eval.subject_id = target;
  sp.eval.epoch_start_ms = it->epoch_start_ms;
  sp.eval.epoch_end_ms = it->epoch_end_ms;

  const auto train_classes = sp.train.classes();
  for (const auto& c : sp.eval.class_ids)
    if (train_classes.contains(c))
      throw ProtocolError("zero-shot violation: class '" + c + "' in both train and eval");

  if (zscore) {
    sp.stats = channel_stats(sp.train);
    standardize(sp.train.data, sp.train.timesteps, *sp.stats);
    standardize(sp.eval.queries, sp.eval.timesteps, *sp.stats);
  }
  return sp;
}

}  // namespace neurostage
