#pragma once

#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <boost/algorithm/string.hpp>

#include "hpo/config_space.hpp"
#include "hpo/forest.hpp"
#include "hpo/health_data.hpp"
#include "hpo/objectives.hpp"
#include "hpo/rng.hpp"

namespace hpo {

/// Raised when a candidate cannot be evaluated.
struct EvalError : std::runtime_error {
  EvalError(std::uint64_t id, const std::string& what)
      : std::runtime_error("candidate " + std::to_string(id) + ": " + what), candidate_id(id) {}
  std::uint64_t candidate_id;
};

/// Inference evaluations (e) and certification evaluations (e_plus).
class EvalBudget {
 public:
  EvalBudget() = default;
  EvalBudget(const EvalBudget&) = delete;
  EvalBudget& operator=(const EvalBudget&) = delete;

  void charge_inference() noexcept { e_.fetch_add(1, std::memory_order_relaxed); }
  void charge_certification() noexcept { e_plus_.fetch_add(1, std::memory_order_relaxed); }

  std::uint64_t e() const noexcept { return e_.load(std::memory_order_relaxed); }
  std::uint64_t e_plus() const noexcept { return e_plus_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> e_{0};
  std::atomic<std::uint64_t> e_plus_{0};
};

using ObjectiveFn = std::function<Objectives(const Candidate&)>;

/// One optimizer run's view of evaluation. Every distinct candidate is charged
/// once per session: to e when an optimizer asks for it, to e_plus when it is
/// first touched by certification. Backing storage (EvalCache) only saves
/// recomputation, so counters do not depend on cache warmth.
class EvalSession {
 public:
  struct PhaseStats {
    std::string name;
    std::uint64_t requests = 0;  // evaluate() calls, cached or not
    std::uint64_t charged = 0;   // calls that charged e
  };

  EvalSession(ObjectiveFn fn, EvalBudget& budget) : fn_(std::move(fn)), budget_(&budget) {
    phases_.push_back({"run"});
  }

  Objectives evaluate(const Candidate& c) {
    auto& phase = phases_.back();
    ++phase.requests;
    ++requests_;
    if (auto it = memo_.find(c.id); it != memo_.end()) return evaluated_[it->second].second;
    auto o = fn_(c);
    budget_->charge_inference();
    ++phase.charged;
    remember(c, o);
    return o;
  }

  /// Post-hoc scoring; charges e_plus for candidates this session has not seen.
  std::vector<std::pair<Candidate, Objectives>> certify(std::span<const Candidate> cs) {
    std::vector<std::pair<Candidate, Objectives>> out;
    out.reserve(cs.size());
    for (const auto& c : cs) {
      if (auto it = memo_.find(c.id); it != memo_.end()) {
        out.push_back(evaluated_[it->second]);
        continue;
      }
      auto o = fn_(c);
      budget_->charge_certification();
      remember(c, o);
      out.emplace_back(c, o);
    }
    return out;
  }

  bool seen(const Candidate& c) const { return memo_.contains(c.id); }
  std::optional<Objectives> lookup(const Candidate& c) const {
    if (auto it = memo_.find(c.id); it != memo_.end()) return evaluated_[it->second].second;
    return std::nullopt;
  }

  /// Starts attributing requests to a named phase.
  void begin_phase(std::string name) { phases_.push_back({std::move(name)}); }
  const std::vector<PhaseStats>& phases() const noexcept { return phases_; }
  const PhaseStats* phase(std::string_view name) const {
    for (auto it = phases_.rbegin(); it != phases_.rend(); ++it)
      if (it->name == name) return &*it;
    return nullptr;
  }

  std::uint64_t requests() const noexcept { return requests_; }
  EvalBudget& budget() noexcept { return *budget_; }
  /// Everything scored in this session, in first-touch order.
  const std::vector<std::pair<Candidate, Objectives>>& evaluated() const noexcept {
    return evaluated_;
  }

 private:
  void remember(const Candidate& c, const Objectives& o) {
    memo_.emplace(c.id, evaluated_.size());
    evaluated_.emplace_back(c, o);
  }

  ObjectiveFn fn_;
  EvalBudget* budget_;
  std::unordered_map<std::uint64_t, std::size_t> memo_;
  std::vector<std::pair<Candidate, Objectives>> evaluated_;
  std::vector<PhaseStats> phases_;
  std::uint64_t requests_ = 0;
};

// ---------------------------------------------------------------------------
// Persistent cache

struct EvalRecord {
  std::string key;
  std::uint64_t candidate_id = 0;
  std::vector<std::uint32_t> index;
  std::string dataset_id;
  std::string target;
  std::uint64_t seed = 0;
  Objectives objectives;
  double wall_time = 0.0;
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

inline std::string join_index(std::span<const std::uint32_t> index) {
  std::string s;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(index[i]);
  }
  return s;
}

}  // namespace detail

/// Stable fingerprint of a space definition.
inline std::string space_fingerprint(const ConfigSpace& space) {
  std::ostringstream os;
  for (const auto& p : space.params()) {
    os << p.name << ':' << static_cast<int>(p.kind) << ':' << detail::format_double(p.min) << ':'
       << detail::format_double(p.max) << ':' << detail::format_double(p.step);
    for (const auto& c : p.choices) os << ':' << c;
    os << ';';
  }
  return detail::hex64(fnv1a(os.str()));
}

inline std::string cache_key(const std::string& space_fp, const Candidate& c,
                             const std::string& dataset_id, std::string_view target,
                             std::uint64_t seed) {
  std::string material = space_fp + '|' + detail::join_index(c.index) + '|' + dataset_id + '|' +
                         std::string(target) + '|' + std::to_string(seed);
  return detail::hex64(fnv1a(material));
}

/// Evaluation results keyed by content hash, optionally persisted as an
/// append-only text file. Each line holds tab-separated fields:
///
///   key  index-list  dataset-id  target  seed  mre  pred40  sa  wall-time  checksum
///
/// where index-list is the comma-joined grid indices of the candidate and
/// checksum is the FNV-1a hash of everything before the last tab. Loading stops
/// at the first malformed line and truncates the file there.
class EvalCache {
 public:
  static constexpr std::string_view kHeader = "# hpo evaluation cache v1";

  EvalCache() = default;
  explicit EvalCache(std::filesystem::path file) : path_(std::move(file)) { load(); }

  EvalCache(const EvalCache&) = delete;
  EvalCache& operator=(const EvalCache&) = delete;

  std::optional<EvalRecord> find(const std::string& key) const {
    std::shared_lock lock(mutex_);
    if (auto it = records_.find(key); it != records_.end()) return it->second;
    return std::nullopt;
  }

  /// Inserts unless the key exists; appends to the file when persistent.
  void insert(const EvalRecord& r) {
    std::unique_lock lock(mutex_);
    if (!records_.emplace(r.key, r).second) return;
    if (!path_) return;
    if (!out_.is_open()) open_for_append();
    out_ << encode(r) << '\n';
    out_.flush();
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return records_.size();
  }

  std::size_t truncated_lines() const noexcept { return truncated_; }
  const std::optional<std::filesystem::path>& path() const noexcept { return path_; }

  std::vector<EvalRecord> records() const {
    std::shared_lock lock(mutex_);
    std::vector<EvalRecord> out;
    out.reserve(records_.size());
    for (const auto& [k, r] : records_) out.push_back(r);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
    return out;
  }

  void clear() {
    std::unique_lock lock(mutex_);
    records_.clear();
    if (out_.is_open()) out_.close();
    if (path_) {
      std::ofstream(*path_, std::ios::trunc) << kHeader << '\n';
    }
  }

  static std::string encode(const EvalRecord& r) {
    std::string body = r.key + '\t' + detail::join_index(r.index) + '\t' + r.dataset_id + '\t' +
                       r.target + '\t' + std::to_string(r.seed) + '\t' +
                       detail::format_double(r.objectives.mre) + '\t' +
                       detail::format_double(r.objectives.pred40) + '\t' +
                       detail::format_double(r.objectives.sa) + '\t' +
                       detail::format_double(r.wall_time);
    return body + '\t' + detail::hex64(fnv1a(body));
  }

  static std::optional<EvalRecord> decode(const std::string& line) {
    const auto cut = line.rfind('\t');
    if (cut == std::string::npos) return std::nullopt;
    const auto body = line.substr(0, cut);
    if (line.substr(cut + 1) != detail::hex64(fnv1a(body))) return std::nullopt;
    std::vector<std::string> f;
    boost::algorithm::split(f, body, [](char ch) { return ch == '\t'; });
    if (f.size() != 9) return std::nullopt;
    EvalRecord r;
    r.key = f[0];
    std::vector<std::string> idx;
    boost::algorithm::split(idx, f[1], [](char ch) { return ch == ','; });
    for (const auto& s : idx) {
      std::uint32_t v = 0;
      if (!detail::parse_number(s, v)) return std::nullopt;
      r.index.push_back(v);
    }
    r.dataset_id = f[2];
    r.target = f[3];
    if (!detail::parse_number(f[4], r.seed) || !detail::parse_number(f[5], r.objectives.mre) ||
        !detail::parse_number(f[6], r.objectives.pred40) ||
        !detail::parse_number(f[7], r.objectives.sa) || !detail::parse_number(f[8], r.wall_time))
      return std::nullopt;
    return r;
  }

 private:
  void load() {
    namespace fs = std::filesystem;
    if (!fs::exists(*path_)) return;
    std::ifstream in(*path_, std::ios::binary);
    std::string line;
    std::streamoff good_end = 0;
    bool first = true;
    while (true) {
      const auto start = in.tellg();
      if (!std::getline(in, line)) break;
      const bool complete = !in.eof();  // a final line without '\n' is partial
      if (first && line == kHeader && complete) {
        first = false;
        good_end = in.tellg();
        continue;
      }
      first = false;
      auto r = complete ? decode(line) : std::nullopt;
      if (!r) {
        good_end = start;
        ++truncated_;
        while (std::getline(in, line)) ++truncated_;
        break;
      }
      records_.emplace(r->key, std::move(*r));
      good_end = in.tellg();
    }
    in.close();
    if (truncated_ > 0) fs::resize_file(*path_, static_cast<std::uintmax_t>(good_end));
  }

  void open_for_append() {
    namespace fs = std::filesystem;
    const bool fresh = !fs::exists(*path_) || fs::file_size(*path_) == 0;
    if (path_->has_parent_path()) fs::create_directories(path_->parent_path());
    out_.open(*path_, std::ios::app);
    if (!out_) throw std::runtime_error("cannot write cache file " + path_->string());
    if (fresh) out_ << kHeader << '\n';
  }

  std::optional<std::filesystem::path> path_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, EvalRecord> records_;
  std::ofstream out_;
  std::size_t truncated_ = 0;
};

// ---------------------------------------------------------------------------
// Forest-backed objective

/// Precomputed rolling splits for one (dataset, target) pair.
struct EvalTask {
  struct Fold {
    Matrix x;
    std::vector<double> y;
    std::vector<double> test_row;
    double actual = 0.0;
    double guess = 0.0;
  };

  std::string dataset_id;
  Target target = Target::commits;
  std::uint64_t seed = 0;
  std::vector<TrainTestSplit> splits;
  std::vector<Fold> folds;
};

/// Dataset id = project id plus a hash of its contents.
inline std::string dataset_id(const ProjectSeries& s) {
  std::ostringstream os;
  write_series(os, s);
  return s.project_id + "-" + detail::hex64(fnv1a(os.str())).substr(0, 8);
}

inline EvalTask make_task(const ProjectSeries& s, Target target, std::uint64_t seed,
                          std::size_t horizon = kDefaultHorizon) {
  EvalTask t;
  t.dataset_id = dataset_id(s);
  t.target = target;
  t.seed = seed;
  t.splits = build_splits(s, target, horizon);
  for (const auto& sp : t.splits) {
    auto [x, y] = design(s, target, 0, sp.train_end);
    auto [tx, ty] = design(s, target, sp.test, sp.test + 1);
    EvalTask::Fold f;
    f.guess = naive_guesses(y, 1).front();
    f.x = std::move(x);
    f.y = std::move(y);
    f.test_row.assign(tx.data.begin(), tx.data.end());
    f.actual = ty.front();
    t.folds.push_back(std::move(f));
  }
  return t;
}

/// Trains one forest per fold and scores the predicted months.
inline Objectives evaluate_forest(const ConfigSpace& space, const Candidate& c,
                                  const EvalTask& task) {
  try {
    const auto params = ForestParams::from_candidate(c, space);
    std::vector<double> pred, actual, guess;
    const auto learner_seed = mix_seed(task.seed, c.id);
    for (std::size_t k = 0; k < task.folds.size(); ++k) {
      const auto& f = task.folds[k];
      const auto model = fit(params, f.x, f.y, mix_seed(learner_seed, k));
      pred.push_back(model.predict_row(f.test_row));
      actual.push_back(f.actual);
      guess.push_back(f.guess);
    }
    return score_window(pred, actual, guess);
  } catch (const std::exception& e) {
    throw EvalError(c.id, e.what());
  }
}

/// Objective function for EvalSession: cache lookup, else train and store.
class ForestObjective {
 public:
  ForestObjective(ConfigSpace space, std::shared_ptr<const EvalTask> task, EvalCache* cache)
      : space_(std::move(space)), fp_(space_fingerprint(space_)), task_(std::move(task)),
        cache_(cache) {}

  Objectives operator()(const Candidate& c) const {
    const auto key = cache_key(fp_, c, task_->dataset_id, to_string(task_->target), task_->seed);
    if (cache_) {
      if (auto r = cache_->find(key)) return r->objectives;
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto o = evaluate_forest(space_, c, *task_);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    if (cache_) {
      cache_->insert({key, c.id, c.index, task_->dataset_id, std::string(to_string(task_->target)),
                      task_->seed, o, dt.count()});
    }
    return o;
  }

  std::string key(const Candidate& c) const {
    return cache_key(fp_, c, task_->dataset_id, to_string(task_->target), task_->seed);
  }

 private:
  ConfigSpace space_;
  std::string fp_;
  std::shared_ptr<const EvalTask> task_;
  EvalCache* cache_;
};

}  // namespace hpo
