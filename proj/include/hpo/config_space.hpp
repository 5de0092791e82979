#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "hpo/rng.hpp"

namespace hpo {

enum class ParamKind { integer_range, real_range, categorical };

/// One tunable hyperparameter. Ranges are stepped grids; categoricals are
/// ordered symbol lists whose "value" is the choice index.
struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::integer_range;
  double min = 0.0;
  double max = 0.0;
  double step = 1.0;
  std::vector<std::string> choices;

  static ParamSpec integer(std::string name, double lo, double hi, double step) {
    ParamSpec p{std::move(name), ParamKind::integer_range, lo, hi, step, {}};
    p.validate();
    return p;
  }
  static ParamSpec real(std::string name, double lo, double hi, double step) {
    ParamSpec p{std::move(name), ParamKind::real_range, lo, hi, step, {}};
    p.validate();
    return p;
  }
  static ParamSpec categorical(std::string name, std::vector<std::string> choices) {
    ParamSpec p{std::move(name), ParamKind::categorical, 0.0, 0.0, 1.0, std::move(choices)};
    p.validate();
    return p;
  }

  bool is_numeric() const noexcept { return kind != ParamKind::categorical; }

  std::size_t grid_size() const noexcept {
    if (kind == ParamKind::categorical) return choices.size();
    // The epsilon absorbs representation error in (max - min) / step.
    return static_cast<std::size_t>(std::floor((max - min) / step + 1e-9)) + 1;
  }

  double value_at(std::size_t index) const {
    if (index >= grid_size()) throw std::out_of_range("grid index out of range for " + name);
    if (kind == ParamKind::categorical) return static_cast<double>(index);
    return min + step * static_cast<double>(index);
  }

  /// Width used to normalize distances; zero for single-point ranges.
  double span() const noexcept {
    if (kind == ParamKind::categorical) return 1.0;
    return max - min;
  }

  std::string label_at(std::size_t index) const {
    if (kind == ParamKind::categorical) return choices.at(index);
    std::ostringstream os;
    os << value_at(index);
    return os.str();
  }

  void validate() const {
    if (name.empty()) throw std::invalid_argument("parameter name must not be empty");
    if (kind == ParamKind::categorical) {
      if (choices.empty()) throw std::invalid_argument(name + ": categorical needs choices");
      std::unordered_set<std::string> seen(choices.begin(), choices.end());
      if (seen.size() != choices.size())
        throw std::invalid_argument(name + ": duplicate categorical choice");
      return;
    }
    if (!(min <= max)) throw std::invalid_argument(name + ": min must be <= max");
    if (!(step > 0.0)) throw std::invalid_argument(name + ": step must be > 0");
  }
};

/// A grid point. Stores the per-parameter grid indices, their decoded values
/// and an id equal to the mixed-radix rank of the indices (so it is
/// deterministic and injective over the grid).
struct Candidate {
  std::vector<std::uint32_t> index;
  std::vector<double> value;
  std::uint64_t id = 0;

  friend bool operator==(const Candidate& a, const Candidate& b) {
    return a.id == b.id && a.index == b.index;
  }
};

class ConfigSpace {
 public:
  ConfigSpace() = default;
  explicit ConfigSpace(std::vector<ParamSpec> params) : params_(std::move(params)) {
    if (params_.empty()) throw std::invalid_argument("config space needs at least one parameter");
    std::unordered_set<std::string> names;
    for (const auto& p : params_) {
      p.validate();
      if (!names.insert(p.name).second)
        throw std::invalid_argument("duplicate parameter name: " + p.name);
    }
  }

  const std::vector<ParamSpec>& params() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }
  const ParamSpec& operator[](std::size_t i) const { return params_.at(i); }

  std::size_t find(std::string_view name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name == name) return i;
    throw std::out_of_range("no parameter named " + std::string(name));
  }

  std::uint64_t cardinality() const noexcept {
    std::uint64_t n = 1;
    for (const auto& p : params_) n *= p.grid_size();
    return n;
  }

  Candidate make(std::span<const std::uint32_t> index) const {
    if (index.size() != params_.size())
      throw std::invalid_argument("candidate arity does not match the space");
    Candidate c;
    c.index.assign(index.begin(), index.end());
    c.value.resize(index.size());
    std::uint64_t id = 0;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      c.value[i] = params_[i].value_at(index[i]);
      id = id * params_[i].grid_size() + index[i];
    }
    c.id = id;
    return c;
  }

  /// Inverse of Candidate::id.
  Candidate decode(std::uint64_t id) const {
    if (id >= cardinality()) throw std::out_of_range("candidate id outside the grid");
    std::vector<std::uint32_t> index(params_.size());
    for (std::size_t i = params_.size(); i-- > 0;) {
      const auto g = params_[i].grid_size();
      index[i] = static_cast<std::uint32_t>(id % g);
      id /= g;
    }
    return make(index);
  }

  /// Nearest grid point to a raw numeric value (clamped to the range).
  std::uint32_t snap(std::size_t param, double raw) const {
    const auto& p = params_.at(param);
    const auto g = p.grid_size();
    double pos = p.kind == ParamKind::categorical ? raw : (raw - p.min) / p.step;
    pos = std::clamp(std::round(pos), 0.0, static_cast<double>(g - 1));
    return static_cast<std::uint32_t>(pos);
  }

  bool contains(const Candidate& c) const noexcept {
    if (c.index.size() != params_.size() || c.value.size() != params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (c.index[i] >= params_[i].grid_size()) return false;
    return true;
  }

  std::string describe(const Candidate& c) const {
    std::ostringstream os;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (i) os << ' ';
      os << params_[i].name << '=' << params_[i].label_at(c.index.at(i));
    }
    return os.str();
  }

  friend bool operator==(const ConfigSpace& a, const ConfigSpace& b) {
    if (a.params_.size() != b.params_.size()) return false;
    for (std::size_t i = 0; i < a.params_.size(); ++i) {
      const auto &p = a.params_[i], &q = b.params_[i];
      if (p.name != q.name || p.kind != q.kind || p.min != q.min || p.max != q.max ||
          p.step != q.step || p.choices != q.choices)
        return false;
    }
    return true;
  }

 private:
  std::vector<ParamSpec> params_;
};

/// The five-parameter regression-forest grid.
inline ConfigSpace default_space() {
  return ConfigSpace({
      ParamSpec::integer("n_estimators", 10, 200, 10),
      ParamSpec::integer("min_sample_leaves", 1, 20, 1),
      ParamSpec::real("min_impurity_decrease", 0, 10, 0.25),
      ParamSpec::integer("max_depth", 1, 20, 1),
      ParamSpec::categorical("criterion", {"squared", "absolute", "poisson"}),
  });
}

/// n uniform draws with replacement, deduplicated by id in draw order.
inline std::vector<Candidate> sample(const ConfigSpace& space, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample size must be >= 1");
  Rng rng(seed);
  std::vector<Candidate> out;
  out.reserve(n);
  std::unordered_set<std::uint64_t> seen;
  std::vector<std::uint32_t> index(space.size());
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < space.size(); ++i)
      index[i] = static_cast<std::uint32_t>(rng.index(space[i].grid_size()));
    auto c = space.make(index);
    if (seen.insert(c.id).second) out.push_back(std::move(c));
  }
  return out;
}

/// Lazy cross product of every stride-th grid point, in lexicographic order.
class GridEnumeration {
 public:
  GridEnumeration(const ConfigSpace& space, std::vector<std::size_t> strides)
      : space_(&space), strides_(std::move(strides)) {
    if (strides_.size() != space.size())
      throw std::invalid_argument("one stride per parameter is required");
    counts_.resize(strides_.size());
    for (std::size_t i = 0; i < strides_.size(); ++i) {
      if (strides_[i] < 1) throw std::invalid_argument("strides must be >= 1");
      const auto g = space[i].grid_size();
      counts_[i] = (g + strides_[i] - 1) / strides_[i];
    }
  }

  std::uint64_t size() const noexcept {
    std::uint64_t n = 1;
    for (auto c : counts_) n *= c;
    return n;
  }

  Candidate at(std::uint64_t k) const {
    if (k >= size()) throw std::out_of_range("grid enumeration index out of range");
    std::vector<std::uint32_t> index(counts_.size());
    for (std::size_t i = counts_.size(); i-- > 0;) {
      index[i] = static_cast<std::uint32_t>((k % counts_[i]) * strides_[i]);
      k /= counts_[i];
    }
    return space_->make(index);
  }

  class iterator {
   public:
    using iterator_category = std::input_iterator_tag;
    using value_type = Candidate;
    using difference_type = std::ptrdiff_t;

    iterator() = default;
    iterator(const GridEnumeration* g, std::uint64_t k) : g_(g), k_(k) {}
    Candidate operator*() const { return g_->at(k_); }
    iterator& operator++() {
      ++k_;
      return *this;
    }
    iterator operator++(int) {
      auto t = *this;
      ++k_;
      return t;
    }
    friend bool operator==(const iterator& a, const iterator& b) { return a.k_ == b.k_; }

   private:
    const GridEnumeration* g_ = nullptr;
    std::uint64_t k_ = 0;
  };

  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, size()}; }

  std::vector<Candidate> materialize() const {
    std::vector<Candidate> out;
    out.reserve(size());
    for (auto c : *this) out.push_back(std::move(c));
    return out;
  }

 private:
  const ConfigSpace* space_;
  std::vector<std::size_t> strides_;
  std::vector<std::uint64_t> counts_;
};

inline GridEnumeration enumerate(const ConfigSpace& space, std::vector<std::size_t> strides) {
  return GridEnumeration(space, std::move(strides));
}

/// Parses a space definition: one INI section per parameter, e.g.
///
///   [n_estimators]
///   kind = integer
///   min = 10
///   max = 200
///   step = 10
///
///   [criterion]
///   kind = categorical
///   choices = squared, absolute, poisson
///
/// Sections keep file order.
inline ConfigSpace parse_space(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("space file: ") + e.what());
  }
  std::vector<ParamSpec> params;
  for (const auto& [name, section] : tree) {
    if (section.empty()) throw std::invalid_argument("space file: key outside a section: " + name);
    const auto kind = boost::algorithm::to_lower_copy(section.get<std::string>("kind", ""));
    try {
      if (kind == "categorical") {
        std::vector<std::string> choices;
        auto raw = section.get<std::string>("choices");
        boost::algorithm::split(choices, raw, boost::algorithm::is_any_of(","));
        for (auto& c : choices) boost::algorithm::trim(c);
        std::erase_if(choices, [](const std::string& c) { return c.empty(); });
        params.push_back(ParamSpec::categorical(name, std::move(choices)));
      } else if (kind == "integer" || kind == "real") {
        const auto lo = section.get<double>("min");
        const auto hi = section.get<double>("max");
        const auto step = section.get<double>("step", 1.0);
        params.push_back(kind == "integer" ? ParamSpec::integer(name, lo, hi, step)
                                           : ParamSpec::real(name, lo, hi, step));
      } else {
        throw std::invalid_argument("space file: [" + name + "] has unknown kind '" + kind + "'");
      }
    } catch (const pt::ptree_error& e) {
      throw std::invalid_argument("space file: [" + name + "] " + e.what());
    }
  }
  return ConfigSpace(std::move(params));
}

inline ConfigSpace load_space(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open space file " + path.string());
  return parse_space(in);
}

}  // namespace hpo
