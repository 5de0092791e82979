#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/algorithm/string.hpp>

#include "hpo/forest.hpp"
#include "hpo/objectives.hpp"
#include "hpo/rng.hpp"

namespace hpo {

inline constexpr std::string_view kDateColumn = "dates";

/// Monthly project-health indicators, in canonical column order.
inline constexpr std::array<std::string_view, 14> kIndicatorColumns = {
    "monthly commits",      "monthly commit comments", "monthly contributors",
    "monthly open PRs",     "monthly closed PRs",      "monthly merged PRs",
    "monthly PR mergers",   "monthly PR comments",     "monthly open issues",
    "monthly closed issues", "monthly issue comments", "monthly stargazer",
    "monthly forks",        "monthly watchers"};

enum class Target { commits, closed_prs, closed_issues };

inline constexpr std::array<Target, 3> kAllTargets = {Target::commits, Target::closed_prs,
                                                      Target::closed_issues};

inline std::string_view to_string(Target t) {
  switch (t) {
    case Target::commits: return "commits";
    case Target::closed_prs: return "closed_prs";
    case Target::closed_issues: return "closed_issues";
  }
  return "?";
}

inline Target parse_target(std::string_view s) {
  for (auto t : kAllTargets)
    if (to_string(t) == s) return t;
  throw std::invalid_argument("unknown target '" + std::string(s) +
                              "' (expected commits, closed_prs or closed_issues)");
}

/// Column index of a target within kIndicatorColumns.
inline std::size_t target_column(Target t) {
  switch (t) {
    case Target::commits: return 0;
    case Target::closed_prs: return 4;
    case Target::closed_issues: return 9;
  }
  return 0;
}

struct YearMonth {
  int year = 0;
  int month = 1;  // 1..12

  int serial() const noexcept { return year * 12 + (month - 1); }
  friend auto operator<=>(const YearMonth&, const YearMonth&) = default;

  std::string str() const {
    std::ostringstream os;
    os << std::setfill('0') << std::setw(4) << year << '-' << std::setw(2) << month;
    return os.str();
  }

  static YearMonth from_serial(int s) { return {s / 12, s % 12 + 1}; }

  /// Accepts YYYY-MM or YYYY-MM-DD.
  static YearMonth parse(std::string_view s) {
    auto bad = [&] { return std::invalid_argument("unparseable date '" + std::string(s) + "'"); };
    if (s.size() != 7 && s.size() != 10) throw bad();
    auto digits = [&](std::size_t from, std::size_t len) {
      int v = 0;
      for (std::size_t i = from; i < from + len; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) throw bad();
        v = v * 10 + (s[i] - '0');
      }
      return v;
    };
    if (s[4] != '-' || (s.size() == 10 && s[7] != '-')) throw bad();
    YearMonth ym{digits(0, 4), digits(5, 2)};
    if (ym.month < 1 || ym.month > 12) throw bad();
    if (s.size() == 10) {
      const int day = digits(8, 2);
      if (day < 1 || day > 31) throw bad();
    }
    return ym;
  }
};

struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One project's monthly indicator counts.
struct ProjectSeries {
  std::string project_id;
  std::vector<YearMonth> months;
  Matrix counts;  // months x 14, canonical column order

  std::size_t length() const noexcept { return months.size(); }
  double at(std::size_t month, std::size_t column) const { return counts(month, column); }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(boost::algorithm::trim_copy(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(boost::algorithm::trim_copy(cur));
  return out;
}

inline std::string normalize_header(std::string s) {
  boost::algorithm::trim(s);
  boost::algorithm::to_lower(s);
  std::string out;
  bool space = false;
  for (char ch : s) {
    if (std::isspace(static_cast<unsigned char>(ch)) || ch == '_') {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += ch;
  }
  return out;
}

}  // namespace detail

/// Parses a monthly-indicator CSV. Header names are case-insensitive and may
/// come in any order; extra columns are ignored.
inline ProjectSeries parse_series(std::istream& in, std::string project_id) {
  std::string line;
  if (!std::getline(in, line)) throw LoadError(project_id + ": empty file");
  const auto header = detail::split_csv_line(line);
  auto locate = [&](std::string_view name) -> std::size_t {
    const auto want = detail::normalize_header(std::string(name));
    for (std::size_t i = 0; i < header.size(); ++i)
      if (detail::normalize_header(header[i]) == want) return i;
    throw LoadError(project_id + ": missing column '" + std::string(name) + "'");
  };
  const std::size_t date_col = locate(kDateColumn);
  std::array<std::size_t, kIndicatorColumns.size()> cols{};
  for (std::size_t c = 0; c < cols.size(); ++c) cols[c] = locate(kIndicatorColumns[c]);

  ProjectSeries s;
  s.project_id = std::move(project_id);
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (boost::algorithm::trim_copy(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    const auto where = [&] { return s.project_id + ": line " + std::to_string(line_no); };
    if (fields.size() < header.size()) throw LoadError(where() + ": too few fields");
    YearMonth ym;
    try {
      ym = YearMonth::parse(fields[date_col]);
    } catch (const std::invalid_argument& e) {
      throw LoadError(where() + ", column 'dates': " + e.what());
    }
    if (!s.months.empty()) {
      const auto prev = s.months.back().serial();
      if (ym.serial() == prev) throw LoadError(where() + ": duplicate month " + ym.str());
      if (ym.serial() < prev) throw LoadError(where() + ": month " + ym.str() + " out of order");
      if (ym.serial() != prev + 1) throw LoadError(where() + ": gap before month " + ym.str());
    }
    s.months.push_back(ym);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto& raw = fields[cols[c]];
      double v = 0.0;
      std::size_t used = 0;
      try {
        v = std::stod(raw, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      const auto col = std::string(kIndicatorColumns[c]);
      if (used != raw.size() || raw.empty())
        throw LoadError(where() + ", column '" + col + "': not a number: '" + raw + "'");
      if (v < 0.0) throw LoadError(where() + ", column '" + col + "': negative count");
      if (v != std::floor(v)) throw LoadError(where() + ", column '" + col + "': not an integer");
      values.push_back(v);
    }
  }
  s.counts.rows = s.months.size();
  s.counts.cols = kIndicatorColumns.size();
  s.counts.data = std::move(values);
  return s;
}

inline ProjectSeries load_series(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  return parse_series(in, path.stem().string());
}

inline void write_series(std::ostream& out, const ProjectSeries& s) {
  out << kDateColumn;
  for (auto c : kIndicatorColumns) out << ',' << c;
  out << '\n';
  for (std::size_t m = 0; m < s.length(); ++m) {
    out << s.months[m].str();
    for (std::size_t c = 0; c < kIndicatorColumns.size(); ++c)
      out << ',' << static_cast<std::uint64_t>(s.at(m, c));
    out << '\n';
  }
}

inline constexpr std::size_t kDefaultHorizon = 12;
inline constexpr std::size_t kMinTrainRows = 12;

/// Predict month `test` (0-based row) from rows [0, train_end).
struct TrainTestSplit {
  std::size_t train_end = 0;
  std::size_t test = 0;
  Target target = Target::commits;
  std::size_t horizon = kDefaultHorizon;

  std::size_t train_length() const noexcept { return train_end; }
  /// 1-based month number being predicted.
  std::size_t predicted_month() const noexcept { return test + 1; }
};

/// Rolling 12-month-ahead splits: each of the last `horizon` months m
/// (1-based) is predicted from the first m - horizon rows, provided that
/// prefix holds at least `min_train` rows.
inline std::vector<TrainTestSplit> build_splits(const ProjectSeries& s, Target target,
                                                std::size_t horizon = kDefaultHorizon,
                                                std::size_t min_train = kMinTrainRows) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  const std::size_t L = s.length();
  std::vector<TrainTestSplit> out;
  const std::size_t first = std::max(L >= horizon ? L - horizon + 1 : 1, horizon + min_train);
  for (std::size_t m = first; m <= L; ++m) out.push_back({m - horizon, m - 1, target, horizon});
  if (out.empty())
    throw std::invalid_argument(s.project_id + ": series of " + std::to_string(L) +
                                " months is too short for " + std::to_string(horizon) +
                                "-month-ahead splits");
  return out;
}

/// Naive baseline: every test month is guessed as the median of the
/// training-window targets.
inline std::vector<double> naive_guesses(std::span<const double> train_targets,
                                         std::size_t test_months) {
  if (train_targets.empty()) throw std::invalid_argument("naive_guesses: empty training window");
  const double g = median({train_targets.begin(), train_targets.end()});
  return std::vector<double>(test_months, g);
}

/// Feature matrix (the 13 non-target indicators) and labels for rows [begin, end).
inline std::pair<Matrix, std::vector<double>> design(const ProjectSeries& s, Target target,
                                                     std::size_t begin, std::size_t end) {
  const std::size_t tc = target_column(target);
  Matrix x(end - begin, kIndicatorColumns.size() - 1);
  std::vector<double> y(end - begin);
  for (std::size_t r = begin; r < end; ++r) {
    std::size_t k = 0;
    for (std::size_t c = 0; c < kIndicatorColumns.size(); ++c) {
      if (c == tc) continue;
      x(r - begin, k++) = s.at(r, c);
    }
    y[r - begin] = s.at(r, tc);
  }
  return {std::move(x), std::move(y)};
}

/// Seeded synthetic project: a latent log-activity AR(1) process drives
/// Poisson counts for every indicator.
inline ProjectSeries synthetic_series(std::size_t n_months, std::uint64_t seed,
                                      std::string project_id = "synthetic") {
  if (n_months < 24) throw std::invalid_argument("synthetic series needs >= 24 months");
  // Typical monthly magnitudes and sensitivity to the latent activity level.
  static constexpr std::array<double, 14> base = {40, 4, 4, 5, 2, 4, 1.5, 15, 6, 10, 30, 30, 8, 1};
  static constexpr std::array<double, 14> load = {1.0, 0.8, 0.7, 0.9, 1.1, 0.9, 0.6, 1.2,
                                                  0.8, 1.0, 1.1, 0.5, 0.6, 0.4};
  Rng rng(seed);
  const double scale = std::exp(0.8 * rng.normal());
  const double drift = 0.04 * rng.normal();
  const double phi = 0.6 + 0.35 * rng.uniform();
  ProjectSeries s;
  s.project_id = std::move(project_id);
  s.counts = Matrix(n_months, kIndicatorColumns.size());
  const int start = YearMonth{2016, 1}.serial() + static_cast<int>(rng.index(24));
  double z = 0.0;
  for (std::size_t m = 0; m < n_months; ++m) {
    z = phi * z + drift + 0.35 * rng.normal();
    s.months.push_back(YearMonth::from_serial(start + static_cast<int>(m)));
    for (std::size_t c = 0; c < base.size(); ++c) {
      const double noise = 0.15 * rng.normal();
      const double rate = scale * base[c] * std::exp(load[c] * z + noise);
      s.counts(m, c) = static_cast<double>(rng.poisson(std::min(rate, 5000.0)));
    }
  }
  return s;
}

}  // namespace hpo
