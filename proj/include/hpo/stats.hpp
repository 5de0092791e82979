#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hpo/objectives.hpp"

namespace hpo {

/// (median, 75th - 25th percentile).
inline std::pair<double, double> median_iqr(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("median_iqr of an empty sample");
  return {percentile(values, 50.0), percentile(values, 75.0) - percentile(values, 25.0)};
}

// ---------------------------------------------------------------------------
// Chi-square tail

namespace detail {

/// Regularized lower incomplete gamma P(a, x) by its power series.
inline double gamma_p_series(double a, double x) {
  double term = 1.0 / a, sum = term;
  for (int n = 1; n < 1000; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

/// Regularized upper incomplete gamma Q(a, x) by Lentz's continued fraction.
inline double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

inline double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw std::invalid_argument("gamma_q: need a > 0, x >= 0");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_fraction(a, x);
}

/// P(X >= x) for X ~ chi-square with `dof` degrees of freedom.
inline double chi_square_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return gamma_q(dof / 2.0, x / 2.0);
}

// ---------------------------------------------------------------------------
// Friedman / Nemenyi

/// Treatments x blocks. Rank 1 is the best value in a block.
struct TreatmentTable {
  std::vector<std::string> treatments;
  std::vector<std::vector<double>> values;  // [treatment][block]
  bool lower_is_better = true;

  std::size_t k() const noexcept { return treatments.size(); }
  std::size_t blocks() const noexcept { return values.empty() ? 0 : values.front().size(); }

  void validate() const {
    if (treatments.size() != values.size())
      throw std::invalid_argument("treatment table: names and rows differ");
    if (k() < 2) throw std::invalid_argument("treatment table needs >= 2 treatments");
    if (blocks() < 2) throw std::invalid_argument("treatment table needs >= 2 blocks");
    for (const auto& row : values) {
      if (row.size() != blocks()) throw std::invalid_argument("treatment table has missing cells");
      for (double v : row)
        if (!std::isfinite(v)) throw std::invalid_argument("treatment table has non-finite cells");
    }
  }
};

/// Within-block ranks with ties averaged, per treatment.
inline std::vector<std::vector<double>> block_ranks(const TreatmentTable& t) {
  t.validate();
  std::vector<std::vector<double>> ranks(t.k(), std::vector<double>(t.blocks()));
  std::vector<std::size_t> order(t.k());
  for (std::size_t b = 0; b < t.blocks(); ++b) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto key = [&](std::size_t j) { return t.lower_is_better ? t.values[j][b] : -t.values[j][b]; };
    std::sort(order.begin(), order.end(), [&](auto p, auto q) { return key(p) < key(q); });
    for (std::size_t i = 0; i < order.size();) {
      std::size_t e = i;
      while (e + 1 < order.size() && key(order[e + 1]) == key(order[i])) ++e;
      const double r = (static_cast<double>(i + e) / 2.0) + 1.0;
      for (std::size_t q = i; q <= e; ++q) ranks[order[q]][b] = r;
      i = e + 1;
    }
  }
  return ranks;
}

inline std::vector<double> mean_ranks(const TreatmentTable& t) {
  const auto ranks = block_ranks(t);
  std::vector<double> out(t.k());
  for (std::size_t j = 0; j < t.k(); ++j)
    out[j] = std::accumulate(ranks[j].begin(), ranks[j].end(), 0.0) /
             static_cast<double>(t.blocks());
  return out;
}

struct FriedmanResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::vector<double> mean_ranks;
};

inline FriedmanResult friedman(const TreatmentTable& t) {
  FriedmanResult r;
  r.mean_ranks = mean_ranks(t);
  const auto k = static_cast<double>(t.k());
  const auto n = static_cast<double>(t.blocks());
  double ss = 0.0;
  for (double m : r.mean_ranks) ss += m * m;
  r.statistic = 12.0 * n / (k * (k + 1.0)) * (ss - k * (k + 1.0) * (k + 1.0) / 4.0);
  if (std::abs(r.statistic) < 1e-12) r.statistic = 0.0;
  r.p_value = chi_square_sf(r.statistic, k - 1.0);
  return r;
}

/// q_0.05(k) / sqrt(2) for the studentized range with infinite dof, k = 2..20.
inline constexpr std::array<double, 19> kNemenyiQ05 = {
    1.959964, 2.343701, 2.569032, 2.727774, 2.849705, 2.948320, 3.030878,
    3.101730, 3.163684, 3.218654, 3.268004, 3.312739, 3.353618, 3.391230,
    3.426041, 3.458425, 3.488685, 3.517073, 3.543799};

inline double nemenyi_q(std::size_t k, double alpha = 0.05) {
  if (alpha != 0.05) throw std::invalid_argument("nemenyi: only alpha = 0.05 is tabulated");
  if (k < 2 || k > 20) throw std::invalid_argument("nemenyi: q table covers 2 <= k <= 20");
  return kNemenyiQ05[k - 2];
}

inline double critical_difference(std::size_t k, std::size_t n_blocks, double alpha = 0.05) {
  if (n_blocks < 1) throw std::invalid_argument("critical difference needs >= 1 block");
  const auto kd = static_cast<double>(k);
  return nemenyi_q(k, alpha) * std::sqrt(kd * (kd + 1.0) / (6.0 * static_cast<double>(n_blocks)));
}

/// Tier per treatment (1 = best). Walking treatments in mean-rank order, a new
/// tier opens once a rank sits at least `cd` above the current tier's first rank.
inline std::vector<int> rank_tiers(const std::vector<double>& ranks, double cd) {
  std::vector<std::size_t> order(ranks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto p, auto q) { return ranks[p] < ranks[q]; });
  std::vector<int> tier(ranks.size(), 1);
  int current = 1;
  double anchor = order.empty() ? 0.0 : ranks[order.front()];
  for (auto j : order) {
    if (ranks[j] - anchor >= cd) {
      ++current;
      anchor = ranks[j];
    }
    tier[j] = current;
  }
  return tier;
}

struct NemenyiResult {
  double cd = 0.0;
  std::vector<double> mean_ranks;
  std::vector<int> tiers;
};

inline NemenyiResult nemenyi(const TreatmentTable& t, double alpha = 0.05) {
  NemenyiResult r;
  r.mean_ranks = mean_ranks(t);
  r.cd = critical_difference(t.k(), t.blocks(), alpha);
  r.tiers = rank_tiers(r.mean_ranks, r.cd);
  return r;
}

// ---------------------------------------------------------------------------
// Reports

struct RankRow {
  std::string treatment;
  double median = 0.0;
  double iqr = 0.0;
  double mean_rank = 0.0;
  int tier = 1;
};

struct RankReport {
  std::string metric;
  std::string target;
  double statistic = 0.0;
  double p_value = 1.0;
  double cd = 0.0;
  std::vector<RankRow> rows;
};

/// Friedman gate, then Nemenyi tiers; a non-significant table is one tier.
inline RankReport rank_treatments(const TreatmentTable& t, std::string metric, std::string target,
                                  double alpha = 0.05) {
  RankReport rep;
  rep.metric = std::move(metric);
  rep.target = std::move(target);
  const auto fr = friedman(t);
  rep.statistic = fr.statistic;
  rep.p_value = fr.p_value;
  std::vector<int> tiers(t.k(), 1);
  if (fr.p_value < alpha) {
    const auto ny = nemenyi(t, alpha);
    rep.cd = ny.cd;
    tiers = ny.tiers;
  } else {
    rep.cd = critical_difference(t.k(), t.blocks(), alpha);
  }
  for (std::size_t j = 0; j < t.k(); ++j) {
    const auto [med, iqr] = median_iqr(t.values[j]);
    rep.rows.push_back({t.treatments[j], med, iqr, fr.mean_ranks[j], tiers[j]});
  }
  return rep;
}

namespace detail {

inline std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << (v == 0.0 ? 0.0 : v);
  return os.str();
}

}  // namespace detail

/// One Markdown sub-table per metric: treatments x targets, each cell
/// "median (iqr) tier".
inline void write_markdown(std::ostream& out, const std::vector<RankReport>& reports) {
  std::vector<std::string> metrics, targets;
  for (const auto& r : reports) {
    if (std::find(metrics.begin(), metrics.end(), r.metric) == metrics.end())
      metrics.push_back(r.metric);
    if (std::find(targets.begin(), targets.end(), r.target) == targets.end())
      targets.push_back(r.target);
  }
  for (const auto& m : metrics) {
    out << "## " << m << "\n\n| optimizer |";
    for (const auto& t : targets) out << ' ' << t << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < targets.size(); ++i) out << "---|";
    out << '\n';
    std::vector<std::string> names;
    for (const auto& r : reports)
      if (r.metric == m)
        for (const auto& row : r.rows)
          if (std::find(names.begin(), names.end(), row.treatment) == names.end())
            names.push_back(row.treatment);
    for (const auto& name : names) {
      out << "| " << name << " |";
      for (const auto& t : targets) {
        const RankRow* cell = nullptr;
        for (const auto& r : reports)
          if (r.metric == m && r.target == t)
            for (const auto& row : r.rows)
              if (row.treatment == name) cell = &row;
        if (cell)
          out << ' ' << detail::fixed(cell->median, 3) << " (" << detail::fixed(cell->iqr, 3)
              << ") " << cell->tier << " |";
        else
          out << " - |";
      }
      out << '\n';
    }
    out << "\nFriedman:";
    for (const auto& r : reports)
      if (r.metric == m)
        out << ' ' << r.target << " chi2=" << detail::fixed(r.statistic, 3)
            << " p=" << detail::fixed(r.p_value, 4) << " cd=" << detail::fixed(r.cd, 3) << ';';
    out << "\n\n";
  }
}

inline void write_csv(std::ostream& out, const std::vector<RankReport>& reports) {
  out << "metric,target,optimizer,median,iqr,mean_rank,tier,friedman_chi2,friedman_p,cd\n";
  for (const auto& r : reports)
    for (const auto& row : r.rows)
      out << r.metric << ',' << r.target << ',' << row.treatment << ','
          << detail::fixed(row.median, 6) << ',' << detail::fixed(row.iqr, 6) << ','
          << detail::fixed(row.mean_rank, 6) << ',' << row.tier << ','
          << detail::fixed(r.statistic, 6) << ',' << detail::fixed(r.p_value, 6) << ','
          << detail::fixed(r.cd, 6) << '\n';
}

}  // namespace hpo
