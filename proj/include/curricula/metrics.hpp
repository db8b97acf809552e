#pragma once

// Rank-quality metrics (MRR@k, P@1, MAP, R-Prec) and the paired t-test used
// to compare per-query results of two systems.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "curricula/error.hpp"
#include "curricula/types.hpp"

namespace curricula {

enum class MetricKind { mrr, p_at_1, map, r_prec };

struct MetricSpec {
  MetricKind kind = MetricKind::mrr;
  std::optional<int> k;         // truncation depth; only meaningful for mrr
  int relevance_threshold = 1;  // grade >= threshold counts as relevant

  static MetricSpec mrr_at(int k, int threshold = 1) { return {MetricKind::mrr, k, threshold}; }

  bool operator==(const MetricSpec&) const = default;
};

// Accepts "mrr@10", "mrr", "p@1", "map", "r-prec" (case-insensitive).
inline MetricSpec parse_metric(std::string name, int threshold = 1) {
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (name == "mrr") return {MetricKind::mrr, std::nullopt, threshold};
  if (name.rfind("mrr@", 0) == 0) {
    try {
      std::size_t used = 0;
      int k = std::stoi(name.substr(4), &used);
      if (used == name.size() - 4 && k >= 1) return {MetricKind::mrr, k, threshold};
    } catch (const std::exception&) {
    }
    throw InvalidArgument("bad metric depth in '" + name + "'");
  }
  if (name == "p@1" || name == "p_1") return {MetricKind::p_at_1, std::nullopt, threshold};
  if (name == "map") return {MetricKind::map, std::nullopt, threshold};
  if (name == "r-prec" || name == "rprec" || name == "r_prec") return {MetricKind::r_prec, std::nullopt, threshold};
  throw InvalidArgument("unknown metric '" + name + "'");
}

inline std::string metric_name(const MetricSpec& spec) {
  switch (spec.kind) {
    case MetricKind::mrr: return spec.k ? "mrr@" + std::to_string(*spec.k) : "mrr";
    case MetricKind::p_at_1: return "p@1";
    case MetricKind::map: return "map";
    case MetricKind::r_prec: return "r-prec";
  }
  return "?";
}

struct EvalResult {
  std::map<std::string, double> per_query;
  double mean = 0.0;
};

// Value for one ranked list, or nullopt when the query is excluded from the
// average (MAP and R-Prec skip queries with no relevant document).
inline std::optional<double> evaluate_query(const RunList& list, const std::map<std::string, int>& judged,
                                            const MetricSpec& spec) {
  auto relevant = [&](const std::string& docid) {
    auto it = judged.find(docid);
    return it != judged.end() && it->second >= spec.relevance_threshold;
  };
  std::size_t total_relevant = 0;
  for (const auto& [docid, grade] : judged) {
    if (grade >= spec.relevance_threshold) ++total_relevant;
  }

  switch (spec.kind) {
    case MetricKind::mrr: {
      std::size_t depth = spec.k ? static_cast<std::size_t>(*spec.k) : list.entries.size();
      depth = std::min(depth, list.entries.size());
      for (std::size_t i = 0; i < depth; ++i) {
        if (relevant(list.entries[i].doc_id)) return 1.0 / static_cast<double>(i + 1);
      }
      return 0.0;
    }
    case MetricKind::p_at_1:
      return !list.entries.empty() && relevant(list.entries.front().doc_id) ? 1.0 : 0.0;
    case MetricKind::map: {
      if (total_relevant == 0) return std::nullopt;
      double sum = 0.0;
      std::size_t hits = 0;
      for (std::size_t i = 0; i < list.entries.size(); ++i) {
        if (relevant(list.entries[i].doc_id)) {
          ++hits;
          sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
      }
      return sum / static_cast<double>(total_relevant);
    }
    case MetricKind::r_prec: {
      if (total_relevant == 0) return std::nullopt;
      std::size_t depth = std::min(total_relevant, list.entries.size());
      std::size_t hits = 0;
      for (std::size_t i = 0; i < depth; ++i) hits += relevant(list.entries[i].doc_id) ? 1 : 0;
      return static_cast<double>(hits) / static_cast<double>(total_relevant);
    }
  }
  return std::nullopt;
}

// Evaluates every run query in query-id order. Lists are read in entry order,
// which is rank order for any list satisfying the RunList invariants.
inline EvalResult evaluate(const Runs& runs, const Qrels& qrels, const MetricSpec& spec) {
  if (runs.empty()) throw InvalidArgument("evaluate: empty run set");
  EvalResult result;
  double sum = 0.0;
  for (const auto& [qid, list] : runs) {
    if (auto v = evaluate_query(list, qrels.for_query(qid), spec)) {
      result.per_query.emplace(qid, *v);
      sum += *v;
    }
  }
  result.mean = result.per_query.empty() ? 0.0 : sum / static_cast<double>(result.per_query.size());
  return result;
}

namespace stats {

// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

// I_x(a, b)
inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                          b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
inline double student_t_two_sided(double t, double df) {
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

}  // namespace stats

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
  // Differences had zero variance but nonzero mean; t is infinite and p is 0.
  bool degenerate = false;
};

inline TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InvalidArgument("paired_t_test: samples differ in length");
  const std::size_t n = a.size();
  if (n < 2) throw InvalidArgument("paired_t_test: need at least two pairs");
  std::vector<double> diff(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = a[i] - b[i];
    mean += diff[i];
  }
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double d : diff) ss += (d - mean) * (d - mean);
  TTestResult r;
  r.df = static_cast<double>(n - 1);
  const double var = ss / r.df;
  if (var == 0.0) {
    if (std::all_of(diff.begin(), diff.end(), [](double d) { return d == 0.0; })) {
      r.t = 0.0;
      r.p_value = 1.0;
    } else {
      r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p_value = 0.0;
      r.degenerate = true;
    }
    return r;
  }
  r.t = mean / std::sqrt(var / static_cast<double>(n));
  r.p_value = stats::student_t_two_sided(r.t, r.df);
  return r;
}

// Pairs values by query id; both maps must cover the same queries.
inline TTestResult paired_t_test(const std::map<std::string, double>& a,
                                 const std::map<std::string, double>& b) {
  if (a.size() != b.size()) throw InvalidArgument("paired_t_test: query sets differ");
  std::vector<double> va, vb;
  va.reserve(a.size());
  vb.reserve(b.size());
  for (const auto& [qid, v] : a) {
    auto it = b.find(qid);
    if (it == b.end()) throw InvalidArgument("paired_t_test: query '" + qid + "' missing from second sample");
    va.push_back(v);
    vb.push_back(it->second);
  }
  return paired_t_test(va, vb);
}

}  // namespace curricula
