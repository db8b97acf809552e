#pragma once

// Difficulty heuristics mapping a training sample to [0, 1] (1 = easy) from
// the first-stage ranking of its query: reciprocal rank, min-max normalized
// score, and the CDF of a Gaussian KDE over the ranking's scores.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "curricula/error.hpp"
#include "curricula/first_stage.hpp"
#include "curricula/types.hpp"

namespace curricula {

enum class Heuristic { none, recip, norm, kde };

// How recip and norm treat a document missing from the ranking.
enum class UnretrievedPolicy { zero, strict };

struct DifficultyConfig {
  Heuristic heuristic = Heuristic::recip;
  LossMode loss_mode = LossMode::pairwise;
  bool anti = false;
  UnretrievedPolicy unretrieved = UnretrievedPolicy::zero;

  bool operator==(const DifficultyConfig&) const = default;
};

inline const char* to_string(Heuristic h) {
  switch (h) {
    case Heuristic::none: return "none";
    case Heuristic::recip: return "recip";
    case Heuristic::norm: return "norm";
    case Heuristic::kde: return "kde";
  }
  return "?";
}

inline Heuristic parse_heuristic(const std::string& s) {
  if (s == "none") return Heuristic::none;
  if (s == "recip") return Heuristic::recip;
  if (s == "norm") return Heuristic::norm;
  if (s == "kde") return Heuristic::kde;
  throw InvalidArgument("unknown heuristic '" + s + "'");
}

// Abramowitz & Stegun 7.1.26; |error| <= 1.5e-7.
inline double erf_approx(double x) {
  constexpr double p = 0.3275911;
  constexpr double a1 = 0.254829592, a2 = -0.284496736, a3 = 1.421413741, a4 = -1.453152027,
                   a5 = 1.061405429;
  if (x == 0.0) return 0.0;
  const double ax = std::fabs(x);
  const double t = 1.0 / (1.0 + p * ax);
  const double y = 1.0 - (((((a5 * t + a4) * t) + a3) * t + a2) * t + a1) * t * std::exp(-ax * ax);
  return x < 0 ? -y : y;
}

inline double normal_cdf(double z) { return 0.5 * (1.0 + erf_approx(z / std::sqrt(2.0))); }

namespace detail {

inline const RunEntry* find_entry(const RunList& list, const std::string& doc_id) {
  for (const auto& e : list.entries) {
    if (e.doc_id == doc_id) return &e;
  }
  return nullptr;
}

inline void check_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument(std::string(what) + ": value outside [0, 1]");
}

}  // namespace detail

inline double recip(const RunList& list, const std::string& doc_id,
                    UnretrievedPolicy policy = UnretrievedPolicy::zero) {
  if (const auto* e = detail::find_entry(list, doc_id)) return 1.0 / e->rank;
  if (policy == UnretrievedPolicy::strict) {
    throw InvalidArgument("recip: document '" + doc_id + "' not in ranking for '" + list.query_id + "'");
  }
  return 0.0;
}

inline double min_max_normalize(double score, double lo, double hi) {
  if (hi == lo) return 0.5;
  return std::clamp((score - lo) / (hi - lo), 0.0, 1.0);
}

inline double norm_score(const RunList& list, const std::string& doc_id,
                         UnretrievedPolicy policy = UnretrievedPolicy::zero) {
  if (list.empty()) throw InvalidArgument("norm_score: empty ranking");
  const auto* e = detail::find_entry(list, doc_id);
  if (!e) {
    if (policy == UnretrievedPolicy::strict) {
      throw InvalidArgument("norm_score: document '" + doc_id + "' not in ranking for '" + list.query_id + "'");
    }
    return 0.0;
  }
  auto [lo, hi] = std::minmax_element(list.entries.begin(), list.entries.end(),
                                      [](const RunEntry& a, const RunEntry& b) { return a.score < b.score; });
  return min_max_normalize(e->score, lo->score, hi->score);
}

struct KdeModel {
  std::vector<double> sample_points;
  double bandwidth = 1.0;
};

// Scott's rule with the population standard deviation. A zero-variance
// sample falls back to max(|mean|, 1) * 1e-3.
inline KdeModel fit_kde(std::vector<double> points) {
  if (points.empty()) throw InvalidArgument("fit_kde: empty sample");
  const double n = static_cast<double>(points.size());
  const double mean = std::accumulate(points.begin(), points.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : points) ss += (x - mean) * (x - mean);
  const double sigma = std::sqrt(ss / n);
  KdeModel model;
  model.bandwidth = sigma > 0.0 ? sigma * std::pow(n, -0.2) : std::max(std::fabs(mean), 1.0) * 1e-3;
  model.sample_points = std::move(points);
  return model;
}

inline KdeModel fit_kde(const RunList& list) {
  std::vector<double> scores;
  scores.reserve(list.entries.size());
  for (const auto& e : list.entries) scores.push_back(e.score);
  return fit_kde(std::move(scores));
}

inline double kde_cdf(const KdeModel& model, double x) {
  double sum = 0.0;
  for (double xi : model.sample_points) sum += normal_cdf((x - xi) / model.bandwidth);
  return sum / static_cast<double>(model.sample_points.size());
}

// Relevant samples keep the value; non-relevant samples get its complement.
inline double pointwise_difficulty(double value, int grade) { return grade > 0 ? value : 1.0 - value; }

inline double pairwise_difficulty(double pos_value, double neg_value) {
  return (pos_value - neg_value + 1.0) / 2.0;
}

inline double anti(double difficulty) {
  detail::check_unit(difficulty, "anti");
  return 1.0 - difficulty;
}

inline double difficulty_pointwise_recip(const RunList& list, const std::string& doc_id, int grade,
                                         UnretrievedPolicy policy = UnretrievedPolicy::zero) {
  return pointwise_difficulty(recip(list, doc_id, policy), grade);
}

inline double difficulty_pairwise_recip(const RunList& list, const std::string& pos, const std::string& neg,
                                        UnretrievedPolicy policy = UnretrievedPolicy::zero) {
  return pairwise_difficulty(recip(list, pos, policy), recip(list, neg, policy));
}

inline double difficulty_pointwise_norm(const RunList& list, const std::string& doc_id, int grade,
                                        UnretrievedPolicy policy = UnretrievedPolicy::zero) {
  return pointwise_difficulty(norm_score(list, doc_id, policy), grade);
}

inline double difficulty_pairwise_norm(const RunList& list, const std::string& pos, const std::string& neg,
                                       UnretrievedPolicy policy = UnretrievedPolicy::zero) {
  return pairwise_difficulty(norm_score(list, pos, policy), norm_score(list, neg, policy));
}

// First-stage score of a document for KDE purposes: the run's score when
// retrieved, else a direct BM25 evaluation when an index is supplied.
struct FirstStageScorer {
  const InvertedIndex* index = nullptr;
  BM25Params params;
  std::vector<std::string> query_terms;

  double operator()(const RunList& list, const std::string& doc_id) const {
    if (const auto* e = detail::find_entry(list, doc_id)) return e->score;
    if (!index) {
      throw InvalidArgument("kde: document '" + doc_id + "' not retrieved and no index to score it");
    }
    return bm25_score(*index, params, query_terms, doc_id);
  }
};

inline double difficulty_pointwise_kde(const RunList& list, const std::string& doc_id, int grade,
                                       const FirstStageScorer& scorer = {}) {
  return pointwise_difficulty(kde_cdf(fit_kde(list), scorer(list, doc_id)), grade);
}

inline double difficulty_pairwise_kde(const RunList& list, const std::string& pos, const std::string& neg,
                                      const FirstStageScorer& scorer = {}) {
  const auto model = fit_kde(list);
  return pairwise_difficulty(kde_cdf(model, scorer(list, pos)), kde_cdf(model, scorer(list, neg)));
}

// Precomputes per-query lookups so a whole training pool can be scored
// without rescanning rankings. Immutable after construction.
class DifficultyScorer {
 public:
  // `index` and `queries` are only consulted for KDE scoring of unretrieved
  // documents; both must outlive the scorer.
  DifficultyScorer(const Runs& runs, DifficultyConfig config, const InvertedIndex* index = nullptr,
                   BM25Params params = {}, const std::map<std::string, Query>* queries = nullptr)
      : config_(config), index_(index), params_(params), queries_(queries) {
    for (const auto& [qid, list] : runs) {
      PerQuery pq;
      for (const auto& e : list.entries) pq.lookup.emplace(e.doc_id, std::make_pair(e.rank, e.score));
      if (!list.empty()) {
        auto [lo, hi] = std::minmax_element(
            list.entries.begin(), list.entries.end(),
            [](const RunEntry& a, const RunEntry& b) { return a.score < b.score; });
        pq.lo = lo->score;
        pq.hi = hi->score;
        if (config.heuristic == Heuristic::kde) pq.kde = fit_kde(list);
      }
      per_query_.emplace(qid, std::move(pq));
    }
  }

  const DifficultyConfig& config() const { return config_; }

  double operator()(const TrainingSample& sample) const {
    double d = std::visit([this](const auto& s) { return raw(s); }, sample);
    return config_.anti ? anti(d) : d;
  }

  double operator()(const PointwiseSample& s) const { return (*this)(TrainingSample{s}); }
  double operator()(const PairwiseSample& s) const { return (*this)(TrainingSample{s}); }

  // The heuristic's per-document value (recip, norm or KDE CDF) before the
  // pointwise/pairwise combination.
  double document_value(const std::string& qid, const std::string& doc_id) const {
    const auto& pq = query(qid);
    auto it = pq.lookup.find(doc_id);
    switch (config_.heuristic) {
      case Heuristic::none:
        return 1.0;
      case Heuristic::recip:
        if (it != pq.lookup.end()) return 1.0 / it->second.first;
        return unretrieved(qid, doc_id);
      case Heuristic::norm:
        if (pq.lookup.empty()) throw InvalidArgument("norm_score: empty ranking for '" + qid + "'");
        if (it != pq.lookup.end()) return min_max_normalize(it->second.second, pq.lo, pq.hi);
        return unretrieved(qid, doc_id);
      case Heuristic::kde: {
        if (!pq.kde) throw InvalidArgument("fit_kde: empty ranking for '" + qid + "'");
        double score = 0.0;
        if (it != pq.lookup.end()) {
          score = it->second.second;
        } else {
          if (!index_ || !queries_) {
            throw InvalidArgument("kde: document '" + doc_id + "' not retrieved and no index to score it");
          }
          auto q = queries_->find(qid);
          if (q == queries_->end()) throw InvalidArgument("kde: unknown query '" + qid + "'");
          score = bm25_score(*index_, params_, index_->analyze(q->second.text), doc_id);
        }
        return kde_cdf(*pq.kde, score);
      }
    }
    return 1.0;
  }

 private:
  struct PerQuery {
    std::unordered_map<std::string, std::pair<int, double>> lookup;  // doc -> (rank, score)
    double lo = 0.0, hi = 0.0;
    std::optional<KdeModel> kde;
  };

  const PerQuery& query(const std::string& qid) const {
    auto it = per_query_.find(qid);
    if (it == per_query_.end()) throw DataError("no first-stage ranking for query '" + qid + "'");
    return it->second;
  }

  double unretrieved(const std::string& qid, const std::string& doc_id) const {
    if (config_.unretrieved == UnretrievedPolicy::strict) {
      throw InvalidArgument("document '" + doc_id + "' not in ranking for '" + qid + "'");
    }
    return 0.0;
  }

  double raw(const PointwiseSample& s) const {
    if (config_.heuristic == Heuristic::none) return 1.0;
    return pointwise_difficulty(document_value(s.query_id, s.doc_id), s.grade);
  }

  double raw(const PairwiseSample& s) const {
    if (config_.heuristic == Heuristic::none) return 1.0;
    return pairwise_difficulty(document_value(s.query_id, s.pos_doc_id),
                               document_value(s.query_id, s.neg_doc_id));
  }

  DifficultyConfig config_;
  const InvertedIndex* index_;
  BM25Params params_;
  const std::map<std::string, Query>* queries_;
  std::unordered_map<std::string, PerQuery> per_query_;
};

// Sidecar TSV `qid \t doc_or_pair \t difficulty`; pairs are written `pos,neg`.
inline void write_difficulty_sidecar(const std::vector<TrainingSample>& samples, const DifficultyScorer& scorer,
                                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  char buf[32];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof buf, "%.6f", scorer(s));
    if (const auto* p = std::get_if<PairwiseSample>(&s)) {
      out << p->query_id << '\t' << p->pos_doc_id << ',' << p->neg_doc_id << '\t' << buf << '\n';
    } else {
      const auto& q = std::get<PointwiseSample>(s);
      out << q.query_id << '\t' << q.doc_id << '\t' << buf << '\n';
    }
  }
}

}  // namespace curricula
