#pragma once

// Okapi BM25 over an in-memory inverted index: scoring, top-k retrieval,
// grid tuning, and a versioned binary index file.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "curricula/analyzer.hpp"
#include "curricula/binary_io.hpp"
#include "curricula/error.hpp"
#include "curricula/metrics.hpp"
#include "curricula/types.hpp"

namespace curricula {

struct BM25Params {
  double k1 = 0.9;
  double b = 0.4;

  bool operator==(const BM25Params&) const = default;
};

inline void check_params(const BM25Params& p) {
  if (!(p.k1 >= 0.0) || !(p.b >= 0.0 && p.b <= 1.0)) {
    throw InvalidArgument("BM25 parameters out of range (k1 >= 0, 0 <= b <= 1)");
  }
}

struct Posting {
  std::uint32_t doc = 0;  // internal id
  std::uint32_t tf = 0;

  bool operator==(const Posting&) const = default;
};

class InvertedIndex {
 public:
  InvertedIndex() = default;

  // Internal ids follow doc_id order, so comparing internal ids compares doc_ids.
  InvertedIndex(const std::map<std::string, Document>& corpus, AnalyzerConfig config)
      : analyzer_(config) {
    if (corpus.empty()) throw InvalidArgument("build_index: empty corpus");
    doc_ids_.reserve(corpus.size());
    doc_terms_.reserve(corpus.size());
    for (const auto& [id, doc] : corpus) {
      doc_index_.emplace(id, static_cast<std::uint32_t>(doc_ids_.size()));
      doc_ids_.push_back(id);
      std::vector<std::uint32_t> seq;
      for (auto& tok : analyzer_(doc.text)) seq.push_back(intern(std::move(tok)));
      doc_terms_.push_back(std::move(seq));
    }
    finalize();
  }

  const Analyzer& analyzer() const { return analyzer_; }
  std::size_t doc_count() const { return doc_ids_.size(); }
  double avg_doc_length() const { return avg_doc_length_; }
  std::size_t vocabulary_size() const { return terms_.size(); }
  const std::vector<std::string>& vocabulary() const { return terms_; }

  std::optional<std::uint32_t> term_id(const std::string& term) const {
    auto it = term_index_.find(term);
    if (it == term_index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::uint32_t> doc_internal_id(const std::string& doc_id) const {
    auto it = doc_index_.find(doc_id);
    if (it == doc_index_.end()) return std::nullopt;
    return it->second;
  }

  std::uint32_t require_doc(const std::string& doc_id) const {
    auto id = doc_internal_id(doc_id);
    if (!id) throw DataError("unknown document '" + doc_id + "'");
    return *id;
  }

  const std::string& doc_id(std::uint32_t internal) const { return doc_ids_.at(internal); }
  std::uint32_t doc_length(std::uint32_t internal) const {
    return static_cast<std::uint32_t>(doc_terms_.at(internal).size());
  }
  const std::vector<std::uint32_t>& doc_terms(std::uint32_t internal) const { return doc_terms_.at(internal); }
  const std::vector<Posting>& postings(std::uint32_t term) const { return postings_.at(term); }
  std::size_t document_frequency(std::uint32_t term) const { return postings_.at(term).size(); }

  std::uint32_t term_frequency(std::uint32_t term, std::uint32_t doc) const {
    const auto& plist = postings_.at(term);
    auto it = std::lower_bound(plist.begin(), plist.end(), doc,
                               [](const Posting& p, std::uint32_t d) { return p.doc < d; });
    return it != plist.end() && it->doc == doc ? it->tf : 0;
  }

  // ln(1 + (N - df + 0.5) / (df + 0.5))
  double idf(std::uint32_t term) const {
    const double n = static_cast<double>(doc_count());
    const double df = static_cast<double>(document_frequency(term));
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
  }

  std::vector<std::string> analyze(std::string_view text) const { return analyzer_(text); }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    binio::put_magic(out, kMagic);
    binio::put_uint<std::uint32_t>(out, kVersion);
    binio::put_uint<std::uint8_t>(out, analyzer_.config().stem ? 1 : 0);
    binio::put_uint<std::uint8_t>(out, analyzer_.config().stopwords ? 1 : 0);
    binio::put_uint<std::uint64_t>(out, terms_.size());
    for (const auto& t : terms_) binio::put_string(out, t);
    binio::put_uint<std::uint64_t>(out, doc_ids_.size());
    for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
      binio::put_string(out, doc_ids_[d]);
      binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(doc_terms_[d].size()));
      for (auto t : doc_terms_[d]) binio::put_uint<std::uint32_t>(out, t);
    }
    if (!out) throw DataError("write failed: " + path.string());
  }

  static InvertedIndex load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    binio::expect_magic(in, kMagic, "index");
    auto version = binio::get_uint<std::uint32_t>(in);
    if (version != kVersion) throw DataError("unsupported index version " + std::to_string(version));
    AnalyzerConfig cfg;
    cfg.stem = binio::get_uint<std::uint8_t>(in) != 0;
    cfg.stopwords = binio::get_uint<std::uint8_t>(in) != 0;
    InvertedIndex idx;
    idx.analyzer_ = Analyzer(cfg);
    auto nterms = binio::get_uint<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < nterms; ++i) idx.intern(binio::get_string(in));
    auto ndocs = binio::get_uint<std::uint64_t>(in);
    if (ndocs == 0) throw DataError("index has no documents");
    for (std::uint64_t d = 0; d < ndocs; ++d) {
      auto id = binio::get_string(in);
      if (!idx.doc_ids_.empty() && !(idx.doc_ids_.back() < id)) throw DataError("index doc ids out of order");
      idx.doc_index_.emplace(id, static_cast<std::uint32_t>(d));
      idx.doc_ids_.push_back(std::move(id));
      auto len = binio::get_uint<std::uint32_t>(in);
      std::vector<std::uint32_t> seq(len);
      for (auto& t : seq) {
        t = binio::get_uint<std::uint32_t>(in);
        if (t >= nterms) throw DataError("index term id out of range");
      }
      idx.doc_terms_.push_back(std::move(seq));
    }
    idx.finalize();
    return idx;
  }

  bool operator==(const InvertedIndex& o) const {
    return analyzer_.config() == o.analyzer_.config() && terms_ == o.terms_ && doc_ids_ == o.doc_ids_ &&
           doc_terms_ == o.doc_terms_ && postings_ == o.postings_;
  }

 private:
  static constexpr char kMagic[9] = "CLBM25IX";
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t intern(std::string term) {
    auto [it, inserted] = term_index_.emplace(term, static_cast<std::uint32_t>(terms_.size()));
    if (inserted) terms_.push_back(std::move(term));
    return it->second;
  }

  void finalize() {
    postings_.assign(terms_.size(), {});
    std::uint64_t total = 0;
    for (std::uint32_t d = 0; d < doc_terms_.size(); ++d) {
      total += doc_terms_[d].size();
      std::map<std::uint32_t, std::uint32_t> tf;
      for (auto t : doc_terms_[d]) ++tf[t];
      for (auto [t, f] : tf) postings_[t].push_back({d, f});
    }
    avg_doc_length_ = static_cast<double>(total) / static_cast<double>(doc_terms_.size());
  }

  Analyzer analyzer_;
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::uint32_t> term_index_;
  std::vector<std::string> doc_ids_;
  std::unordered_map<std::string, std::uint32_t> doc_index_;
  std::vector<std::vector<std::uint32_t>> doc_terms_;
  std::vector<std::vector<Posting>> postings_;
  double avg_doc_length_ = 0.0;
};

inline InvertedIndex build_index(const std::map<std::string, Document>& corpus,
                                 const AnalyzerConfig& config = {}) {
  return InvertedIndex(corpus, config);
}

namespace detail {

inline double bm25_term(double idf, double tf, double k1, double b, double len, double avglen) {
  return idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * len / avglen));
}

}  // namespace detail

// Sum over query terms (duplicates included) of the Okapi BM25 term weight.
inline double bm25_score(const InvertedIndex& index, const BM25Params& params,
                         const std::vector<std::string>& query_terms, std::uint32_t doc) {
  const double len = index.doc_length(doc);
  double score = 0.0;
  for (const auto& term : query_terms) {
    auto t = index.term_id(term);
    if (!t) continue;
    auto tf = index.term_frequency(*t, doc);
    if (tf == 0) continue;
    score += detail::bm25_term(index.idf(*t), tf, params.k1, params.b, len, index.avg_doc_length());
  }
  return score;
}

inline double bm25_score(const InvertedIndex& index, const BM25Params& params,
                         const std::vector<std::string>& query_terms, const std::string& doc_id) {
  return bm25_score(index, params, query_terms, index.require_doc(doc_id));
}

// Top-k documents matching at least one query term, by score descending with
// doc_id ascending on ties.
inline RunList retrieve(const InvertedIndex& index, const BM25Params& params,
                        const std::vector<std::string>& query_terms, std::size_t k,
                        const std::string& query_id = {}) {
  if (k == 0) throw InvalidArgument("retrieve: k must be >= 1");
  std::unordered_map<std::uint32_t, double> acc;
  for (const auto& term : query_terms) {
    auto t = index.term_id(term);
    if (!t) continue;
    const double idf = index.idf(*t);
    for (const auto& p : index.postings(*t)) {
      auto [it, inserted] = acc.try_emplace(p.doc, 0.0);
      it->second += detail::bm25_term(idf, p.tf, params.k1, params.b, index.doc_length(p.doc),
                                      index.avg_doc_length());
    }
  }
  std::vector<std::pair<std::uint32_t, double>> scored(acc.begin(), acc.end());
  auto better = [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  };
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
  RunList list;
  list.query_id = query_id;
  list.entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    list.entries.push_back({index.doc_id(scored[i].first), scored[i].second, static_cast<int>(i + 1)});
  }
  return list;
}

inline RunList retrieve(const InvertedIndex& index, const BM25Params& params, const Query& query,
                        std::size_t k) {
  return retrieve(index, params, index.analyze(query.text), k, query.query_id);
}

inline Runs retrieve_all(const InvertedIndex& index, const BM25Params& params,
                         const std::map<std::string, Query>& queries, std::size_t k) {
  Runs runs;
  for (const auto& [qid, q] : queries) runs.emplace(qid, retrieve(index, params, q, k));
  return runs;
}

// k1 in [0.1, 4.0] step 0.1 and b in [0.0, 1.0] step 0.05: 40 x 21 points.
inline std::vector<BM25Params> standard_bm25_grid() {
  std::vector<BM25Params> grid;
  for (int k = 1; k <= 40; ++k) {
    for (int b = 0; b <= 20; ++b) grid.push_back({k / 10.0, b / 20.0});
  }
  return grid;
}

struct TuneResult {
  BM25Params best;
  double best_value = 0.0;
  std::size_t evaluated = 0;
};

// Exhaustive grid search; ties go to the smaller k1, then the smaller b.
inline TuneResult tune_bm25(const InvertedIndex& index, const std::map<std::string, Query>& queries,
                            const Qrels& qrels, const MetricSpec& metric,
                            const std::vector<BM25Params>& grid, std::size_t depth = 1000) {
  if (grid.empty()) throw InvalidArgument("tune_bm25: empty grid");
  if (queries.empty()) throw InvalidArgument("tune_bm25: no tuning queries");
  std::map<std::string, std::vector<std::string>> analyzed;
  for (const auto& [qid, q] : queries) analyzed.emplace(qid, index.analyze(q.text));
  TuneResult result;
  bool have = false;
  for (const auto& params : grid) {
    check_params(params);
    Runs runs;
    for (const auto& [qid, terms] : analyzed) runs.emplace(qid, retrieve(index, params, terms, depth, qid));
    const double value = evaluate(runs, qrels, metric).mean;
    ++result.evaluated;
    const bool better =
        !have || value > result.best_value ||
        (value == result.best_value &&
         (params.k1 < result.best.k1 || (params.k1 == result.best.k1 && params.b < result.best.b)));
    if (better) {
      result.best = params;
      result.best_value = value;
      have = true;
    }
  }
  return result;
}

}  // namespace curricula
