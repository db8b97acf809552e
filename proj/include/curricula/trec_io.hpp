#pragma once

// Readers and writers for TREC-style run files, qrels, TSV training samples,
// corpus/query tables, and the on-disk dataset directory layout.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "curricula/error.hpp"
#include "curricula/types.hpp"

namespace curricula {

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return out;
}

inline bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(),
                     [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

inline std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

inline std::string format_score(double score) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", score);
  return buf;
}

}  // namespace detail

// Restores the RunList invariants: ranks 1..n, scores non-increasing.
// Sorts by score descending; ties keep their current relative order.
inline void rerank_by_score(RunList& list) {
  std::stable_sort(list.entries.begin(), list.entries.end(),
                   [](const RunEntry& a, const RunEntry& b) { return a.score > b.score; });
  for (std::size_t i = 0; i < list.entries.size(); ++i) list.entries[i].rank = static_cast<int>(i + 1);
}

inline bool satisfies_run_invariants(const RunList& list) {
  std::set<std::string_view> seen;
  for (std::size_t i = 0; i < list.entries.size(); ++i) {
    const auto& e = list.entries[i];
    if (e.rank != static_cast<int>(i + 1)) return false;
    if (i > 0 && e.score > list.entries[i - 1].score) return false;
    if (!seen.insert(e.doc_id).second) return false;
  }
  return true;
}

// Parses `qid Q0 docid rank score tag` lines. Lists come back sorted by rank;
// if the file's ranks are not 1..n or disagree with the scores, the list is
// re-ranked by score and a warning is emitted (to `warnings` if given, else stderr).
inline Runs read_run_file(const std::filesystem::path& path,
                          std::vector<std::string>* warnings = nullptr) {
  auto in = detail::open_in(path);
  Runs runs;
  std::map<std::string, std::set<std::string>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_blank(line)) continue;
    auto f = detail::split_ws(line);
    if (f.size() != 6) {
      throw DataError(path.string(), lineno,
                      "expected 6 fields, found " + std::to_string(f.size()));
    }
    auto rank = detail::parse_int(f[3]);
    auto score = detail::parse_double(f[4]);
    if (!rank) throw DataError(path.string(), lineno, "bad rank '" + std::string(f[3]) + "'");
    if (!score) throw DataError(path.string(), lineno, "bad score '" + std::string(f[4]) + "'");
    std::string qid(f[0]), docid(f[2]);
    if (!seen[qid].insert(docid).second) {
      throw DataError(path.string(), lineno, "duplicate entry for (" + qid + ", " + docid + ")");
    }
    auto& list = runs[qid];
    list.query_id = qid;
    list.entries.push_back({std::move(docid), *score, static_cast<int>(*rank)});
  }

  for (auto& [qid, list] : runs) {
    std::stable_sort(list.entries.begin(), list.entries.end(),
                     [](const RunEntry& a, const RunEntry& b) { return a.rank < b.rank; });
    if (!satisfies_run_invariants(list)) {
      std::string msg = path.string() + ": query " + qid +
                        " has inconsistent ranks; re-ranking by score";
      if (warnings) {
        warnings->push_back(std::move(msg));
      } else {
        std::cerr << "warning: " << msg << '\n';
      }
      rerank_by_score(list);
    }
  }
  return runs;
}

// Writes runs in query-id order. Each list is stably sorted by score and its
// rank column regenerated; scores use fixed 6-decimal formatting.
inline void write_run_file(const Runs& runs, std::string_view tag, std::ostream& out) {
  for (const auto& [qid, original] : runs) {
    RunList list = original;
    rerank_by_score(list);
    for (const auto& e : list.entries) {
      out << qid << " Q0 " << e.doc_id << ' ' << e.rank << ' ' << detail::format_score(e.score)
          << ' ' << tag << '\n';
    }
  }
}

inline void write_run_file(const Runs& runs, std::string_view tag,
                           const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  write_run_file(runs, tag, out);
  if (!out) throw DataError("write failed: " + path.string());
}

inline Qrels read_qrels(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  Qrels qrels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_blank(line)) continue;
    auto f = detail::split_ws(line);
    if (f.size() != 4) {
      throw DataError(path.string(), lineno,
                      "expected 4 fields, found " + std::to_string(f.size()));
    }
    auto grade = detail::parse_int(f[3]);
    if (!grade) throw DataError(path.string(), lineno, "non-integer grade '" + std::string(f[3]) + "'");
    if (!qrels.insert(std::string(f[0]), std::string(f[2]), static_cast<int>(*grade))) {
      throw DataError(path.string(), lineno,
                      "duplicate judgment for (" + std::string(f[0]) + ", " + std::string(f[2]) + ")");
    }
  }
  return qrels;
}

inline void write_qrels(const Qrels& qrels, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  for (const auto& [qid, docs] : qrels.all()) {
    for (const auto& [docid, grade] : docs) out << qid << " 0 " << docid << ' ' << grade << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

// TSV training samples: `qid \t pos \t neg` (pairwise) or `qid \t doc \t grade` (pointwise).
inline std::vector<TrainingSample> read_training_pairs(const std::filesystem::path& path,
                                                       LossMode mode) {
  auto in = detail::open_in(path);
  std::vector<TrainingSample> samples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_blank(line)) continue;
    auto f = detail::split_tabs(line);
    if (f.size() != 3) {
      throw DataError(path.string(), lineno,
                      "expected 3 tab-separated columns, found " + std::to_string(f.size()));
    }
    for (auto col : f) {
      if (col.empty()) throw DataError(path.string(), lineno, "empty column");
    }
    if (mode == LossMode::pairwise) {
      samples.emplace_back(PairwiseSample{std::string(f[0]), std::string(f[1]), std::string(f[2])});
    } else {
      auto grade = detail::parse_int(f[2]);
      if (!grade) throw DataError(path.string(), lineno, "non-integer grade '" + std::string(f[2]) + "'");
      samples.emplace_back(PointwiseSample{std::string(f[0]), std::string(f[1]), static_cast<int>(*grade)});
    }
  }
  return samples;
}

inline void write_training_pairs(const std::vector<PairwiseSample>& samples,
                                 const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  for (const auto& s : samples) out << s.query_id << '\t' << s.pos_doc_id << '\t' << s.neg_doc_id << '\n';
}

inline void write_training_points(const std::vector<PointwiseSample>& samples,
                                  const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  for (const auto& s : samples) out << s.query_id << '\t' << s.doc_id << '\t' << s.grade << '\n';
}

// Two-column `id \t text` tables used for both corpora and queries.
inline std::vector<std::pair<std::string, std::string>> read_id_text_tsv(
    const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::vector<std::pair<std::string, std::string>> rows;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_blank(line)) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DataError(path.string(), lineno, "expected `id<TAB>text`");
    }
    std::string id = line.substr(0, tab);
    std::string text = line.substr(tab + 1);
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (!ids.insert(id).second) throw DataError(path.string(), lineno, "duplicate id '" + id + "'");
    rows.emplace_back(std::move(id), std::move(text));
  }
  return rows;
}

inline std::map<std::string, Document> read_corpus(const std::filesystem::path& path) {
  std::map<std::string, Document> corpus;
  for (auto& [id, text] : read_id_text_tsv(path)) corpus.emplace(id, Document{id, std::move(text)});
  return corpus;
}

inline std::map<std::string, Query> read_queries(const std::filesystem::path& path) {
  std::map<std::string, Query> queries;
  std::size_t row = 0;
  for (auto& [id, text] : read_id_text_tsv(path)) {
    ++row;
    if (detail::is_blank(text)) throw DataError(path.string(), row, "empty query text for '" + id + "'");
    queries.emplace(id, Query{id, std::move(text)});
  }
  return queries;
}

inline void write_corpus(const std::map<std::string, Document>& corpus,
                         const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  for (const auto& [id, doc] : corpus) out << id << '\t' << doc.text << '\n';
}

inline void write_queries(const std::map<std::string, Query>& queries,
                          const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  for (const auto& [id, q] : queries) out << id << '\t' << q.text << '\n';
}

// Checks referential integrity; throws DataError describing the first violation.
inline void validate_dataset(const Dataset& ds) {
  for (const auto& [id, q] : ds.queries) {
    if (id.empty() || id != q.query_id) throw DataError("query with empty or mismatched id");
    if (detail::is_blank(q.text)) throw DataError("query '" + id + "' has empty text");
  }
  for (const auto& [id, d] : ds.corpus) {
    if (id.empty() || id != d.doc_id) throw DataError("document with empty or mismatched id");
  }
  for (const auto& [split, runs] : ds.runs) {
    for (const auto& [qid, list] : runs) {
      if (!ds.queries.count(qid)) {
        throw DataError(std::string(to_string(split)) + " run references unknown query '" + qid + "'");
      }
      if (!satisfies_run_invariants(list)) {
        throw DataError(std::string(to_string(split)) + " run for '" + qid + "' violates rank/score order");
      }
      for (const auto& e : list.entries) {
        if (!ds.corpus.count(e.doc_id)) {
          throw DataError("run for '" + qid + "' references unknown document '" + e.doc_id + "'");
        }
      }
    }
  }
  auto check = [&](const std::string& qid, const std::string& docid) {
    if (!ds.queries.count(qid)) throw DataError("training sample references unknown query '" + qid + "'");
    if (!ds.corpus.count(docid)) throw DataError("training sample references unknown document '" + docid + "'");
  };
  for (const auto& s : ds.pointwise_samples) check(s.query_id, s.doc_id);
  for (const auto& s : ds.pairwise_samples) {
    check(s.query_id, s.pos_doc_id);
    check(s.query_id, s.neg_doc_id);
  }
}

inline std::unordered_map<std::string, int> read_term_clusters(const std::filesystem::path& path) {
  std::unordered_map<std::string, int> clusters;
  std::size_t row = 0;
  for (auto& [token, id] : read_id_text_tsv(path)) {
    ++row;
    auto c = detail::parse_int(id);
    if (!c) throw DataError(path.string(), row, "non-integer cluster id");
    clusters.emplace(token, static_cast<int>(*c));
  }
  return clusters;
}

inline void write_term_clusters(const std::unordered_map<std::string, int>& clusters,
                                const std::filesystem::path& path) {
  std::map<std::string, int> ordered(clusters.begin(), clusters.end());
  auto out = detail::open_out(path);
  for (const auto& [token, c] : ordered) out << token << '\t' << c << '\n';
}

// Standard file names inside a dataset directory.
namespace layout {
inline constexpr const char* kCorpus = "corpus.tsv";
inline constexpr const char* kQueries = "queries.tsv";
inline constexpr const char* kQrels = "qrels.txt";
inline constexpr const char* kPairs = "train.pairs.tsv";
inline constexpr const char* kPoints = "train.points.tsv";
inline constexpr const char* kClusters = "clusters.tsv";
inline std::string run_file(Split s) { return std::string("run.") + to_string(s) + ".txt"; }
}  // namespace layout

inline Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  Dataset ds;
  ds.corpus = read_corpus(dir / layout::kCorpus);
  ds.queries = read_queries(dir / layout::kQueries);
  ds.qrels = read_qrels(dir / layout::kQrels);
  for (Split s : {Split::train, Split::validation, Split::test}) {
    auto p = dir / layout::run_file(s);
    if (fs::exists(p)) ds.runs[s] = read_run_file(p);
  }
  if (fs::exists(dir / layout::kPairs)) {
    for (auto& s : read_training_pairs(dir / layout::kPairs, LossMode::pairwise)) {
      ds.pairwise_samples.push_back(std::get<PairwiseSample>(std::move(s)));
    }
  }
  if (fs::exists(dir / layout::kPoints)) {
    for (auto& s : read_training_pairs(dir / layout::kPoints, LossMode::pointwise)) {
      ds.pointwise_samples.push_back(std::get<PointwiseSample>(std::move(s)));
    }
  }
  if (fs::exists(dir / layout::kClusters)) ds.term_clusters = read_term_clusters(dir / layout::kClusters);
  validate_dataset(ds);
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir, std::string_view tag) {
  std::filesystem::create_directories(dir);
  write_corpus(ds.corpus, dir / layout::kCorpus);
  write_queries(ds.queries, dir / layout::kQueries);
  write_qrels(ds.qrels, dir / layout::kQrels);
  for (const auto& [split, runs] : ds.runs) write_run_file(runs, tag, dir / layout::run_file(split));
  if (!ds.pairwise_samples.empty()) write_training_pairs(ds.pairwise_samples, dir / layout::kPairs);
  if (!ds.pointwise_samples.empty()) write_training_points(ds.pointwise_samples, dir / layout::kPoints);
  if (!ds.term_clusters.empty()) write_term_clusters(ds.term_clusters, dir / layout::kClusters);
}

}  // namespace curricula
