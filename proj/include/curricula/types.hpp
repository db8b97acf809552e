#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

namespace curricula {

struct Query {
  std::string query_id;
  std::string text;
};

struct Document {
  std::string doc_id;
  std::string text;
};

// Relevance judgments keyed by (query_id, doc_id). Grades are raw integers;
// binarization happens where a consumer needs it.
class Qrels {
 public:
  // Returns false if the pair was already judged.
  bool insert(const std::string& qid, const std::string& docid, int grade) {
    return judgments_[qid].emplace(docid, grade).second;
  }

  std::optional<int> grade(const std::string& qid, const std::string& docid) const {
    auto q = judgments_.find(qid);
    if (q == judgments_.end()) return std::nullopt;
    auto d = q->second.find(docid);
    if (d == q->second.end()) return std::nullopt;
    return d->second;
  }

  // Judgments of one query, ordered by doc_id; empty if the query is unjudged.
  const std::map<std::string, int>& for_query(const std::string& qid) const {
    static const std::map<std::string, int> kEmpty;
    auto q = judgments_.find(qid);
    return q == judgments_.end() ? kEmpty : q->second;
  }

  bool has_query(const std::string& qid) const { return judgments_.count(qid) != 0; }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [q, docs] : judgments_) n += docs.size();
    return n;
  }

  const std::map<std::string, std::map<std::string, int>>& all() const { return judgments_; }

  bool operator==(const Qrels&) const = default;

 private:
  std::map<std::string, std::map<std::string, int>> judgments_;
};

struct RunEntry {
  std::string doc_id;
  double score = 0.0;
  int rank = 0;  // 1-based

  bool operator==(const RunEntry&) const = default;
};

// One query's ranking: ranks 1..n consecutive, scores non-increasing, doc_ids unique.
struct RunList {
  std::string query_id;
  std::vector<RunEntry> entries;

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }

  bool operator==(const RunList&) const = default;
};

using Runs = std::map<std::string, RunList>;

struct PointwiseSample {
  std::string query_id;
  std::string doc_id;
  int grade = 0;

  bool operator==(const PointwiseSample&) const = default;
};

struct PairwiseSample {
  std::string query_id;
  std::string pos_doc_id;
  std::string neg_doc_id;

  bool operator==(const PairwiseSample&) const = default;
};

using TrainingSample = std::variant<PointwiseSample, PairwiseSample>;

enum class LossMode { pointwise, pairwise };

enum class Split { train, validation, test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

inline const char* to_string(LossMode m) {
  return m == LossMode::pointwise ? "pointwise" : "pairwise";
}

struct Dataset {
  std::map<std::string, Query> queries;
  std::map<std::string, Document> corpus;
  Qrels qrels;
  std::map<Split, Runs> runs;
  std::vector<PointwiseSample> pointwise_samples;
  std::vector<PairwiseSample> pairwise_samples;
  // Optional token -> topic cluster map used by the topical-match feature.
  std::unordered_map<std::string, int> term_clusters;

  const Runs& split_runs(Split s) const {
    static const Runs kEmpty;
    auto it = runs.find(s);
    return it == runs.end() ? kEmpty : it->second;
  }
};

}  // namespace curricula
