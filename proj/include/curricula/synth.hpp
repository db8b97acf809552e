#pragma once

// Synthetic answer-ranking benchmark. Every query owns a handful of topic
// clusters; its "head" tokens form the query text and the other cluster
// members act as synonyms. Documents fall into four archetypes:
//
//   easy positive  relevant, many query-term matches
//   hard positive  relevant, few query-term matches, but topical synonyms
//   hard negative  non-relevant, many query-term matches, no topical signal
//   easy negative  non-relevant, few matches
//
// BM25 therefore handles the easy archetypes and fails on the hard ones,
// while the topical-match feature lets a trained ranker recover them.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "curricula/error.hpp"
#include "curricula/first_stage.hpp"
#include "curricula/rng.hpp"
#include "curricula/trec_io.hpp"
#include "curricula/types.hpp"

namespace curricula {

struct SynthConfig {
  int train_queries = 200;
  int validation_queries = 50;
  int test_queries = 50;
  int docs_per_query = 100;
  int vocab_size = 20000;
  int cluster_size = 5;
  int query_length = 4;
  int doc_length = 40;
  int relevant_per_query = 3;
  double hard_positive_rate = 0.6;
  double hard_negative_rate = 0.5;
  double noise_rate = 0.3;
  int judged_negatives_per_query = 10;
  int negatives_per_positive = 10;
  int run_depth = 100;
  AnalyzerConfig analyzer{};
  BM25Params bm25{};
  std::uint64_t seed = 1;

  void validate() const {
    auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (!rate_ok(hard_positive_rate) || !rate_ok(hard_negative_rate) || !rate_ok(noise_rate)) {
      throw InvalidArgument("synth: rates must lie in [0, 1]");
    }
    if (train_queries < 1 || validation_queries < 1 || test_queries < 1 || docs_per_query < 1 ||
        vocab_size < 1 || cluster_size < 2 || query_length < 1 || doc_length < 1 || relevant_per_query < 1 ||
        judged_negatives_per_query < 0 || negatives_per_positive < 1 || run_depth < 1) {
      throw InvalidArgument("synth: counts must be positive (cluster_size >= 2)");
    }
    if (relevant_per_query > docs_per_query) {
      throw InvalidArgument("synth: relevant_per_query exceeds docs_per_query");
    }
  }
};

enum class DocArchetype { easy_positive, hard_positive, hard_negative, easy_negative };

inline const char* to_string(DocArchetype a) {
  switch (a) {
    case DocArchetype::easy_positive: return "easy_positive";
    case DocArchetype::hard_positive: return "hard_positive";
    case DocArchetype::hard_negative: return "hard_negative";
    case DocArchetype::easy_negative: return "easy_negative";
  }
  return "?";
}

struct SynthDataset {
  Dataset dataset;
  std::map<std::string, DocArchetype> archetypes;  // by doc_id
  std::map<std::string, Split> query_split;
  Qrels true_qrels;                                // noise-free labels for every split
};

namespace detail {

struct ArchetypeProfile {
  double term_p;    // chance each query term appears
  double topic_p;   // chance each query term's synonym appears
  double phrase_p;  // chance an adjacent query bigram is planted
};

// Synonyms show up in hard positives only, so the topical feature is learnt
// from them or not at all.
inline ArchetypeProfile profile(DocArchetype a) {
  switch (a) {
    case DocArchetype::easy_positive: return {0.9, 0.0, 0.5};
    case DocArchetype::hard_positive: return {0.15, 0.8, 0.0};
    case DocArchetype::hard_negative: return {0.75, 0.05, 0.3};
    case DocArchetype::easy_negative: return {0.1, 0.05, 0.0};
  }
  return {0, 0, 0};
}

inline std::string token_name(int id) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "t%05d", id);
  return buf;
}

}  // namespace detail

inline SynthDataset generate(const SynthConfig& config) {
  config.validate();
  const int total_queries = config.train_queries + config.validation_queries + config.test_queries;
  const int topic_tokens = total_queries * config.query_length * config.cluster_size;
  const int background = config.vocab_size - topic_tokens;
  if (background < std::max(100, config.doc_length)) {
    throw InvalidArgument("synth: vocab_size " + std::to_string(config.vocab_size) + " too small; need at least " +
                          std::to_string(topic_tokens + std::max(100, config.doc_length)) +
                          " for distinct query topics");
  }

  Rng rng(config.seed);
  SynthDataset out;
  Dataset& ds = out.dataset;

  // Clusters are contiguous token ranges; shuffle which clusters each query gets.
  const int n_clusters = total_queries * config.query_length;
  std::vector<int> cluster_order(static_cast<std::size_t>(n_clusters));
  for (int c = 0; c < n_clusters; ++c) cluster_order[static_cast<std::size_t>(c)] = c;
  rng.shuffle(cluster_order);
  for (int c = 0; c < n_clusters; ++c) {
    for (int k = 0; k < config.cluster_size; ++k) {
      ds.term_clusters.emplace(detail::token_name(c * config.cluster_size + k), c);
    }
  }

  auto background_token = [&] { return topic_tokens + static_cast<int>(rng.index(static_cast<std::uint64_t>(background))); };

  int doc_counter = 0;
  struct Pending {
    std::string qid;
    Split split;
    std::vector<std::string> positives;
    std::vector<std::string> negatives;
  };
  std::vector<Pending> pending;

  int qcounter = 0;
  for (Split split : {Split::train, Split::validation, Split::test}) {
    const int count = split == Split::train        ? config.train_queries
                      : split == Split::validation ? config.validation_queries
                                                   : config.test_queries;
    const char* prefix = split == Split::train ? "tr" : split == Split::validation ? "va" : "te";
    for (int qi = 0; qi < count; ++qi, ++qcounter) {
      char qbuf[24];
      std::snprintf(qbuf, sizeof qbuf, "%s%04d", prefix, qi + 1);
      const std::string qid = qbuf;

      std::vector<int> heads, clusters;
      for (int t = 0; t < config.query_length; ++t) {
        const int c = cluster_order[static_cast<std::size_t>(qcounter * config.query_length + t)];
        clusters.push_back(c);
        heads.push_back(c * config.cluster_size);
      }
      std::string qtext;
      for (int h : heads) qtext += (qtext.empty() ? "" : " ") + detail::token_name(h);
      ds.queries.emplace(qid, Query{qid, qtext});
      out.query_split.emplace(qid, split);

      std::vector<DocArchetype> kinds;
      for (int d = 0; d < config.docs_per_query; ++d) {
        if (d < config.relevant_per_query) {
          kinds.push_back(rng.bernoulli(config.hard_positive_rate) ? DocArchetype::hard_positive
                                                                   : DocArchetype::easy_positive);
        } else {
          kinds.push_back(rng.bernoulli(config.hard_negative_rate) ? DocArchetype::hard_negative
                                                                   : DocArchetype::easy_negative);
        }
      }
      rng.shuffle(kinds);

      Pending p{qid, split, {}, {}};
      for (DocArchetype kind : kinds) {
        char dbuf[24];
        std::snprintf(dbuf, sizeof dbuf, "D%07d", ++doc_counter);
        const std::string docid = dbuf;
        const auto prof = detail::profile(kind);

        const int len = std::max(1, config.doc_length / 2 +
                                        static_cast<int>(rng.index(static_cast<std::uint64_t>(config.doc_length) + 1)));
        std::vector<int> tokens;
        for (int i = 0; i < len; ++i) tokens.push_back(background_token());
        for (int t = 0; t < config.query_length; ++t) {
          if (rng.bernoulli(prof.term_p)) {
            int tf = 1 + (rng.bernoulli(0.5) ? 1 : 0) + (rng.bernoulli(0.25) ? 1 : 0);
            for (int r = 0; r < tf; ++r) tokens.push_back(heads[static_cast<std::size_t>(t)]);
          }
          if (rng.bernoulli(prof.topic_p)) {
            const int mate = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(config.cluster_size - 1)));
            tokens.push_back(clusters[static_cast<std::size_t>(t)] * config.cluster_size + mate);
          }
        }
        rng.shuffle(tokens);
        if (config.query_length >= 2 && rng.bernoulli(prof.phrase_p)) {
          const auto t = rng.index(static_cast<std::uint64_t>(config.query_length - 1));
          const auto pos = rng.index(tokens.size() + 1);
          tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(pos),
                        {heads[static_cast<std::size_t>(t)], heads[static_cast<std::size_t>(t + 1)]});
        }
        std::string text;
        for (int tok : tokens) text += (text.empty() ? "" : " ") + detail::token_name(tok);
        ds.corpus.emplace(docid, Document{docid, std::move(text)});
        out.archetypes.emplace(docid, kind);

        const bool relevant = kind == DocArchetype::easy_positive || kind == DocArchetype::hard_positive;
        (relevant ? p.positives : p.negatives).push_back(docid);
        if (relevant) out.true_qrels.insert(qid, docid, 1);
      }
      pending.push_back(std::move(p));
    }
  }

  auto index = build_index(ds.corpus, config.analyzer);
  for (const auto& p : pending) {
    ds.runs[p.split].emplace(p.qid, retrieve(index, config.bm25, ds.queries.at(p.qid), static_cast<std::size_t>(config.run_depth)));
  }

  // Training labels: judged positives plus judged negatives, each flipped
  // with probability noise_rate. Evaluation splits keep the true labels.
  for (const auto& p : pending) {
    if (p.split != Split::train) {
      for (const auto& d : p.positives) ds.qrels.insert(p.qid, d, 1);
      continue;
    }
    std::vector<std::string> judged_neg = p.negatives;
    rng.shuffle(judged_neg);
    judged_neg.resize(std::min(judged_neg.size(), static_cast<std::size_t>(config.judged_negatives_per_query)));
    std::vector<std::pair<std::string, int>> labels;
    for (const auto& d : p.positives) labels.emplace_back(d, 1);
    for (const auto& d : judged_neg) labels.emplace_back(d, 0);
    std::sort(labels.begin(), labels.end());
    std::vector<std::string> labelled_pos;
    for (auto& [d, g] : labels) {
      if (rng.bernoulli(config.noise_rate)) g = 1 - g;
      ds.qrels.insert(p.qid, d, g);
      ds.pointwise_samples.push_back({p.qid, d, g});
      if (g > 0) labelled_pos.push_back(d);
    }

    const auto& run = ds.runs[Split::train].at(p.qid);
    std::vector<std::string> candidates;
    for (const auto& e : run.entries) {
      if (std::find(labelled_pos.begin(), labelled_pos.end(), e.doc_id) == labelled_pos.end()) {
        candidates.push_back(e.doc_id);
      }
    }
    if (candidates.empty()) continue;
    for (const auto& pos : labelled_pos) {
      auto pool = candidates;
      rng.shuffle(pool);
      pool.resize(std::min(pool.size(), static_cast<std::size_t>(config.negatives_per_positive)));
      for (auto& neg : pool) ds.pairwise_samples.push_back({p.qid, pos, std::move(neg)});
    }
  }

  validate_dataset(ds);
  return out;
}

inline void write_synth_dataset(const SynthDataset& synth, const std::filesystem::path& dir) {
  save_dataset(synth.dataset, dir, "bm25");
  std::ofstream out(dir / "archetypes.tsv");
  if (!out) throw DataError("cannot write " + (dir / "archetypes.tsv").string());
  for (const auto& [doc, a] : synth.archetypes) out << doc << '\t' << to_string(a) << '\n';
}

}  // namespace curricula
