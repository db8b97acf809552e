#pragma once

// End-to-end experiment harness: prepares features and re-ranking pools for
// every seed, trains the unweighted baseline and each heuristic over the m
// grid, picks m per heuristic on validation, then runs the anti-curriculum
// and static (m = inf) counterparts of the best heuristic.
//
// Output layout under ExperimentConfig::out_dir:
//   config.used                         effective configuration
//   runs.tsv                            one line per training run
//   runs/<key>/seed<N>/history.csv      per-iteration training history
//   runs/<key>/seed<N>/test_per_query.tsv
//   runs/<key>/seed<N>/model.bin
//   summary.tsv                         regenerable with summarize_directory()
//   test_runs/<variant>.seed<N>.txt     final re-ranked test split

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "curricula/config.hpp"
#include "curricula/difficulty.hpp"
#include "curricula/error.hpp"
#include "curricula/first_stage.hpp"
#include "curricula/metrics.hpp"
#include "curricula/ranker.hpp"
#include "curricula/schedule.hpp"
#include "curricula/synth.hpp"
#include "curricula/trainer.hpp"
#include "curricula/trec_io.hpp"

namespace curricula {

struct ExperimentConfig {
  std::optional<std::filesystem::path> data_dir;  // unset: generate synthetic data per seed
  SynthConfig synth{};
  AnalyzerConfig analyzer{};
  BM25Params bm25{};
  TrainConfig train{};
  LossMode loss_mode = LossMode::pairwise;
  std::vector<Heuristic> heuristics{Heuristic::recip, Heuristic::norm, Heuristic::kde};
  std::vector<std::optional<int>> m_grid{1, 5, 10, 20, 50, 100};
  std::vector<std::uint64_t> seeds{1};
  std::size_t rerank_depth = 100;
  MetricSpec test_metric = MetricSpec::mrr_at(10);
  bool run_anti = true;
  bool run_static = true;
  int threads = 1;
  std::filesystem::path out_dir = "experiment";

  void validate() const {
    if (seeds.empty()) throw InvalidArgument("experiment: seed list is empty");
    if (m_grid.empty()) throw InvalidArgument("experiment: m grid is empty");
    if (rerank_depth < 1) throw InvalidArgument("experiment: rerank depth must be positive");
    if (threads < 1) throw InvalidArgument("experiment: threads must be positive");
    for (auto h : heuristics) {
      if (h == Heuristic::none) throw InvalidArgument("experiment: 'none' is always run and cannot be listed");
    }
    if (data_dir && !std::filesystem::is_directory(*data_dir)) {
      throw DataError("experiment: data directory " + data_dir->string() + " does not exist");
    }
    train.validate();
    check_params(bm25);
    if (!data_dir) synth.validate();
  }
};

// Named synthetic presets. `noisy` flips a share of the training labels.
inline SynthConfig synth_preset(const std::string& name) {
  SynthConfig c;
  if (name == "default") return c;
  if (name == "noisy") {
    c.noise_rate = 0.4;
    return c;
  }
  throw InvalidArgument("unknown synth preset '" + name + "' (expected default or noisy)");
}

inline std::vector<std::optional<int>> parse_m_grid(const std::vector<std::string>& items) {
  std::vector<std::optional<int>> out;
  for (const auto& s : items) out.push_back(parse_m(s));
  return out;
}

// Applies `synth.*` keys on top of `base`.
inline SynthConfig read_synth_config(const KeyValueConfig& kv, SynthConfig c) {
  c.train_queries = static_cast<int>(kv.get_int("synth.train_queries", c.train_queries));
  c.validation_queries = static_cast<int>(kv.get_int("synth.validation_queries", c.validation_queries));
  c.test_queries = static_cast<int>(kv.get_int("synth.test_queries", c.test_queries));
  c.docs_per_query = static_cast<int>(kv.get_int("synth.docs_per_query", c.docs_per_query));
  c.vocab_size = static_cast<int>(kv.get_int("synth.vocab_size", c.vocab_size));
  c.cluster_size = static_cast<int>(kv.get_int("synth.cluster_size", c.cluster_size));
  c.query_length = static_cast<int>(kv.get_int("synth.query_length", c.query_length));
  c.doc_length = static_cast<int>(kv.get_int("synth.doc_length", c.doc_length));
  c.relevant_per_query = static_cast<int>(kv.get_int("synth.relevant_per_query", c.relevant_per_query));
  c.hard_positive_rate = kv.get_double("synth.hard_positive_rate", c.hard_positive_rate);
  c.hard_negative_rate = kv.get_double("synth.hard_negative_rate", c.hard_negative_rate);
  c.noise_rate = kv.get_double("synth.noise_rate", c.noise_rate);
  c.judged_negatives_per_query =
      static_cast<int>(kv.get_int("synth.judged_negatives_per_query", c.judged_negatives_per_query));
  c.negatives_per_positive = static_cast<int>(kv.get_int("synth.negatives_per_positive", c.negatives_per_positive));
  c.run_depth = static_cast<int>(kv.get_int("synth.run_depth", c.run_depth));
  c.seed = static_cast<std::uint64_t>(kv.get_int("synth.seed", static_cast<long long>(c.seed)));
  return c;
}

inline ExperimentConfig read_experiment_config(const KeyValueConfig& kv, const std::string& preset = "default") {
  ExperimentConfig c;
  if (auto d = kv.get("data.dir")) c.data_dir = *d;
  c.analyzer.stem = kv.get_bool("analyzer.stem", c.analyzer.stem);
  c.analyzer.stopwords = kv.get_bool("analyzer.stopwords", c.analyzer.stopwords);
  c.bm25.k1 = kv.get_double("bm25.k1", c.bm25.k1);
  c.bm25.b = kv.get_double("bm25.b", c.bm25.b);
  c.synth = read_synth_config(kv, synth_preset(kv.get_string("synth.preset", preset)));

  auto& t = c.train;
  t.batches_per_iteration = static_cast<int>(kv.get_int("train.batches_per_iteration", t.batches_per_iteration));
  t.batch_size = static_cast<int>(kv.get_int("train.batch_size", t.batch_size));
  t.patience = static_cast<int>(kv.get_int("train.patience", t.patience));
  t.max_iterations = static_cast<int>(kv.get_int("train.max_iterations", t.max_iterations));
  t.learning_rate = kv.get_double("train.learning_rate", t.learning_rate);
  t.hidden_units = static_cast<std::size_t>(kv.get_int("train.hidden_units", static_cast<long long>(t.hidden_units)));
  const int threshold = static_cast<int>(kv.get_int("eval.threshold", 1));
  t.validation_metric = parse_metric(kv.get_string("train.validation_metric", "mrr@10"), threshold);
  c.test_metric = parse_metric(kv.get_string("eval.metric", "mrr@10"), threshold);

  c.loss_mode = kv.get_string("curriculum.loss_mode", "pairwise") == "pairwise" ? LossMode::pairwise
                                                                                  : LossMode::pointwise;
  if (auto lm = kv.get_string("curriculum.loss_mode", "pairwise"); lm != "pairwise" && lm != "pointwise") {
    throw DataError("curriculum.loss_mode must be pointwise or pairwise, got '" + lm + "'");
  }
  c.heuristics.clear();
  for (const auto& h : kv.get_list("curriculum.heuristics", {"recip", "norm", "kde"})) {
    c.heuristics.push_back(parse_heuristic(h));
  }
  c.m_grid = parse_m_grid(kv.get_list("curriculum.m_grid", {"1", "5", "10", "20", "50", "100"}));
  c.run_anti = kv.get_bool("curriculum.anti", c.run_anti);
  c.run_static = kv.get_bool("curriculum.static", c.run_static);

  c.seeds.clear();
  for (const auto& s : kv.get_list("experiment.seeds", {"1"})) {
    c.seeds.push_back(static_cast<std::uint64_t>(std::stoull(s)));
  }
  c.rerank_depth = static_cast<std::size_t>(kv.get_int("experiment.rerank_depth", 100));
  c.threads = static_cast<int>(kv.get_int("experiment.threads", 1));
  if (auto o = kv.get("experiment.out")) c.out_dir = *o;
  kv.require_all_used();
  return c;
}

inline std::string format_config(const ExperimentConfig& c) {
  std::ostringstream o;
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  auto flag = [](bool b) { return b ? "true" : "false"; };
  o << "[data]\n";
  if (c.data_dir) o << "dir = \"" << c.data_dir->string() << "\"\n";
  o << "\n[analyzer]\nstem = " << flag(c.analyzer.stem) << "\nstopwords = " << flag(c.analyzer.stopwords) << "\n";
  o << "\n[bm25]\nk1 = " << num(c.bm25.k1) << "\nb = " << num(c.bm25.b) << "\n";
  if (!c.data_dir) {
    const auto& s = c.synth;
    o << "\n[synth]\ntrain_queries = " << s.train_queries << "\nvalidation_queries = " << s.validation_queries
      << "\ntest_queries = " << s.test_queries << "\ndocs_per_query = " << s.docs_per_query
      << "\nvocab_size = " << s.vocab_size << "\ncluster_size = " << s.cluster_size
      << "\nquery_length = " << s.query_length << "\ndoc_length = " << s.doc_length
      << "\nrelevant_per_query = " << s.relevant_per_query << "\nhard_positive_rate = " << num(s.hard_positive_rate)
      << "\nhard_negative_rate = " << num(s.hard_negative_rate) << "\nnoise_rate = " << num(s.noise_rate)
      << "\njudged_negatives_per_query = " << s.judged_negatives_per_query
      << "\nnegatives_per_positive = " << s.negatives_per_positive << "\nrun_depth = " << s.run_depth << "\n";
  }
  const auto& t = c.train;
  o << "\n[train]\nbatches_per_iteration = " << t.batches_per_iteration << "\nbatch_size = " << t.batch_size
    << "\npatience = " << t.patience << "\nmax_iterations = " << t.max_iterations
    << "\nlearning_rate = " << num(t.learning_rate) << "\nhidden_units = " << t.hidden_units
    << "\nvalidation_metric = " << metric_name(t.validation_metric) << "\n";
  o << "\n[eval]\nmetric = " << metric_name(c.test_metric) << "\nthreshold = " << c.test_metric.relevance_threshold
    << "\n";
  o << "\n[curriculum]\nloss_mode = " << to_string(c.loss_mode) << "\nheuristics = [";
  for (std::size_t i = 0; i < c.heuristics.size(); ++i) o << (i ? ", " : "") << to_string(c.heuristics[i]);
  o << "]\nm_grid = [";
  for (std::size_t i = 0; i < c.m_grid.size(); ++i) o << (i ? ", " : "") << format_m(c.m_grid[i]);
  o << "]\nanti = " << flag(c.run_anti) << "\nstatic = " << flag(c.run_static) << "\n";
  o << "\n[experiment]\nseeds = [";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) o << (i ? ", " : "") << c.seeds[i];
  o << "]\nrerank_depth = " << c.rerank_depth << "\n";
  return o.str();
}

// ---------------------------------------------------------------- preparation

// Everything a training run needs for one dataset: the first-stage index,
// standardized feature rows, the training pool and the validation/test pools.
struct PreparedData {
  Dataset dataset;
  std::unique_ptr<InvertedIndex> index;
  TrainingTask task;
  std::vector<RerankPool> test;
};

namespace detail {

class RowTable {
 public:
  RowTable(const InvertedIndex& index, const Featurizer& featurizer, const std::map<std::string, Query>& queries)
      : index_(&index), featurizer_(&featurizer), queries_(&queries) {}

  std::size_t row(const std::string& qid, const std::string& doc) {
    auto key = std::make_pair(qid, doc);
    if (auto it = rows_.find(key); it != rows_.end()) return it->second;
    auto qit = query_terms_.find(qid);
    if (qit == query_terms_.end()) {
      auto q = queries_->find(qid);
      if (q == queries_->end()) throw DataError("unknown query id '" + qid + "'");
      qit = query_terms_.emplace(qid, index_->analyze(q->second.text)).first;
    }
    features_.push_back((*featurizer_)(qit->second, index_->require_doc(doc)));
    rows_.emplace(key, features_.size() - 1);
    return features_.size() - 1;
  }

  std::vector<FeatureVector>& features() { return features_; }

 private:
  const InvertedIndex* index_;
  const Featurizer* featurizer_;
  const std::map<std::string, Query>* queries_;
  std::map<std::pair<std::string, std::string>, std::size_t> rows_;
  std::map<std::string, std::vector<std::string>> query_terms_;
  std::vector<FeatureVector> features_;
};

inline std::vector<RerankPool> build_pools(const Runs& runs, std::size_t depth, RowTable& table) {
  std::vector<RerankPool> pools;
  for (const auto& [qid, list] : runs) {
    RerankPool pool{qid, {}, {}};
    for (const auto& e : list.entries) {
      if (pool.doc_ids.size() >= depth) break;
      pool.doc_ids.push_back(e.doc_id);
      pool.rows.push_back(table.row(qid, e.doc_id));
    }
    pools.push_back(std::move(pool));
  }
  return pools;
}

}  // namespace detail

inline PreparedData prepare(Dataset dataset, const AnalyzerConfig& analyzer, const BM25Params& bm25,
                            LossMode loss_mode, std::size_t rerank_depth) {
  PreparedData out;
  out.dataset = std::move(dataset);
  const Dataset& ds = out.dataset;
  out.index = std::make_unique<InvertedIndex>(ds.corpus, analyzer);
  Featurizer featurizer(*out.index, bm25, ds.term_clusters);
  detail::RowTable table(*out.index, featurizer, ds.queries);

  TrainingTask& task = out.task;
  task.loss_mode = loss_mode;
  task.qrels = ds.qrels;
  if (loss_mode == LossMode::pointwise) {
    if (ds.pointwise_samples.empty()) throw DataError("dataset has no pointwise training samples");
    for (const auto& s : ds.pointwise_samples) {
      task.pool.push_back({table.row(s.query_id, s.doc_id), 0, static_cast<double>(s.grade)});
      task.samples.emplace_back(s);
    }
  } else {
    if (ds.pairwise_samples.empty()) throw DataError("dataset has no pairwise training samples");
    for (const auto& s : ds.pairwise_samples) {
      task.pool.push_back({table.row(s.query_id, s.pos_doc_id), table.row(s.query_id, s.neg_doc_id), 0.0});
      task.samples.emplace_back(s);
    }
  }
  const std::size_t train_rows = table.features().size();

  if (ds.split_runs(Split::validation).empty()) throw DataError("dataset has no validation run file");
  if (ds.split_runs(Split::test).empty()) throw DataError("dataset has no test run file");
  task.validation = detail::build_pools(ds.split_runs(Split::validation), rerank_depth, table);
  out.test = detail::build_pools(ds.split_runs(Split::test), rerank_depth, table);

  // Standardize with statistics from the training rows only.
  auto& rows = table.features();
  const auto stdz = Standardizer::fit({rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(train_rows)});
  for (auto& r : rows) stdz.apply(r);
  task.features = std::move(rows);
  return out;
}

// Per-sample difficulty for the training pool, parallel to task.pool.
// Heuristic::none yields all ones.
inline std::vector<double> pool_difficulty(const PreparedData& data, Heuristic heuristic, bool anti_curriculum,
                                           const BM25Params& bm25) {
  DifficultyConfig dc;
  dc.heuristic = heuristic;
  dc.loss_mode = data.task.loss_mode;
  dc.anti = anti_curriculum;
  DifficultyScorer scorer(data.dataset.split_runs(Split::train), dc, data.index.get(), bm25, &data.dataset.queries);
  std::vector<double> out;
  out.reserve(data.task.samples.size());
  for (const auto& s : data.task.samples) out.push_back(scorer(s));
  return out;
}

// ---------------------------------------------------------------- runs

struct RunKey {
  Heuristic heuristic = Heuristic::none;
  bool anti = false;
  std::optional<int> m;  // ignored for Heuristic::none

  // Directory-safe identifier, e.g. "none", "recip.m10", "anti-kde.m5", "norm.minf".
  std::string id() const {
    if (heuristic == Heuristic::none) return "none";
    return std::string(anti ? "anti-" : "") + to_string(heuristic) + ".m" + format_m(m);
  }

  bool operator==(const RunKey& o) const {
    return heuristic == o.heuristic && anti == o.anti && (heuristic == Heuristic::none || m == o.m);
  }
};

struct RunRecord {
  RunKey key;
  std::uint64_t seed = 0;
  std::vector<HistoryRow> history;
  double best_validation = 0.0;
  int best_iteration = 0;
  std::map<std::string, double> test_per_query;
  double test_mean = 0.0;
};

// Validation metric after `iterations` completed iterations; a run that
// stopped earlier keeps its last value.
inline double validation_after(const std::vector<HistoryRow>& history, int iterations) {
  if (history.empty()) throw InvalidArgument("validation_after: empty history");
  const auto idx = static_cast<std::size_t>(std::max(1, iterations)) - 1;
  return history[std::min(idx, history.size() - 1)].valid_metric;
}

struct RunOutput {
  RunRecord record;
  RankerModel model;
  Runs test_runs;
};

inline RunOutput execute_run(const PreparedData& data, const RunKey& key, std::uint64_t seed,
                             const ExperimentConfig& config) {
  const auto difficulty = pool_difficulty(data, key.heuristic, key.anti, config.bm25);
  DifficultyConfig dc;
  dc.heuristic = key.heuristic;
  dc.loss_mode = config.loss_mode;
  dc.anti = key.anti;
  CurriculumSchedule schedule(key.heuristic == Heuristic::none ? std::optional<int>(1) : key.m, dc);
  TrainConfig tc = config.train;
  tc.seed = seed;
  auto result = train(data.task, difficulty, schedule, tc);
  auto test_runs = rerank(result.best_model, data.task.features, data.test);
  auto eval = evaluate(test_runs, data.dataset.qrels, config.test_metric);
  RunRecord rec{key, seed, std::move(result.history), result.best_validation_value, result.best_iteration,
                std::move(eval.per_query), eval.mean};
  return RunOutput{std::move(rec), std::move(result.best_model), std::move(test_runs)};
}

// ---------------------------------------------------------------- selection and summary

struct Selection {
  std::map<Heuristic, std::optional<int>> best_m;    // per heuristic, finite grid values preferred on ties
  std::map<Heuristic, double> best_mean_validation;  // at best_m
  Heuristic best_heuristic = Heuristic::none;
};

struct SummaryRow {
  std::string variant;
  RunKey key;
  double metric_mean = 0.0;
  std::vector<double> metric_per_seed;
  std::optional<double> p_vs_none;
};

struct Summary {
  Selection selection;
  std::vector<SummaryRow> rows;
};

inline const RunRecord* find_record(const std::vector<RunRecord>& records, const RunKey& key, std::uint64_t seed) {
  for (const auto& r : records) {
    if (r.seed == seed && r.key == key) return &r;
  }
  return nullptr;
}

inline const RunRecord& require_record(const std::vector<RunRecord>& records, const RunKey& key,
                                       std::uint64_t seed) {
  if (const auto* r = find_record(records, key, seed)) return *r;
  throw DataError("missing run " + key.id() + " for seed " + std::to_string(seed));
}

// m per heuristic maximizes the validation value averaged over seeds; ties go
// to the smaller m. The best heuristic has the highest such mean, ties to the
// earlier entry of `heuristics`.
inline Selection select_variants(const std::vector<RunRecord>& records, const std::vector<Heuristic>& heuristics,
                                 const std::vector<std::optional<int>>& m_grid,
                                 const std::vector<std::uint64_t>& seeds) {
  Selection sel;
  auto smaller = [](std::optional<int> a, std::optional<int> b) { return a && (!b || *a < *b); };
  double best_overall = -std::numeric_limits<double>::infinity();
  for (auto h : heuristics) {
    std::optional<std::optional<int>> best_m;
    double best_v = -std::numeric_limits<double>::infinity();
    for (const auto& m : m_grid) {
      double sum = 0.0;
      for (auto s : seeds) sum += require_record(records, RunKey{h, false, m}, s).best_validation;
      const double mean = sum / static_cast<double>(seeds.size());
      if (!best_m || mean > best_v || (mean == best_v && smaller(m, *best_m))) {
        best_m = m;
        best_v = mean;
      }
    }
    sel.best_m[h] = *best_m;
    sel.best_mean_validation[h] = best_v;
    if (best_v > best_overall) {
      best_overall = best_v;
      sel.best_heuristic = h;
    }
  }
  return sel;
}

inline std::vector<RunKey> followup_keys(const Selection& sel, const ExperimentConfig& config) {
  std::vector<RunKey> keys;
  if (sel.best_heuristic == Heuristic::none) return keys;
  const RunKey best{sel.best_heuristic, false, sel.best_m.at(sel.best_heuristic)};
  if (config.run_anti) keys.push_back({best.heuristic, true, best.m});
  if (config.run_static && best.m) keys.push_back({best.heuristic, false, std::nullopt});
  return keys;
}

inline Summary summarize(const std::vector<RunRecord>& records, const std::vector<Heuristic>& heuristics,
                         const std::vector<std::optional<int>>& m_grid, const std::vector<std::uint64_t>& seeds) {
  Summary out;
  out.selection = select_variants(records, heuristics, m_grid, seeds);
  const auto& sel = out.selection;

  std::vector<std::pair<std::string, RunKey>> variants{{"none", RunKey{}}};
  for (auto h : heuristics) variants.emplace_back(to_string(h), RunKey{h, false, sel.best_m.at(h)});
  if (sel.best_heuristic != Heuristic::none) {
    const auto h = sel.best_heuristic;
    const RunKey anti_key{h, true, sel.best_m.at(h)};
    const RunKey static_key{h, false, std::nullopt};
    if (find_record(records, anti_key, seeds.front())) {
      variants.emplace_back(std::string("anti-") + to_string(h), anti_key);
    }
    if (sel.best_m.at(h) && find_record(records, static_key, seeds.front())) {
      variants.emplace_back(std::string("static-") + to_string(h), static_key);
    }
  }

  // Per-query values pooled over seeds, keyed by (seed, query).
  auto pooled = [&](const RunKey& key) {
    std::map<std::string, double> all;
    for (auto s : seeds) {
      for (const auto& [q, v] : require_record(records, key, s).test_per_query) {
        all.emplace(std::to_string(s) + "/" + q, v);
      }
    }
    return all;
  };
  const auto none_pooled = pooled(RunKey{});

  for (const auto& [name, key] : variants) {
    SummaryRow row{name, key, 0.0, {}, std::nullopt};
    for (auto s : seeds) row.metric_per_seed.push_back(require_record(records, key, s).test_mean);
    double sum = 0.0;
    for (double v : row.metric_per_seed) sum += v;
    row.metric_mean = sum / static_cast<double>(seeds.size());
    if (key.heuristic != Heuristic::none) {
      const auto mine = pooled(key);
      if (mine.size() >= 2) row.p_vs_none = paired_t_test(mine, none_pooled).p_value;
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline void write_summary(const Summary& summary, std::ostream& out) {
  out << "variant\tm\tmetric_mean\tmetric_per_seed\tp_vs_none\n";
  char buf[64];
  for (const auto& r : summary.rows) {
    out << r.variant << '\t' << (r.key.heuristic == Heuristic::none ? "-" : format_m(r.key.m)) << '\t';
    std::snprintf(buf, sizeof buf, "%.6f", r.metric_mean);
    out << buf << '\t';
    for (std::size_t i = 0; i < r.metric_per_seed.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.6f", r.metric_per_seed[i]);
      out << (i ? "," : "") << buf;
    }
    out << '\t';
    if (r.p_vs_none) {
      std::snprintf(buf, sizeof buf, "%.6g", *r.p_vs_none);
      out << buf;
    } else {
      out << '-';
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------- persistence

namespace detail {

inline std::filesystem::path run_dir(const std::filesystem::path& out, const RunKey& key, std::uint64_t seed) {
  return out / "runs" / key.id() / ("seed" + std::to_string(seed));
}

inline double require_double(std::string_view s, const std::filesystem::path& path, std::size_t lineno) {
  if (auto v = parse_double(s)) return *v;
  throw DataError(path.string(), lineno, "malformed number '" + std::string(s) + "'");
}

inline long long require_int(std::string_view s, const std::filesystem::path& path, std::size_t lineno) {
  if (auto v = parse_int(s)) return *v;
  throw DataError(path.string(), lineno, "malformed integer '" + std::string(s) + "'");
}

inline void write_per_query(const std::map<std::string, double>& values, const std::filesystem::path& path) {
  auto out = open_out(path);
  char buf[40];
  for (const auto& [q, v] : values) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << q << '\t' << buf << '\n';
  }
}

inline std::map<std::string, double> read_per_query(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::map<std::string, double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) continue;
    auto f = split_tabs(line);
    if (f.size() != 2) throw DataError(path.string(), lineno, "expected 2 tab-separated fields");
    out.emplace(std::string(f[0]), require_double(f[1], path, lineno));
  }
  return out;
}

inline std::vector<HistoryRow> read_history_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<HistoryRow> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (++lineno == 1 || is_blank(line)) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() != 4) throw DataError(path.string(), lineno, "expected 4 comma-separated fields");
    out.push_back({static_cast<int>(require_int(f[0], path, lineno)), require_double(f[1], path, lineno),
                   require_double(f[2], path, lineno), require_double(f[3], path, lineno)});
  }
  return out;
}

}  // namespace detail

inline void write_run_record(const RunOutput& run, const std::filesystem::path& out_dir) {
  const auto dir = detail::run_dir(out_dir, run.record.key, run.record.seed);
  std::filesystem::create_directories(dir);
  {
    auto out = detail::open_out(dir / "history.csv");
    write_history_csv(run.record.history, out);
  }
  detail::write_per_query(run.record.test_per_query, dir / "test_per_query.tsv");
  run.model.save(dir / "model.bin");
}

inline void write_runs_index(const std::vector<RunRecord>& records, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "run\theuristic\tanti\tm\tseed\n";
  for (const auto& r : records) {
    out << r.key.id() << '\t' << to_string(r.key.heuristic) << '\t' << (r.key.anti ? 1 : 0) << '\t'
        << format_m(r.key.m) << '\t' << r.seed << '\n';
  }
}

// Rebuilds run records from runs.tsv and the per-run histories and per-query
// test values. Best validation values are recomputed from the histories.
inline std::vector<RunRecord> load_run_records(const std::filesystem::path& out_dir) {
  const auto index_path = out_dir / "runs.tsv";
  auto in = detail::open_in(index_path);
  std::vector<RunRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (++lineno == 1 || detail::is_blank(line)) continue;
    auto f = detail::split_tabs(line);
    if (f.size() != 5) throw DataError(index_path.string(), lineno, "expected 5 tab-separated fields");
    RunRecord r;
    r.key.heuristic = parse_heuristic(std::string(f[1]));
    r.key.anti = f[2] == "1";
    r.key.m = parse_m(std::string(f[3]));
    r.seed = static_cast<std::uint64_t>(detail::require_int(f[4], index_path, lineno));
    const auto dir = detail::run_dir(out_dir, r.key, r.seed);
    r.history = detail::read_history_csv(dir / "history.csv");
    if (r.history.empty()) throw DataError((dir / "history.csv").string() + ": empty history");
    r.best_validation = r.history.front().valid_metric;
    for (const auto& h : r.history) {
      if (h.valid_metric > r.best_validation) {
        r.best_validation = h.valid_metric;
        r.best_iteration = h.iteration;
      }
    }
    r.test_per_query = detail::read_per_query(dir / "test_per_query.tsv");
    double sum = 0.0;
    for (const auto& [q, v] : r.test_per_query) sum += v;
    r.test_mean = r.test_per_query.empty() ? 0.0 : sum / static_cast<double>(r.test_per_query.size());
    records.push_back(std::move(r));
  }
  return records;
}

// Regenerates summary.tsv from the files of a finished experiment.
inline Summary summarize_directory(const std::filesystem::path& out_dir) {
  const auto config = read_experiment_config(KeyValueConfig::load(out_dir / "config.used"));
  const auto records = load_run_records(out_dir);
  auto summary = summarize(records, config.heuristics, config.m_grid, config.seeds);
  auto out = detail::open_out(out_dir / "summary.tsv");
  write_summary(summary, out);
  return summary;
}

// ---------------------------------------------------------------- driver

struct ExperimentResult {
  std::vector<RunRecord> records;
  Summary summary;
};

namespace detail {

// Executes `jobs` over up to `threads` workers; results keep job order.
template <typename Job, typename Fn>
auto parallel_map(const std::vector<Job>& jobs, int threads, Fn fn) {
  using Out = decltype(fn(jobs.front()));
  std::vector<std::optional<Out>> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i].emplace(fn(jobs[i]));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(threads), jobs.size());
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  std::vector<Out> out;
  out.reserve(results.size());
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);
  {
    auto out = detail::open_out(config.out_dir / "config.used");
    out << format_config(config);
  }

  // One prepared dataset per seed; a fixed data directory is shared.
  std::vector<std::shared_ptr<const PreparedData>> data;
  if (config.data_dir) {
    auto shared = std::make_shared<const PreparedData>(
        prepare(load_dataset(*config.data_dir), config.analyzer, config.bm25, config.loss_mode, config.rerank_depth));
    data.assign(config.seeds.size(), shared);
  } else {
    data = detail::parallel_map(config.seeds, config.threads, [&](std::uint64_t seed) {
      SynthConfig sc = config.synth;
      sc.seed = seed;
      sc.analyzer = config.analyzer;
      sc.bm25 = config.bm25;
      return std::make_shared<const PreparedData>(
          prepare(std::move(generate(sc).dataset), config.analyzer, config.bm25, config.loss_mode,
                  config.rerank_depth));
    });
  }

  using Job = std::pair<std::size_t, RunKey>;  // seed index, run
  auto run_jobs = [&](const std::vector<Job>& jobs) {
    return detail::parallel_map(jobs, config.threads, [&](const Job& job) {
      auto run = execute_run(*data[job.first], job.second, config.seeds[job.first], config);
      write_run_record(run, config.out_dir);
      return run;
    });
  };

  std::vector<Job> jobs;
  for (std::size_t s = 0; s < config.seeds.size(); ++s) {
    jobs.push_back({s, RunKey{}});
    for (auto h : config.heuristics) {
      for (const auto& m : config.m_grid) jobs.push_back({s, RunKey{h, false, m}});
    }
  }
  auto outputs = run_jobs(jobs);
  std::vector<RunRecord> records;
  for (const auto& o : outputs) records.push_back(o.record);

  if (!config.heuristics.empty()) {
    const auto sel = select_variants(records, config.heuristics, config.m_grid, config.seeds);
    std::vector<Job> followups;
    for (const auto& key : followup_keys(sel, config)) {
      if (find_record(records, key, config.seeds.front())) continue;  // already in the grid
      for (std::size_t s = 0; s < config.seeds.size(); ++s) followups.push_back({s, key});
    }
    for (auto& o : run_jobs(followups)) {
      records.push_back(o.record);
      outputs.push_back(std::move(o));
    }
  }
  write_runs_index(records, config.out_dir / "runs.tsv");

  ExperimentResult result{records, summarize_directory(config.out_dir)};

  // Final test-split run files for every summary variant.
  fs::create_directories(config.out_dir / "test_runs");
  for (const auto& row : result.summary.rows) {
    for (const auto& o : outputs) {
      if (o.record.key == row.key) {
        write_run_file(o.test_runs, row.variant,
                       config.out_dir / "test_runs" / (row.variant + ".seed" + std::to_string(o.record.seed) + ".txt"));
      }
    }
  }
  return result;
}

}  // namespace curricula
