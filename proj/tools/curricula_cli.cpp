// curricula: command-line front end.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "curricula/config.hpp"
#include "curricula/difficulty.hpp"
#include "curricula/experiment.hpp"
#include "curricula/first_stage.hpp"
#include "curricula/metrics.hpp"
#include "curricula/schedule.hpp"
#include "curricula/synth.hpp"
#include "curricula/trec_io.hpp"

namespace fs = std::filesystem;
using namespace curricula;

namespace {

constexpr int kUsageError = 1;
constexpr int kDataError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

KeyValueConfig load_config(const std::string& path) {
  return path.empty() ? KeyValueConfig{} : KeyValueConfig::load(path);
}

AnalyzerConfig analyzer_from(const KeyValueConfig& kv) {
  AnalyzerConfig a;
  a.stem = kv.get_bool("analyzer.stem", a.stem);
  a.stopwords = kv.get_bool("analyzer.stopwords", a.stopwords);
  return a;
}

BM25Params bm25_from(const KeyValueConfig& kv) {
  BM25Params p;
  p.k1 = kv.get_double("bm25.k1", p.k1);
  p.b = kv.get_double("bm25.b", p.b);
  return p;
}

// Writes to `path`, or standard output when empty.
template <typename Fn>
void with_output(const std::string& path, Fn fn) {
  if (path.empty()) {
    fn(std::cout);
    return;
  }
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  fn(out);
}

InvertedIndex open_index(const std::string& path) {
  const fs::path p = fs::is_directory(path) ? fs::path(path) / "index.bin" : fs::path(path);
  return InvertedIndex::load(p);
}

struct IndexArgs {
  std::string corpus, config, out = ".";
  bool no_stem = false, no_stopwords = false;
};

int cmd_index(const IndexArgs& a) {
  auto kv = load_config(a.config);
  auto analyzer = analyzer_from(kv);
  if (a.no_stem) analyzer.stem = false;
  if (a.no_stopwords) analyzer.stopwords = false;
  auto index = build_index(read_corpus(a.corpus), analyzer);
  fs::create_directories(a.out);
  index.save(fs::path(a.out) / "index.bin");
  std::fprintf(stderr, "indexed %zu documents, %zu terms -> %s\n", index.doc_count(), index.vocabulary_size(),
               (fs::path(a.out) / "index.bin").c_str());
  return 0;
}

struct RetrieveArgs {
  std::string index, queries, config, out, tag = "bm25";
  std::size_t k = 100;
  std::optional<double> k1, b;
};

int cmd_retrieve(const RetrieveArgs& a) {
  auto kv = load_config(a.config);
  auto params = bm25_from(kv);
  if (a.k1) params.k1 = *a.k1;
  if (a.b) params.b = *a.b;
  check_params(params);
  auto index = open_index(a.index);
  Runs runs;
  for (const auto& [qid, q] : read_queries(a.queries)) runs.emplace(qid, retrieve(index, params, q, a.k));
  with_output(a.out, [&](std::ostream& out) { write_run_file(runs, a.tag, out); });
  return 0;
}

struct EvalArgs {
  std::string run, qrels, metric = "mrr@10", out;
  int threshold = 1;
};

int cmd_eval(const EvalArgs& a) {
  const auto spec = parse_metric(a.metric, a.threshold);
  const auto result = evaluate(read_run_file(a.run), read_qrels(a.qrels), spec);
  const auto name = metric_name(spec);
  with_output(a.out, [&](std::ostream& out) {
    char buf[64];
    for (const auto& [qid, v] : result.per_query) {
      std::snprintf(buf, sizeof buf, "%.6f", v);
      out << name << '\t' << qid << '\t' << buf << '\n';
    }
    std::snprintf(buf, sizeof buf, "%.6f", result.mean);
    out << name << "\tall\t" << buf << '\n';
  });
  return 0;
}

struct SynthArgs {
  std::string config, preset = "default", out = "synth";
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a) {
  auto kv = load_config(a.config);
  // Accepts a full experiment config; only the generator keys matter here.
  const auto ec = read_experiment_config(kv, a.preset);
  auto c = ec.synth;
  c.analyzer = ec.analyzer;
  c.bm25 = ec.bm25;
  if (a.seed) c.seed = *a.seed;
  auto synth = generate(c);
  write_synth_dataset(synth, a.out);
  std::fprintf(stderr, "wrote %zu queries, %zu documents -> %s\n", synth.dataset.queries.size(),
               synth.dataset.corpus.size(), a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string config, out, data;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

int cmd_train(const TrainArgs& a) {
  auto config = read_experiment_config(load_config(a.config));
  if (!a.data.empty()) config.data_dir = a.data;
  if (!a.out.empty()) config.out_dir = a.out;
  if (a.seed) config.seeds = {*a.seed};
  if (a.threads) config.threads = *a.threads;
  auto result = run_experiment(config);
  write_summary(result.summary, std::cout);
  return 0;
}

struct WeightsArgs {
  std::string data, config, out, heuristic = "recip", loss_mode = "pairwise";
  bool anti = false;
  std::optional<std::string> m;
  int iteration = 0;
};

int cmd_weights_export(const WeightsArgs& a) {
  auto kv = load_config(a.config);
  const auto analyzer = analyzer_from(kv);
  const auto params = bm25_from(kv);
  if (a.loss_mode != "pairwise" && a.loss_mode != "pointwise") throw UsageError("--loss-mode must be pairwise or pointwise");
  const LossMode mode = a.loss_mode == "pairwise" ? LossMode::pairwise : LossMode::pointwise;
  const auto dataset = load_dataset(a.data);
  const auto index = build_index(dataset.corpus, analyzer);
  DifficultyConfig dc;
  dc.heuristic = parse_heuristic(a.heuristic);
  dc.loss_mode = mode;
  dc.anti = a.anti;
  const DifficultyScorer scorer(dataset.split_runs(Split::train), dc, &index, params, &dataset.queries);

  std::vector<TrainingSample> samples;
  if (mode == LossMode::pairwise) {
    samples.assign(dataset.pairwise_samples.begin(), dataset.pairwise_samples.end());
  } else {
    samples.assign(dataset.pointwise_samples.begin(), dataset.pointwise_samples.end());
  }
  if (samples.empty()) throw DataError("no " + a.loss_mode + " training samples in " + a.data);

  if (!a.m) {
    if (a.out.empty()) throw UsageError("--out is required");
    write_difficulty_sidecar(samples, scorer, a.out);
    return 0;
  }
  // With --m, export the schedule weight at --iteration instead of the raw difficulty.
  const CurriculumSchedule schedule(parse_m(*a.m), dc);
  with_output(a.out, [&](std::ostream& out) {
    char buf[32];
    for (const auto& s : samples) {
      std::snprintf(buf, sizeof buf, "%.6f", schedule.weight(scorer(s), a.iteration));
      if (const auto* p = std::get_if<PairwiseSample>(&s)) {
        out << p->query_id << '\t' << p->pos_doc_id << ',' << p->neg_doc_id << '\t' << buf << '\n';
      } else {
        const auto& q = std::get<PointwiseSample>(s);
        out << q.query_id << '\t' << q.doc_id << '\t' << buf << '\n';
      }
    }
  });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curriculum-weighted neural re-ranking experiments"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  IndexArgs ia;
  auto* index = app.add_subcommand("index", "Build a BM25 index from a corpus TSV");
  index->add_option("--corpus", ia.corpus, "Corpus file (doc_id<TAB>text)")->required()->check(CLI::ExistingFile);
  index->add_option("--config", ia.config, "Config file (analyzer.* keys)")->check(CLI::ExistingFile);
  index->add_option("--out", ia.out, "Output directory for index.bin");
  index->add_flag("--no-stem", ia.no_stem, "Disable stemming");
  index->add_flag("--no-stopwords", ia.no_stopwords, "Keep stopwords");

  RetrieveArgs ra;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Run BM25 for a query file and write a TREC run");
  retrieve_cmd->add_option("--index", ra.index, "index.bin or the directory holding it")->required();
  retrieve_cmd->add_option("--queries", ra.queries, "Query file (qid<TAB>text)")->required()->check(CLI::ExistingFile);
  retrieve_cmd->add_option("--k", ra.k, "Depth per query")->check(CLI::PositiveNumber);
  retrieve_cmd->add_option("--k1", ra.k1, "BM25 k1");
  retrieve_cmd->add_option("--b", ra.b, "BM25 b");
  retrieve_cmd->add_option("--tag", ra.tag, "Run tag");
  retrieve_cmd->add_option("--config", ra.config, "Config file (bm25.* keys)")->check(CLI::ExistingFile);
  retrieve_cmd->add_option("--out", ra.out, "Output run file (default: stdout)");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a run against qrels");
  eval->add_option("--run", ea.run, "TREC run file")->required()->check(CLI::ExistingFile);
  eval->add_option("--qrels", ea.qrels, "TREC qrels file")->required()->check(CLI::ExistingFile);
  eval->add_option("--metric", ea.metric, "mrr@k, mrr, p@1, map or r-prec");
  eval->add_option("--threshold", ea.threshold, "Minimum relevant grade");
  eval->add_option("--out", ea.out, "Output TSV (default: stdout)");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic ranking dataset");
  synth->add_option("--config", sa.config, "Config file (synth.*, analyzer.*, bm25.* keys are used)")->check(CLI::ExistingFile);
  synth->add_option("--preset", sa.preset, "default or noisy");
  synth->add_option("--seed", sa.seed, "Generator seed");
  synth->add_option("--out", sa.out, "Output directory");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Run the curriculum experiment grid");
  train_cmd->add_option("--config", ta.config, "Experiment config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--data", ta.data, "Dataset directory (default: synthetic per seed)");
  train_cmd->add_option("--seed", ta.seed, "Run a single seed");
  train_cmd->add_option("--threads", ta.threads, "Parallel training runs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--out", ta.out, "Output directory");

  WeightsArgs wa;
  auto* weights = app.add_subcommand("weights-export", "Write per-sample difficulty or curriculum weights");
  weights->add_option("--data", wa.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  weights->add_option("--heuristic", wa.heuristic, "recip, norm, kde or none");
  weights->add_option("--loss-mode", wa.loss_mode, "pairwise or pointwise");
  weights->add_flag("--anti", wa.anti, "Export 1 - D");
  weights->add_option("--m", wa.m, "Curriculum end iteration (integer or inf); exports weights");
  weights->add_option("--iteration", wa.iteration, "Iteration at which to evaluate the weight")
      ->check(CLI::NonNegativeNumber);
  weights->add_option("--config", wa.config, "Config file (analyzer.*, bm25.* keys)")->check(CLI::ExistingFile);
  weights->add_option("--out", wa.out, "Output TSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) std::cerr << (app.get_subcommands().empty() ? &app : app.get_subcommands().back())->help();
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*index) return cmd_index(ia);
    if (*retrieve_cmd) return cmd_retrieve(ra);
    if (*eval) return cmd_eval(ea);
    if (*synth) return cmd_synth(sa);
    if (*train_cmd) return cmd_train(ta);
    if (*weights) return cmd_weights_export(wa);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return kUsageError;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsageError;
}
