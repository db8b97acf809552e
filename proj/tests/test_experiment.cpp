#include "curricula/experiment.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace curricula;
using curricula::testing::read_file;

namespace {

const char* kTinyConfig = R"(# tiny end-to-end run
[synth]
train_queries = 12
validation_queries = 6
test_queries = 6
docs_per_query = 20
vocab_size = 3000
relevant_per_query = 2

[train]
batches_per_iteration = 4
batch_size = 8
patience = 1
max_iterations = 4

[curriculum]
loss_mode = pairwise
heuristics = [recip, norm]
m_grid = [1, 5]

[experiment]
seeds = [1, 2]
rerank_depth = 20
)";

ExperimentConfig tiny(const std::filesystem::path& out, int threads = 1) {
  auto c = read_experiment_config(KeyValueConfig::from_string(kTinyConfig));
  c.out_dir = out;
  c.threads = threads;
  return c;
}

}  // namespace

TEST(Config, ParsesSectionsListsAndComments) {
  auto kv = KeyValueConfig::from_string("top = 1\n[a]\nx = \"hello # not a comment\"\ny = [1, 2 ,3] # trailing\n"
                                        "flag = yes\n");
  EXPECT_EQ(kv.get_int("top", 0), 1);
  EXPECT_EQ(kv.get_list("a.y", {}), (std::vector<std::string>{"1", "2", "3"}));
  EXPECT_TRUE(kv.get_bool("a.flag", false));
  EXPECT_EQ(kv.get_int("missing", 7), 7);
  EXPECT_THROW(kv.require_all_used(), DataError);  // a.x never read
  kv.get_string("a.x", "");
  EXPECT_NO_THROW(kv.require_all_used());
}

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(KeyValueConfig::from_string("a = 1\na = 2\n"), DataError);
  EXPECT_THROW(KeyValueConfig::from_string("[open\n"), DataError);
  EXPECT_THROW(KeyValueConfig::from_string("novalue\n"), DataError);
  auto kv = KeyValueConfig::from_string("n = ten\nb = maybe\n");
  EXPECT_THROW(kv.get_int("n", 0), DataError);
  EXPECT_THROW(kv.get_bool("b", false), DataError);
}

TEST(Config, ExperimentKeysAndUnknownKeys) {
  auto c = read_experiment_config(KeyValueConfig::from_string(kTinyConfig));
  EXPECT_EQ(c.loss_mode, LossMode::pairwise);
  EXPECT_EQ(c.heuristics, (std::vector<Heuristic>{Heuristic::recip, Heuristic::norm}));
  EXPECT_EQ(c.m_grid, (std::vector<std::optional<int>>{1, 5}));
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(c.synth.train_queries, 12);
  EXPECT_EQ(c.train.patience, 1);

  auto defaults = read_experiment_config(KeyValueConfig::from_string(""));
  EXPECT_EQ(defaults.train.batches_per_iteration, 32);
  EXPECT_EQ(defaults.train.batch_size, 16);
  EXPECT_EQ(defaults.train.patience, 15);
  EXPECT_EQ(defaults.m_grid, (std::vector<std::optional<int>>{1, 5, 10, 20, 50, 100}));

  EXPECT_THROW(read_experiment_config(KeyValueConfig::from_string("[train]\npatiense = 3\n")), DataError);
  EXPECT_THROW(read_experiment_config(KeyValueConfig::from_string("[curriculum]\nloss_mode = listwise\n")),
               DataError);
  EXPECT_THROW(read_experiment_config(KeyValueConfig::from_string("[synth]\npreset = loud\n")), InvalidArgument);
}

TEST(Config, FormattedConfigReadsBackUnchanged) {
  auto c = read_experiment_config(KeyValueConfig::from_string(kTinyConfig));
  const auto text = format_config(c);
  auto back = read_experiment_config(KeyValueConfig::from_string(text));
  EXPECT_EQ(format_config(back), text);
}

TEST(RunKeys, Identifiers) {
  EXPECT_EQ(RunKey{}.id(), "none");
  EXPECT_EQ((RunKey{Heuristic::recip, false, 10}).id(), "recip.m10");
  EXPECT_EQ((RunKey{Heuristic::kde, true, 5}).id(), "anti-kde.m5");
  EXPECT_EQ((RunKey{Heuristic::norm, false, std::nullopt}).id(), "norm.minf");
}

TEST(ValidationAfter, CarriesLastValueForward) {
  std::vector<HistoryRow> h = {{0, 1, 1, 0.2}, {1, 1, 1, 0.5}, {2, 1, 1, 0.4}};
  EXPECT_EQ(validation_after(h, 1), 0.2);
  EXPECT_EQ(validation_after(h, 2), 0.5);
  EXPECT_EQ(validation_after(h, 10), 0.4);
  EXPECT_THROW(validation_after({}, 1), InvalidArgument);
}

TEST(Experiment, TinyRunProducesSummaryAndIsReproducible) {
  curricula::testing::TempDir tmp;
  auto result = run_experiment(tiny(tmp / "a"));

  const auto summary = read_file(tmp / "a" / "summary.tsv");
  std::istringstream lines(summary);
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, "variant\tm\tmetric_mean\tmetric_per_seed\tp_vs_none");
  std::vector<std::string> variants;
  for (std::string line; std::getline(lines, line);) {
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 4) << line;
    variants.push_back(line.substr(0, line.find('\t')));
  }
  ASSERT_GE(variants.size(), 3u);
  EXPECT_EQ(variants[0], "none");
  EXPECT_EQ(variants[1], "recip");
  EXPECT_EQ(variants[2], "norm");
  const std::string best = to_string(result.summary.selection.best_heuristic);
  EXPECT_NE(std::find(variants.begin(), variants.end(), "anti-" + best), variants.end());

  // 2 seeds x (none + 2 heuristics x 2 m) + follow-ups.
  EXPECT_GE(result.records.size(), 10u);
  EXPECT_TRUE(std::filesystem::exists(tmp / "a" / "runs.tsv"));
  EXPECT_TRUE(std::filesystem::exists(tmp / "a" / "runs" / "none" / "seed1" / "history.csv"));
  EXPECT_TRUE(std::filesystem::exists(tmp / "a" / "test_runs" / "none.seed2.txt"));

  // Thread count must not change anything.
  run_experiment(tiny(tmp / "b", 3));
  EXPECT_EQ(read_file(tmp / "b" / "summary.tsv"), summary);
  EXPECT_EQ(read_file(tmp / "b" / "runs" / "recip.m5" / "seed2" / "history.csv"),
            read_file(tmp / "a" / "runs" / "recip.m5" / "seed2" / "history.csv"));

  std::filesystem::remove(tmp / "a" / "summary.tsv");
  summarize_directory(tmp / "a");
  EXPECT_EQ(read_file(tmp / "a" / "summary.tsv"), summary);
}

TEST(Experiment, SummaryFromRecords) {
  auto rec = [](RunKey key, std::uint64_t seed, double valid, std::map<std::string, double> test) {
    RunRecord r;
    r.key = key;
    r.seed = seed;
    r.best_validation = valid;
    r.history = {{0, 1, 1, valid}};
    double sum = 0;
    for (auto& [q, v] : test) sum += v;
    r.test_mean = sum / static_cast<double>(test.size());
    r.test_per_query = std::move(test);
    return r;
  };
  const std::map<std::string, double> low = {{"q1", 0.2}, {"q2", 0.3}}, high = {{"q1", 0.5}, {"q2", 0.7}};
  std::vector<RunRecord> records;
  for (std::uint64_t s : {1, 2}) {
    records.push_back(rec(RunKey{}, s, 0.3, low));
    records.push_back(rec(RunKey{Heuristic::recip, false, 1}, s, 0.4, high));
    records.push_back(rec(RunKey{Heuristic::recip, false, 5}, s, 0.4, low));  // tie: smaller m wins
  }
  auto summary = summarize(records, {Heuristic::recip}, {1, 5}, {1, 2});
  EXPECT_EQ(summary.selection.best_m.at(Heuristic::recip), 1);
  ASSERT_EQ(summary.rows.size(), 2u);  // no anti/static records present
  EXPECT_NEAR(summary.rows[1].metric_mean, 0.6, 1e-12);
  EXPECT_FALSE(summary.rows[0].p_vs_none);
  ASSERT_TRUE(summary.rows[1].p_vs_none);
  std::ostringstream out;
  write_summary(summary, out);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n', 60)),
            "variant\tm\tmetric_mean\tmetric_per_seed\tp_vs_none\nnone\t-\t0.250000\t0.250000,0.250000\t-");
  EXPECT_THROW(summarize(records, {Heuristic::kde}, {1}, {1}), DataError);
}
