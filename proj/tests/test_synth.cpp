#include "curricula/synth.hpp"

#include <gtest/gtest.h>

#include "curricula/difficulty.hpp"
#include "curricula/metrics.hpp"
#include "test_util.hpp"

using namespace curricula;
namespace fs = std::filesystem;

namespace {

SynthConfig small(std::uint64_t seed) {
  SynthConfig c;
  c.train_queries = 30;
  c.validation_queries = 10;
  c.test_queries = 10;
  c.docs_per_query = 40;
  c.vocab_size = 5000;
  c.seed = seed;
  return c;
}

double bm25_test_mrr(const SynthConfig& c) {
  auto synth = generate(c);
  return evaluate(synth.dataset.split_runs(Split::test), synth.true_qrels, MetricSpec::mrr_at(10)).mean;
}

}  // namespace

TEST(Synth, SameSeedGivesByteIdenticalFiles) {
  curricula::testing::TempDir tmp;
  write_synth_dataset(generate(small(5)), tmp / "a");
  write_synth_dataset(generate(small(5)), tmp / "b");
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(tmp / "a")) {
    const auto name = entry.path().filename();
    EXPECT_EQ(curricula::testing::read_file(entry.path()), curricula::testing::read_file(tmp / "b" / name))
        << name;
    ++files;
  }
  EXPECT_GE(files, 6u);
  write_synth_dataset(generate(small(6)), tmp / "c");
  EXPECT_NE(curricula::testing::read_file(tmp / "a" / "corpus.tsv"), curricula::testing::read_file(tmp / "c" / "corpus.tsv"));
}

TEST(Synth, WrittenDatasetLoadsBack) {
  curricula::testing::TempDir tmp;
  auto synth = generate(small(7));
  write_synth_dataset(synth, tmp / "d");
  auto back = load_dataset(tmp / "d");
  EXPECT_EQ(back.corpus.size(), synth.dataset.corpus.size());
  EXPECT_EQ(back.qrels, synth.dataset.qrels);
  EXPECT_EQ(back.pairwise_samples, synth.dataset.pairwise_samples);
  EXPECT_EQ(back.term_clusters, synth.dataset.term_clusters);
}

TEST(Synth, SizesAndRunInvariants) {
  auto c = small(8);
  auto synth = generate(c);
  const auto& ds = synth.dataset;
  EXPECT_EQ(ds.queries.size(), 50u);
  EXPECT_EQ(ds.corpus.size(), 50u * 40u);
  EXPECT_EQ(ds.split_runs(Split::train).size(), 30u);
  EXPECT_EQ(ds.split_runs(Split::validation).size(), 10u);
  EXPECT_EQ(ds.split_runs(Split::test).size(), 10u);
  for (const auto& [split, runs] : ds.runs) {
    for (const auto& [qid, list] : runs) {
      EXPECT_TRUE(satisfies_run_invariants(list)) << qid;
      EXPECT_LE(list.size(), static_cast<std::size_t>(c.run_depth));
      EXPECT_EQ(synth.query_split.at(qid), split);
    }
  }
  for (const auto& [qid, docs] : synth.true_qrels.all()) {
    EXPECT_EQ(docs.size(), static_cast<std::size_t>(c.relevant_per_query)) << qid;
  }
  EXPECT_FALSE(ds.pairwise_samples.empty());
  EXPECT_FALSE(ds.pointwise_samples.empty());
}

TEST(Synth, NoiseOnlyTouchesTrainingLabels) {
  auto c = small(9);
  c.noise_rate = 0.5;
  auto synth = generate(c);
  std::size_t flipped = 0;
  for (const auto& [qid, docs] : synth.dataset.qrels.all()) {
    const auto split = synth.query_split.at(qid);
    for (const auto& [doc, grade] : docs) {
      const int truth = synth.true_qrels.grade(qid, doc).value_or(0);
      if (split != Split::train) {
        EXPECT_EQ(grade, truth);
      } else if (grade != truth) {
        ++flipped;
      }
    }
  }
  EXPECT_GT(flipped, 0u);
}

TEST(Synth, EasyConfigurationIsSolvedByFirstStage) {
  SynthConfig c;
  c.hard_positive_rate = 0.0;
  c.hard_negative_rate = 0.0;
  EXPECT_GE(bm25_test_mrr(c), 0.95);
}

TEST(Synth, HardArchetypesLowerFirstStageEffectiveness) {
  SynthConfig easy, hard;
  easy.hard_positive_rate = easy.hard_negative_rate = 0.0;
  hard.hard_positive_rate = hard.hard_negative_rate = 0.5;
  EXPECT_LT(bm25_test_mrr(hard), bm25_test_mrr(easy));
}

TEST(Synth, RecipDifficultySeparatesEasyFromHardPositives) {
  SynthConfig c;
  c.hard_positive_rate = 0.5;
  auto synth = generate(c);
  double easy_sum = 0, hard_sum = 0;
  int easy_n = 0, hard_n = 0;
  for (const auto& [qid, list] : synth.dataset.split_runs(Split::train)) {
    for (const auto& [doc, grade] : synth.true_qrels.for_query(qid)) {
      const double d = recip(list, doc);
      if (synth.archetypes.at(doc) == DocArchetype::easy_positive) {
        easy_sum += d;
        ++easy_n;
      } else {
        hard_sum += d;
        ++hard_n;
      }
    }
  }
  ASSERT_GT(easy_n, 0);
  ASSERT_GT(hard_n, 0);
  EXPECT_GT(easy_sum / easy_n, hard_sum / hard_n);
}

TEST(Synth, RejectsBadConfigs) {
  auto c = small(1);
  c.vocab_size = 100;
  EXPECT_THROW(generate(c), InvalidArgument);
  c = small(1);
  c.noise_rate = 1.5;
  EXPECT_THROW(generate(c), InvalidArgument);
  c = small(1);
  c.relevant_per_query = 41;
  EXPECT_THROW(generate(c), InvalidArgument);
}
