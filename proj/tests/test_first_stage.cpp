#include "curricula/first_stage.hpp"
#include "curricula/trec_io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"

using namespace curricula;

namespace {

using Terms = std::vector<std::string>;

const AnalyzerConfig kRaw{false, false};

std::map<std::string, Document> corpus(std::initializer_list<std::pair<const char*, const char*>> docs) {
  std::map<std::string, Document> out;
  for (const auto& [id, text] : docs) out.emplace(id, Document{id, text});
  return out;
}

}  // namespace

TEST(Index, SingleDocumentPostings) {
  auto index = build_index(corpus({{"d1", "a b b"}}), kRaw);
  EXPECT_EQ(index.doc_count(), 1u);
  EXPECT_EQ(index.doc_length(0), 3u);
  auto a = index.term_id("a");
  auto b = index.term_id("b");
  ASSERT_TRUE(a && b);
  ASSERT_EQ(index.postings(*a).size(), 1u);
  EXPECT_EQ(index.postings(*a)[0].doc, 0u);
  EXPECT_EQ(index.postings(*a)[0].tf, 1u);
  EXPECT_EQ(index.postings(*b)[0].tf, 2u);
  EXPECT_EQ(index.document_frequency(*b), 1u);
}

TEST(Index, AverageDocumentLength) {
  auto index = build_index(corpus({{"d1", "x y"}, {"d2", "x y z w"}}), kRaw);
  EXPECT_DOUBLE_EQ(index.avg_doc_length(), 3.0);
}

TEST(Index, EmptyCorpusIsAnError) { EXPECT_THROW(build_index({}), InvalidArgument); }

TEST(Index, PostingsSortedByInternalId) {
  auto index = build_index(corpus({{"c", "t"}, {"a", "t u"}, {"b", "u t"}}), kRaw);
  for (std::uint32_t t = 0; t < index.vocabulary_size(); ++t) {
    const auto& p = index.postings(t);
    for (std::size_t i = 1; i < p.size(); ++i) EXPECT_LT(p[i - 1].doc, p[i].doc);
  }
}

TEST(Analyzer, StemmingMergesRunningAndRun) {
  auto index = build_index(corpus({{"d1", "running"}, {"d2", "run"}}), AnalyzerConfig{true, false});
  auto t = index.term_id(porter_stem("running"));
  ASSERT_TRUE(t);
  EXPECT_EQ(porter_stem("running"), porter_stem("run"));
  EXPECT_EQ(index.postings(*t).size(), 2u);
}

TEST(Analyzer, DefaultPipelineLowercasesSplitsAndDropsStopwords) {
  Analyzer an(AnalyzerConfig{});
  EXPECT_EQ(an("The Cats, and the DOGS-running!"), (std::vector<std::string>{"cat", "dog", "run"}));
  Analyzer raw(kRaw);
  EXPECT_EQ(raw("The x2 B"), (std::vector<std::string>{"the", "x2", "b"}));
}

// Reference pairs from the published Porter stemmer vocabulary.
TEST(Analyzer, PorterStemmerReferenceWords) {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"caresses", "caress"},   {"ponies", "poni"},          {"ties", "ti"},
      {"caress", "caress"},     {"cats", "cat"},             {"feed", "feed"},
      {"agreed", "agre"},       {"plastered", "plaster"},    {"motoring", "motor"},
      {"sing", "sing"},         {"conflated", "conflat"},    {"troubled", "troubl"},
      {"sized", "size"},        {"hopping", "hop"},          {"tanned", "tan"},
      {"falling", "fall"},      {"hissing", "hiss"},         {"fizzed", "fizz"},
      {"failing", "fail"},      {"filing", "file"},          {"happy", "happi"},
      {"sky", "sky"},           {"relational", "relat"},     {"conditional", "condit"},
      {"rational", "ration"},   {"valenci", "valenc"},       {"hesitanci", "hesit"},
      {"digitizer", "digit"},   {"radicalli", "radic"},      {"differentli", "differ"},
      {"vileli", "vile"},       {"analogousli", "analog"},   {"vietnamization", "vietnam"},
      {"predication", "predic"}, {"operator", "oper"},       {"feudalism", "feudal"},
      {"decisiveness", "decis"}, {"hopefulness", "hope"},    {"callousness", "callous"},
      {"formaliti", "formal"},  {"sensitiviti", "sensit"},   {"sensibiliti", "sensibl"},
      {"triplicate", "triplic"}, {"formative", "form"},      {"formalize", "formal"},
      {"electriciti", "electr"}, {"electrical", "electr"},   {"hopeful", "hope"},
      {"goodness", "good"},     {"revival", "reviv"},        {"allowance", "allow"},
      {"inference", "infer"},   {"airliner", "airlin"},      {"gyroscopic", "gyroscop"},
      {"adjustable", "adjust"}, {"defensible", "defens"},    {"irritant", "irrit"},
      {"replacement", "replac"}, {"adjustment", "adjust"},   {"dependent", "depend"},
      {"adoption", "adopt"},    {"communism", "commun"},     {"activate", "activ"},
      {"angulariti", "angular"}, {"homologous", "homolog"},  {"effective", "effect"},
      {"bowdlerize", "bowdler"}, {"probate", "probat"},      {"rate", "rate"},
      {"cease", "ceas"},        {"controll", "control"},     {"roll", "roll"},
      {"generalizations", "gener"}, {"oscillators", "oscil"}, {"run", "run"},
  };
  for (const auto& [word, stem] : cases) EXPECT_EQ(porter_stem(word), stem) << word;
}

TEST(Bm25, HandComputedSingleDocument) {
  // N = 1, df = 1, tf = 2, len = avglen = 3, k1 = 0.9:
  // ln(1 + 0.5 / 1.5) * 2 * 1.9 / (2 + 0.9).
  auto index = build_index(corpus({{"d1", "a b b"}}), kRaw);
  EXPECT_NEAR(bm25_score(index, BM25Params{}, {"b"}, "d1"), 0.37696271562647143, 1e-10);
}

TEST(Bm25, AbsentTermsContributeZero) {
  auto index = build_index(corpus({{"d1", "a b b"}, {"d2", "c"}}), kRaw);
  EXPECT_EQ(bm25_score(index, BM25Params{}, {"zzz", "c"}, "d1"), 0.0);
  const double with = bm25_score(index, BM25Params{}, {"b"}, "d1");
  EXPECT_EQ(bm25_score(index, BM25Params{}, {"b", "nope"}, "d1"), with);
}

TEST(Bm25, UnknownDocumentIsAnError) {
  auto index = build_index(corpus({{"d1", "a"}}), kRaw);
  EXPECT_THROW(bm25_score(index, BM25Params{}, {"a"}, "d9"), DataError);
}

TEST(Bm25, LengthIndependentWhenBIsZero) {
  // d1 and d2 differ only in length: "x y" vs "x y z w".
  auto index = build_index(corpus({{"d1", "x y"}, {"d2", "x y z w"}}), kRaw);
  const BM25Params p{0.9, 0.0};
  const double s1 = bm25_score(index, p, {"x"}, "d1");
  EXPECT_EQ(s1, bm25_score(index, p, {"x"}, "d2"));
  EXPECT_NEAR(s1, 0.1823215567939546, 1e-12);  // ln(1 + 0.5/2.5) * 1.9 / 1.9
  EXPECT_GT(bm25_score(index, BM25Params{0.9, 0.75}, {"x"}, "d1"),
            bm25_score(index, BM25Params{0.9, 0.75}, {"x"}, "d2"));
}

TEST(Bm25, NonDecreasingInTermFrequency) {
  // Same length, increasing tf of "x".
  auto index = build_index(corpus({{"d1", "x a a a"}, {"d2", "x x a a"}, {"d3", "x x x a"}, {"d4", "x x x x"}}),
                           kRaw);
  double prev = -1.0;
  for (const char* d : {"d1", "d2", "d3", "d4"}) {
    const double s = bm25_score(index, BM25Params{}, {"x"}, d);
    EXPECT_GE(s, prev);
    prev = s;
  }
}

TEST(Bm25, UnmatchedQueryTermNeverChangesScores) {
  std::mt19937_64 gen(3);
  std::map<std::string, Document> docs;
  for (int d = 0; d < 30; ++d) {
    std::string text;
    for (int i = 0; i < 12; ++i) text += "w" + std::to_string(gen() % 20) + " ";
    docs.emplace("d" + std::to_string(d), Document{"d" + std::to_string(d), text});
  }
  auto index = build_index(docs, kRaw);
  const std::vector<std::string> q = {"w1", "w7", "w7", "w13"};
  auto q2 = q;
  q2.push_back("unmatched");
  for (const auto& [id, doc] : docs) EXPECT_EQ(bm25_score(index, {}, q, id), bm25_score(index, {}, q2, id));
}

TEST(Retrieve, TopOneIsArgmax) {
  auto index = build_index(corpus({{"d1", "x"}, {"d2", "x x y"}, {"d3", "y"}}), kRaw);
  auto list = retrieve(index, BM25Params{}, Terms{"x", "y"}, 1);
  ASSERT_EQ(list.entries.size(), 1u);
  double best = -1;
  std::string arg;
  for (const char* d : {"d1", "d2", "d3"}) {
    const double s = bm25_score(index, BM25Params{}, {"x", "y"}, d);
    if (s > best) best = s, arg = d;
  }
  EXPECT_EQ(list.entries[0].doc_id, arg);
  EXPECT_EQ(list.entries[0].score, best);
}

TEST(Retrieve, LargeKReturnsOnlyMatchingDocs) {
  auto index = build_index(corpus({{"d1", "x"}, {"d2", "x x y"}, {"d3", "z"}}), kRaw);
  auto list = retrieve(index, BM25Params{}, Terms{"x"}, 100);
  ASSERT_EQ(list.entries.size(), 2u);
  EXPECT_TRUE(satisfies_run_invariants(list));
}

TEST(Retrieve, EqualScoresOrderedByDocId) {
  auto index = build_index(corpus({{"dB", "x y"}, {"dA", "y x"}, {"dC", "q"}}), kRaw);
  auto list = retrieve(index, BM25Params{}, Terms{"x"}, 10);
  ASSERT_EQ(list.entries.size(), 2u);
  EXPECT_EQ(list.entries[0].score, list.entries[1].score);
  EXPECT_EQ(list.entries[0].doc_id, "dA");
  EXPECT_EQ(list.entries[1].doc_id, "dB");
}

TEST(Retrieve, ZeroKIsAnError) {
  auto index = build_index(corpus({{"d1", "x"}}), kRaw);
  EXPECT_THROW(retrieve(index, BM25Params{}, Terms{"x"}, 0), InvalidArgument);
}

// Scores from retrieve() are bitwise equal to direct bm25_score() and the
// output always satisfies the run invariants.
TEST(Retrieve, MatchesDirectScoringOnRandomCorpora) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::map<std::string, Document> docs;
    for (int d = 0; d < 40; ++d) {
      std::string text;
      const int len = 1 + static_cast<int>(gen() % 25);
      for (int i = 0; i < len; ++i) text += "w" + std::to_string(gen() % 30) + " ";
      char id[16];
      std::snprintf(id, sizeof id, "d%03d", d);
      docs.emplace(id, Document{id, text});
    }
    auto index = build_index(docs, kRaw);
    std::vector<std::string> q;
    for (int i = 0; i < 3; ++i) q.push_back("w" + std::to_string(gen() % 30));
    const BM25Params p{0.1 * static_cast<double>(1 + gen() % 40), 0.05 * static_cast<double>(gen() % 21)};
    auto list = retrieve(index, p, q, 1 + gen() % 50);
    EXPECT_TRUE(satisfies_run_invariants(list));
    for (const auto& e : list.entries) EXPECT_EQ(e.score, bm25_score(index, p, q, e.doc_id));
  }
}

TEST(Tune, StandardGridHas840Points) {
  auto grid = standard_bm25_grid();
  EXPECT_EQ(grid.size(), 840u);
  EXPECT_DOUBLE_EQ(grid.front().k1, 0.1);
  EXPECT_DOUBLE_EQ(grid.front().b, 0.0);
  EXPECT_DOUBLE_EQ(grid.back().k1, 4.0);
  EXPECT_DOUBLE_EQ(grid.back().b, 1.0);
}

namespace {

struct TinyCollection {
  std::map<std::string, Document> docs = corpus({{"d1", "apple banana apple"},
                                                 {"d2", "banana cherry"},
                                                 {"d3", "apple cherry cherry cherry date elder fig"},
                                                 {"d4", "date"}});
  std::map<std::string, Query> queries = {{"q1", {"q1", "apple cherry"}}, {"q2", {"q2", "date"}}};
  Qrels qrels;
  TinyCollection() {
    qrels.insert("q1", "d3", 1);
    qrels.insert("q2", "d4", 1);
  }
};

}  // namespace

TEST(Tune, SinglePointGridReturnsThatPoint) {
  TinyCollection c;
  auto index = build_index(c.docs, kRaw);
  auto r = tune_bm25(index, c.queries, c.qrels, MetricSpec::mrr_at(10), {{1.7, 0.3}});
  EXPECT_EQ(r.best.k1, 1.7);
  EXPECT_EQ(r.best.b, 0.3);
  EXPECT_EQ(r.evaluated, 1u);
}

TEST(Tune, FullGridDominatesDefaultsAndEvaluatesEveryPoint) {
  TinyCollection c;
  auto index = build_index(c.docs, kRaw);
  const auto metric = MetricSpec::mrr_at(10);
  auto r = tune_bm25(index, c.queries, c.qrels, metric, standard_bm25_grid());
  EXPECT_EQ(r.evaluated, 840u);
  Runs defaults;
  for (const auto& [qid, q] : c.queries) defaults.emplace(qid, retrieve(index, BM25Params{}, q, 1000));
  EXPECT_GE(r.best_value, evaluate(defaults, c.qrels, metric).mean);
}

TEST(Tune, TiesGoToSmallerK1ThenSmallerB) {
  TinyCollection c;
  auto index = build_index(c.docs, kRaw);
  // "elder" matches a single document, so every grid point ties.
  std::map<std::string, Query> q2{{"q3", {"q3", "elder"}}};
  c.qrels.insert("q3", "d3", 1);
  auto r = tune_bm25(index, q2, c.qrels, MetricSpec::mrr_at(10), {{2.0, 0.5}, {1.0, 0.9}, {1.0, 0.2}, {3.0, 0.0}});
  EXPECT_EQ(r.best.k1, 1.0);
  EXPECT_EQ(r.best.b, 0.2);
  EXPECT_THROW(tune_bm25(index, q2, c.qrels, MetricSpec::mrr_at(10), {}), InvalidArgument);
}

TEST(Index, SaveLoadRoundTrip) {
  curricula::testing::TempDir tmp;
  TinyCollection c;
  auto index = build_index(c.docs, AnalyzerConfig{});
  index.save(tmp / "index.bin");
  auto back = InvertedIndex::load(tmp / "index.bin");
  EXPECT_TRUE(back == index);
  for (const auto& [id, d] : c.docs) {
    EXPECT_EQ(bm25_score(back, {}, back.analyze("apple cherry"), id),
              bm25_score(index, {}, index.analyze("apple cherry"), id));
  }
}

TEST(Index, LoadRejectsForeignFiles) {
  curricula::testing::TempDir tmp;
  curricula::testing::write_file(tmp / "bad.bin", "not an index at all");
  EXPECT_THROW(InvertedIndex::load(tmp / "bad.bin"), DataError);
}
