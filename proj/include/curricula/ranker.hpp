#pragma once

// A small differentiable scorer over hand-built query-document features:
// one tanh hidden layer and a scalar output, with squared-error (pointwise)
// and softmax cross-entropy (pairwise) losses, analytic gradients, and Adam.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "curricula/binary_io.hpp"
#include "curricula/error.hpp"
#include "curricula/first_stage.hpp"
#include "curricula/rng.hpp"

namespace curricula {

// ---------------------------------------------------------------- features

enum Feature : std::size_t {
  kBm25Score = 0,
  kQueryCoverage,
  kIdfWeightedOverlap,
  kLogDocLength,
  kBigramMatches,
  kTopicalMatch,
  kFeatureCount
};

inline constexpr const char* kFeatureNames[kFeatureCount] = {
    "bm25_score", "query_coverage", "idf_weighted_overlap", "log_doc_length",
    "exact_bigram_match_count", "topical_match"};

using FeatureVector = std::vector<double>;

class Featurizer {
 public:
  // `term_clusters` maps analyzed tokens to topic clusters; tokens without a
  // cluster never contribute to the topical-match feature.
  Featurizer(const InvertedIndex& index, BM25Params params,
             const std::unordered_map<std::string, int>& term_clusters = {})
      : index_(&index), params_(params), cluster_of_(index.vocabulary_size(), -1) {
    for (const auto& [token, cluster] : term_clusters) {
      if (auto t = index.term_id(token)) cluster_of_[*t] = cluster;
    }
  }

  FeatureVector operator()(const std::string& query_text, const std::string& doc_id) const {
    return (*this)(index_->analyze(query_text), index_->require_doc(doc_id));
  }

  FeatureVector operator()(const std::vector<std::string>& query_terms, std::uint32_t doc) const {
    FeatureVector f(kFeatureCount, 0.0);
    const auto& dterms = index_->doc_terms(doc);
    f[kBm25Score] = bm25_score(*index_, params_, query_terms, doc);
    f[kLogDocLength] = std::log1p(static_cast<double>(dterms.size()));

    // Distinct query terms; out-of-vocabulary terms get the df = 0 idf.
    std::vector<std::string> distinct;
    for (const auto& t : query_terms) {
      if (std::find(distinct.begin(), distinct.end(), t) == distinct.end()) distinct.push_back(t);
    }
    if (distinct.empty()) return f;

    std::unordered_set<std::uint32_t> doc_set(dterms.begin(), dterms.end());
    double idf_total = 0.0, idf_matched = 0.0;
    std::size_t covered = 0, topical = 0;
    const double n = static_cast<double>(index_->doc_count());
    for (const auto& term : distinct) {
      auto t = index_->term_id(term);
      const double idf = t ? index_->idf(*t) : std::log(1.0 + (n + 0.5) / 0.5);
      idf_total += idf;
      if (t && doc_set.count(*t)) {
        ++covered;
        idf_matched += idf;
      }
      if (t && cluster_of_[*t] >= 0) {
        const int c = cluster_of_[*t];
        const bool has_mate = std::any_of(dterms.begin(), dterms.end(), [&](std::uint32_t d) {
          return d != *t && cluster_of_[d] == c;
        });
        topical += has_mate ? 1 : 0;
      }
    }
    const double nd = static_cast<double>(distinct.size());
    f[kQueryCoverage] = static_cast<double>(covered) / nd;
    f[kIdfWeightedOverlap] = idf_total > 0.0 ? idf_matched / idf_total : 0.0;
    f[kTopicalMatch] = static_cast<double>(topical) / nd;

    // Occurrences in the document of consecutive query-term pairs.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> bigrams;
    for (std::size_t i = 0; i + 1 < query_terms.size(); ++i) {
      auto a = index_->term_id(query_terms[i]);
      auto b = index_->term_id(query_terms[i + 1]);
      if (a && b) bigrams.emplace_back(*a, *b);
    }
    std::size_t count = 0;
    for (std::size_t j = 0; j + 1 < dterms.size(); ++j) {
      for (const auto& [a, b] : bigrams) {
        if (dterms[j] == a && dterms[j + 1] == b) {
          ++count;
          break;
        }
      }
    }
    f[kBigramMatches] = static_cast<double>(count);
    return f;
  }

 private:
  const InvertedIndex* index_;
  BM25Params params_;
  std::vector<int> cluster_of_;  // by term id
};

// Per-feature affine standardization fitted once on training pairs.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // population stddev, 1 where the feature is constant

  static Standardizer fit(const std::vector<FeatureVector>& rows) {
    if (rows.empty()) throw InvalidArgument("Standardizer::fit: no rows");
    const std::size_t dim = rows.front().size();
    Standardizer s{std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
    for (const auto& r : rows) {
      for (std::size_t j = 0; j < dim; ++j) s.mean[j] += r[j];
    }
    for (auto& m : s.mean) m /= static_cast<double>(rows.size());
    for (const auto& r : rows) {
      for (std::size_t j = 0; j < dim; ++j) s.scale[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
    }
    for (auto& v : s.scale) {
      v = std::sqrt(v / static_cast<double>(rows.size()));
      if (v == 0.0) v = 1.0;
    }
    return s;
  }

  void apply(FeatureVector& f) const {
    if (f.size() != mean.size()) throw InvalidArgument("Standardizer: dimension mismatch");
    for (std::size_t j = 0; j < f.size(); ++j) f[j] = (f[j] - mean[j]) / scale[j];
  }
};

// ---------------------------------------------------------------- model

class RankerModel {
 public:
  RankerModel(std::size_t in_dim, std::size_t hidden, std::uint64_t seed = 0)
      : in_dim_(in_dim), hidden_(hidden), seed_(seed), theta_(parameter_count(in_dim, hidden), 0.0) {
    if (in_dim == 0 || hidden == 0) throw InvalidArgument("RankerModel: dimensions must be positive");
  }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every layer.
  static RankerModel initialized(std::size_t in_dim, std::size_t hidden, std::uint64_t seed) {
    RankerModel m(in_dim, hidden, seed);
    Rng rng(seed);
    const double a1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
    const double a2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    const std::size_t first = hidden * in_dim + hidden;
    for (std::size_t i = 0; i < m.theta_.size(); ++i) {
      const double a = i < first ? a1 : a2;
      m.theta_[i] = rng.uniform(-a, a);
    }
    return m;
  }

  static std::size_t parameter_count(std::size_t in_dim, std::size_t hidden) {
    return (in_dim + 1) * hidden + (hidden + 1);
  }

  std::size_t in_dim() const { return in_dim_; }
  std::size_t hidden() const { return hidden_; }
  std::uint64_t seed() const { return seed_; }
  std::span<double> theta() { return theta_; }
  std::span<const double> theta() const { return theta_; }

  // Layout: W1 (hidden x in_dim, row-major) | b1 | w2 | b2
  double w1(std::size_t j, std::size_t k) const { return theta_[j * in_dim_ + k]; }
  double b1(std::size_t j) const { return theta_[hidden_ * in_dim_ + j]; }
  double w2(std::size_t j) const { return theta_[hidden_ * in_dim_ + hidden_ + j]; }
  double b2() const { return theta_.back(); }

  double score(std::span<const double> x) const {
    check_dim(x);
    double out = b2();
    for (std::size_t j = 0; j < hidden_; ++j) out += w2(j) * std::tanh(pre_activation(j, x));
    return out;
  }

  // Adds scale * d(score)/d(theta) into `grad`; returns the score.
  double score_and_accumulate_grad(std::span<const double> x, double scale, std::span<double> grad) const {
    check_dim(x);
    double out = b2();
    const std::size_t b1_off = hidden_ * in_dim_;
    const std::size_t w2_off = b1_off + hidden_;
    for (std::size_t j = 0; j < hidden_; ++j) {
      const double a = std::tanh(pre_activation(j, x));
      out += w2(j) * a;
      const double dz = scale * w2(j) * (1.0 - a * a);
      for (std::size_t k = 0; k < in_dim_; ++k) grad[j * in_dim_ + k] += dz * x[k];
      grad[b1_off + j] += dz;
      grad[w2_off + j] += scale * a;
    }
    grad[theta_.size() - 1] += scale;
    return out;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    binio::put_magic(out, kMagic);
    binio::put_uint<std::uint32_t>(out, kVersion);
    binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(in_dim_));
    binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(hidden_));
    binio::put_uint<std::uint64_t>(out, seed_);
    binio::put_uint<std::uint64_t>(out, theta_.size());
    for (double v : theta_) binio::put_f64(out, v);
    if (!out) throw DataError("write failed: " + path.string());
  }

  static RankerModel load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    binio::expect_magic(in, kMagic, "ranker checkpoint");
    auto version = binio::get_uint<std::uint32_t>(in);
    if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
    auto in_dim = binio::get_uint<std::uint32_t>(in);
    auto hidden = binio::get_uint<std::uint32_t>(in);
    auto seed = binio::get_uint<std::uint64_t>(in);
    auto count = binio::get_uint<std::uint64_t>(in);
    if (in_dim == 0 || hidden == 0 || count != parameter_count(in_dim, hidden)) {
      throw DataError("checkpoint dimensions inconsistent");
    }
    RankerModel m(in_dim, hidden, seed);
    for (auto& v : m.theta_) {
      v = binio::get_f64(in);
      if (!std::isfinite(v)) throw DataError("checkpoint contains non-finite parameter");
    }
    return m;
  }

  bool operator==(const RankerModel&) const = default;

 private:
  static constexpr char kMagic[9] = "CLRANKER";
  static constexpr std::uint32_t kVersion = 1;

  void check_dim(std::span<const double> x) const {
    if (x.size() != in_dim_) {
      throw InvalidArgument("feature dimension " + std::to_string(x.size()) + " != model input " +
                            std::to_string(in_dim_));
    }
  }

  double pre_activation(std::size_t j, std::span<const double> x) const {
    double z = b1(j);
    for (std::size_t k = 0; k < in_dim_; ++k) z += w1(j, k) * x[k];
    return z;
  }

  std::size_t in_dim_;
  std::size_t hidden_;
  std::uint64_t seed_;
  std::vector<double> theta_;
};

// ---------------------------------------------------------------- losses

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// (s - R)^2; adds scale * gradient into `grad` and returns the unscaled loss.
inline double pointwise_loss_accumulate(const RankerModel& model, std::span<const double> x, double s,
                                        double scale, std::span<double> grad) {
  const double r = model.score(x);
  const double residual = s - r;
  model.score_and_accumulate_grad(x, scale * (-2.0 * residual), grad);
  return residual * residual;
}

// -ln softmax(R+, R-)[+] computed as max - R+ + log1p(exp(-|R+ - R-|)).
inline double pairwise_loss_value(double pos_score, double neg_score) {
  const double hi = std::max(pos_score, neg_score);
  return (hi - pos_score) + std::log1p(std::exp(-std::fabs(pos_score - neg_score)));
}

// Probability the softmax assigns to the positive document.
inline double pairwise_probability(double pos_score, double neg_score) {
  const double diff = pos_score - neg_score;
  return diff >= 0 ? 1.0 / (1.0 + std::exp(-diff)) : std::exp(diff) / (1.0 + std::exp(diff));
}

inline double pairwise_loss_accumulate(const RankerModel& model, std::span<const double> pos,
                                       std::span<const double> neg, double scale, std::span<double> grad) {
  const double sp = model.score(pos);
  const double sn = model.score(neg);
  const double p = pairwise_probability(sp, sn);
  model.score_and_accumulate_grad(pos, scale * (p - 1.0), grad);
  model.score_and_accumulate_grad(neg, scale * (1.0 - p), grad);
  return pairwise_loss_value(sp, sn);
}

inline LossAndGrad pointwise_loss_and_grad(const RankerModel& model, std::span<const double> x, double s) {
  LossAndGrad out{0.0, std::vector<double>(model.theta().size(), 0.0)};
  out.loss = pointwise_loss_accumulate(model, x, s, 1.0, out.grad);
  return out;
}

inline LossAndGrad pairwise_loss_and_grad(const RankerModel& model, std::span<const double> pos,
                                          std::span<const double> neg) {
  LossAndGrad out{0.0, std::vector<double>(model.theta().size(), 0.0)};
  out.loss = pairwise_loss_accumulate(model, pos, neg, 1.0, out.grad);
  return out;
}

// ---------------------------------------------------------------- optimizer

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t parameter_count, AdamConfig config = {})
      : config_(config), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {}

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return t_; }

  void step(RankerModel& model, std::span<const double> grad) {
    auto theta = model.theta();
    if (grad.size() != theta.size()) throw InvalidArgument("Adam: gradient size mismatch");
    for (double g : grad) {
      if (!std::isfinite(g)) throw NumericalError("Adam: non-finite gradient");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grad[i];
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
      const double update = config_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config_.epsilon);
      if (!std::isfinite(update)) throw NumericalError("Adam: non-finite update");
      theta[i] -= update;
    }
  }

  bool operator==(const AdamOptimizer&) const = default;

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::int64_t t_ = 0;
};

}  // namespace curricula
