#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "prf/feedback_classic.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace prf;
using prf::testing::BruteCorpus;
using prf::testing::index_of;

namespace {

std::vector<std::vector<std::string>> split_all(const std::vector<std::string>& texts) {
  std::vector<std::vector<std::string>> out;
  for (const auto& t : texts) {
    std::istringstream in(t);
    std::vector<std::string> words;
    for (std::string w; in >> w;) words.push_back(w);
    out.push_back(words);
  }
  return out;
}

std::map<std::string, double> by_term(const FeedbackLM& lm, const Index& idx) {
  std::map<std::string, double> out;
  for (const auto& [t, p] : lm.weights) out[idx.term(t)] = p;
  return out;
}

void expect_close(const std::map<std::string, double>& got, const std::map<std::string, double>& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (const auto& [w, p] : want) {
    ASSERT_TRUE(got.contains(w)) << w;
    EXPECT_NEAR(got.at(w), p, tol) << w;
  }
}

std::vector<TermId> ids(const Index& idx, const std::vector<std::string>& words) {
  std::vector<TermId> out;
  for (const auto& w : words) out.push_back(*idx.term_id(w));
  return out;
}

const std::vector<std::string> kToy{"a b b c", "a c d d e", "b e f f f", "a a g", "c h"};

}  // namespace

TEST(Rm1, SingleDocumentIsDocumentModel) {
  const auto idx = index_of(kToy);
  const BruteCorpus c(split_all(kToy));
  const std::vector<DocOrd> f{1};
  const auto lm = rm1(idx, feedback_counts(idx, f), ids(idx, {"a"}), 10.0);
  std::map<std::string, double> want;
  double s = 0.0;
  for (const auto& w : c.docs[1]) want[w] = c.smoothed(w, 1, 10.0);
  for (const auto& [w, p] : want) s += p;
  for (auto& [w, p] : want) p /= s;
  expect_close(by_term(lm, idx), want, 1e-12);

  // Two copies of the same document give the same model.
  const auto twice = index_of({"x y y", "x y y", "z"});
  const auto one = rm1(twice, feedback_counts(twice, std::vector<DocOrd>{0}), ids(twice, {"x"}), 10.0);
  const auto two = rm1(twice, feedback_counts(twice, std::vector<DocOrd>{0, 1}), ids(twice, {"x"}), 10.0);
  expect_close(by_term(two, twice), by_term(one, twice), 1e-12);
}

TEST(Rm1Rm2, MatchBruteForce) {
  const auto idx = index_of(kToy);
  const BruteCorpus c(split_all(kToy));
  const std::vector<DocOrd> f{0, 1, 3};
  const std::vector<std::size_t> fb{0, 1, 3};
  const std::vector<std::string> q{"a", "c"};
  const auto set = feedback_counts(idx, f);
  for (double mu : {1.0, 10.0, 1000.0}) {
    expect_close(by_term(rm1(idx, set, ids(idx, q), mu), idx), prf::testing::brute_rm1(c, fb, q, mu), 1e-12);
    expect_close(by_term(rm2(idx, set, ids(idx, q), mu), idx), prf::testing::brute_rm2(c, fb, q, mu), 1e-12);
  }
}

TEST(Rm2, CollapsesToRm1) {
  const auto idx = index_of(kToy);
  const BruteCorpus c(split_all(kToy));
  const std::vector<DocOrd> single{2};
  const auto one = feedback_counts(idx, single);
  expect_close(by_term(rm2(idx, one, ids(idx, {"b"})), idx), by_term(rm1(idx, one, ids(idx, {"b"})), idx), 1e-12);
  // One query term: Σ_d p(q|d) p(w|d) p(d) is RM1's numerator.
  const auto set = feedback_counts(idx, std::vector<DocOrd>{0, 1, 2});
  expect_close(by_term(rm2(idx, set, ids(idx, {"b"})), idx), by_term(rm1(idx, set, ids(idx, {"b"})), idx), 1e-12);

  // With k query terms and one document the product leaves p(w|d)^k / p(w)^(k-1).
  std::map<std::string, double> want;
  double s = 0.0;
  for (const auto& w : c.docs[2]) want[w] = std::pow(c.smoothed(w, 2, kDefaultMu), 2) / c.coll.at(w);
  for (const auto& [w, p] : want) s += p;
  for (auto& [w, p] : want) p /= s;
  expect_close(by_term(rm2(idx, one, ids(idx, {"b", "f"})), idx), want, 1e-12);
}

TEST(Mixture, ZeroLambdaIsMaximumLikelihood) {
  const auto idx = index_of(kToy);
  const auto set = feedback_counts(idx, std::vector<DocOrd>{0, 1});
  const auto [lm, trace] = mixture_em(idx, set, 0.0, 1e-10, 50);
  for (const auto& [t, p] : lm.weights) EXPECT_NEAR(p, set.p_ml(t), 1e-12);
  EXPECT_TRUE(trace.converged);
  EXPECT_LE(trace.iterations, 2);
}

TEST(Mixture, FeedbackOnlyTermGainsWeight) {
  const std::vector<std::string> docs{"rare the the of", "rare the of and", "the of and", "the and of", "the of"};
  const auto idx = index_of(docs);
  const auto set = feedback_counts(idx, std::vector<DocOrd>{0, 1});
  const auto [lm, trace] = mixture_em(idx, set, 0.9, 1e-10, 500);
  const auto rare = *idx.term_id("rare");
  EXPECT_GT(lm.weights.at(rare), set.p_ml(rare));
  EXPECT_NEAR(lm.total(), 1.0, 1e-9);
  for (std::size_t i = 1; i < trace.loglik.size(); ++i) {
    EXPECT_GE(trace.loglik[i], trace.loglik[i - 1] - 1e-12 * std::abs(trace.loglik[i - 1]));
  }
  EXPECT_THROW(mixture_em(idx, set, 1.0, 1e-6, 10), std::invalid_argument);
}

TEST(Dmm, SingleDocumentHalfLambda) {
  const auto idx = index_of(kToy);
  const BruteCorpus c(split_all(kToy));
  const double mu = 5.0;
  const auto lm = dmm(idx, feedback_counts(idx, std::vector<DocOrd>{1}), 0.5, mu);
  std::map<std::string, double> want;
  double s = 0.0;
  for (const auto& w : c.docs[1]) want[w] = std::pow(c.smoothed(w, 1, mu), 2) / c.coll.at(w);
  for (const auto& [w, p] : want) s += p;
  for (auto& [w, p] : want) p /= s;
  expect_close(by_term(lm, idx), want, 1e-12);
  EXPECT_THROW(dmm(idx, feedback_counts(idx, std::vector<DocOrd>{1}), 1.0), std::invalid_argument);
}

TEST(Dmm, MatchesBruteForceAndSmallLambdaLimit) {
  const auto idx = index_of(kToy);
  const BruteCorpus c(split_all(kToy));
  const std::vector<std::size_t> fb{0, 2, 4};
  const auto set = feedback_counts(idx, std::vector<DocOrd>{0, 2, 4});
  expect_close(by_term(dmm(idx, set, 0.3, 20.0), idx), prf::testing::brute_dmm(c, fb, 0.3, 20.0), 1e-12);

  // lambda = 0: geometric mean of the smoothed document models.
  std::map<std::string, double> geo;
  double s = 0.0;
  for (const auto& [w, p] : prf::testing::brute_dmm(c, fb, 0.3, 20.0)) {
    double l = 0.0;
    for (auto d : fb) l += std::log(c.smoothed(w, d, 20.0));
    geo[w] = std::exp(l / 3.0);
    s += geo[w];
  }
  for (auto& [w, p] : geo) p /= s;
  expect_close(by_term(dmm(idx, set, 0.0, 20.0), idx), geo, 1e-12);
}

TEST(Medmm, ReducesToDmmAndMatchesBruteForce) {
  const auto idx = index_of(kToy);
  const BruteCorpus c(split_all(kToy));
  const std::vector<std::size_t> fb{0, 1, 2};
  const auto set = feedback_counts(idx, std::vector<DocOrd>{0, 1, 2});
  expect_close(by_term(medmm(idx, set, 0.4, 0.6, 50.0), idx), by_term(dmm(idx, set, 0.4, 50.0), idx), 1e-12);
  expect_close(by_term(medmm(idx, set, 0.1, 1.2, 50.0), idx), prf::testing::brute_medmm(c, fb, 0.1, 1.2, 50.0),
               1e-12);
  EXPECT_THROW(medmm(idx, set, 0.1, 0.0), std::invalid_argument);

  const auto flat = medmm(idx, set, 0.1, 1e9, 50.0);
  for (const auto& [t, p] : flat.weights) EXPECT_NEAR(p, 1.0 / flat.weights.size(), 1e-8);
}

TEST(Medmm, IsLocalMaximumOfObjective) {
  const auto idx = index_of(kToy);
  const BruteCorpus c(split_all(kToy));
  const std::vector<std::size_t> fb{0, 1, 2};
  const double lambda = 0.1, beta = 1.2, mu = 50.0;
  const auto p = by_term(medmm(idx, feedback_counts(idx, std::vector<DocOrd>{0, 1, 2}), lambda, beta, mu), idx);
  const double at = prf::testing::medmm_objective(c, fb, p, lambda, beta, mu);
  // Mass moved between any two terms lowers the objective.
  for (const auto& [u, pu] : p) {
    for (const auto& [v, pv] : p) {
      if (u == v) continue;
      auto q = p;
      const double eps = 1e-4 * std::min(pu, pv);
      q[u] += eps;
      q[v] -= eps;
      EXPECT_LT(prf::testing::medmm_objective(c, fb, q, lambda, beta, mu), at) << u << " -> " << v;
    }
  }
}

TEST(Rfmf, FeedbackOnlyTermIsExpanded) {
  const auto idx = index_of({"q x x y", "q x z", "y z w", "unrelated words here"});
  const auto set = feedback_counts(idx, std::vector<DocOrd>{0, 1});
  const QueryLM orig{{{*idx.term_id("q"), 1.0}}};
  const auto r = rfmf(idx, set, orig, 2, 300, 11);
  EXPECT_GT(r.model.weights.at(*idx.term_id("x")), 0.0);
  EXPECT_NEAR(r.model.total(), 1.0, 1e-9);
  EXPECT_EQ(r.A.rows(), 3);
  EXPECT_EQ(static_cast<std::size_t>(r.A.cols()), r.columns.size());

  const auto again = rfmf(idx, set, orig, 2, 300, 11);
  EXPECT_EQ(again.model.weights, r.model.weights);
  EXPECT_THROW(rfmf(idx, set, orig, 0, 10, 1), std::invalid_argument);
}

TEST(Nmf, ExactRankOne) {
  Eigen::VectorXd u(4), v(5);
  u << 1, 2, 0.5, 3;
  v << 2, 1, 4, 0.25, 1;
  const Eigen::MatrixXd A = u * v.transpose();
  const auto f = nmf(A, 1, 500, 3);
  EXPECT_LE(f.residuals.back(), 1e-6);
  EXPECT_THROW(nmf(Eigen::MatrixXd::Constant(2, 2, -1.0), 1, 10, 1), std::invalid_argument);
}

TEST(Truncate, TopKRenormalized) {
  const auto idx = index_of({"a b c"});
  const auto a = *idx.term_id("a"), b = *idx.term_id("b"), c = *idx.term_id("c");
  FeedbackLM lm;
  lm.weights = {{a, 0.5}, {b, 0.3}, {c, 0.2}};
  const auto two = truncate_terms(lm, 2, idx);
  EXPECT_EQ(two.weights.size(), 2u);
  EXPECT_DOUBLE_EQ(two.weights.at(a), 0.625);
  EXPECT_DOUBLE_EQ(two.weights.at(b), 0.375);
  EXPECT_EQ(truncate_terms(lm, 1, idx).weights.at(a), 1.0);
  EXPECT_EQ(truncate_terms(lm, 10, idx).weights, lm.weights);
  EXPECT_THROW(truncate_terms(lm, 0, idx), std::invalid_argument);

  FeedbackLM tie;
  tie.weights = {{c, 0.5}, {a, 0.5}};
  EXPECT_TRUE(truncate_terms(tie, 1, idx).weights.contains(a));
}

TEST(FeedbackModels, AreDistributions) {
  const auto idx = index_of(kToy);
  const auto set = feedback_counts(idx, std::vector<DocOrd>{0, 1, 2, 3});
  const auto q = ids(idx, {"a"});
  const std::vector<FeedbackLM> models{rm1(idx, set, q), rm2(idx, set, q), mixture_em(idx, set, 0.5, 1e-8, 100).first,
                                       dmm(idx, set, 0.5), medmm(idx, set, 0.1, 1.2)};
  for (const auto& m : models) {
    EXPECT_NEAR(m.total(), 1.0, 1e-9) << to_string(m.method);
    for (const auto& [t, p] : m.weights) EXPECT_GT(p, 0.0);
  }
}
