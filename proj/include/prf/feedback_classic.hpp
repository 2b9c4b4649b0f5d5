#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "prf/index.hpp"
#include "prf/nmf.hpp"
#include "prf/retrieval.hpp"

namespace prf {

enum class FeedbackMethod { Rm1, Rm2, Mixture, Dmm, Medmm, Rfmf, Ecdmm };

std::string_view to_string(FeedbackMethod m);

// Raised when the feedback documents carry no usable evidence for the query.
class DegenerateFeedbackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FeedbackLM {
  std::map<TermId, double> weights;
  FeedbackMethod method = FeedbackMethod::Rm1;

  QueryLM as_query() const { return QueryLM{weights}; }
  double total() const;
};

// Relevance model 1: Σ_d p(w|d) p(d) Π_i p(q_i|d), uniform document prior,
// Dirichlet-smoothed document models. Candidates are the terms of F.
FeedbackLM rm1(const Index& index, const FeedbackSet& fb, std::span<const TermId> query_terms,
               double mu = kDefaultMu);

// Relevance model 2: p(w) Π_i Σ_d p(q_i|d) p(w|d) p(d) / p(w), with p(w) = p(w|C).
FeedbackLM rm2(const Index& index, const FeedbackSet& fb, std::span<const TermId> query_terms,
               double mu = kDefaultMu);

struct MixtureTrace {
  int iterations = 0;
  // Data log-likelihood of F; entry 0 is the initial estimate.
  std::vector<double> loglik;
  bool converged = false;
};

// Two-component mixture of the feedback model and the collection model,
// fitted by EM from p0 = p_ml(w|F). Stops once the largest weight change is
// below `tol` or after `max_iter` rounds.
std::pair<FeedbackLM, MixtureTrace> mixture_em(const Index& index, const FeedbackSet& fb, double lambda, double tol,
                                               int max_iter);

// Divergence minimization, lambda in [0, 1).
FeedbackLM dmm(const Index& index, const FeedbackSet& fb, double lambda, double mu = kDefaultMu);

// Closed-form maximum-entropy divergence minimization with uniform document
// weights: p(w) ∝ exp((mean_d log p(w|d) - lambda log p(w|C)) / beta).
FeedbackLM medmm(const Index& index, const FeedbackSet& fb, double lambda, double beta, double mu = kDefaultMu);

struct RfmfResult {
  FeedbackLM model;
  std::vector<TermId> columns;
  Eigen::MatrixXd A;
  NmfFactors<double> factors;
};

// Factorizes the (|F|+1) x terms count matrix whose last row is the query,
// rescaled to the mean feedback-document length, and reads the re-weighted
// query off the last row of UV.
RfmfResult rfmf(const Index& index, const FeedbackSet& fb, const QueryLM& original, int rank, int iterations,
                std::uint64_t seed);

// Keeps the top_k heaviest terms (ties by term string) and renormalizes.
FeedbackLM truncate_terms(const FeedbackLM& lm, std::size_t top_k, const Index& index);

// Terms with their weights, heaviest first, ties by term string.
std::vector<std::pair<TermId, double>> ranked_terms(const std::map<TermId, double>& weights, const Index& index);

}  // namespace prf
