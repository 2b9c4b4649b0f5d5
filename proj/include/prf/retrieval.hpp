#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prf/index.hpp"

namespace prf {

class EmptyQueryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sparse distribution over vocabulary terms. Weights are strictly positive
// and sum to one.
struct QueryLM {
  std::map<TermId, double> weights;

  double total() const;
  bool empty() const { return weights.empty(); }
};

struct ScoredDoc {
  DocOrd doc;
  double score;
};

// Non-increasing scores; ties ordered by ascending external doc id.
struct ScoredList {
  std::string query_id;
  std::vector<ScoredDoc> entries;

  std::vector<DocOrd> docs() const;
};

inline constexpr double kDefaultMu = 1000.0;

// c(w,q)/|q| over in-vocabulary terms. Out-of-vocabulary terms are dropped
// with a warning; throws EmptyQueryError if none survive.
QueryLM mle_query(const Index& index, std::span<const std::string> terms);

// (c(w,d) + mu p(w|C)) / (|d| + mu)
double dirichlet_prob(const Index& index, TermId term, DocOrd doc, double mu);

// Σ_w p(w|q) log p_mu(w|d), the rank-equivalent form of negative KL divergence.
double score_kl(const Index& index, const QueryLM& qlm, DocOrd doc, double mu);

// Top-k documents among those with |d| > 0.
ScoredList retrieve(const Index& index, const QueryLM& qlm, std::size_t k, double mu,
                    std::string query_id = {});

// (1 - alpha) feedback + alpha original, over the union of supports.
QueryLM interpolate_query(const QueryLM& feedback, const QueryLM& original, double alpha);

// Scales weights to sum to one and drops non-positive entries.
QueryLM normalized(std::map<TermId, double> weights);

// "topic Q0 docid rank score tag" per line.
void write_trec_run(std::ostream& out, const Index& index, const ScoredList& list, const std::string& tag);

}  // namespace prf
