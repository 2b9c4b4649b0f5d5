#include "prf/feedback_classic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace prf {

namespace {

void require_feedback(const FeedbackSet& fb) {
  if (fb.docs.empty() || fb.total == 0) throw std::invalid_argument("empty feedback set");
}

// Normalizes exp(logit) over the support.
std::map<TermId, double> softmax(const std::map<TermId, double>& logits) {
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& [t, z] : logits) top = std::max(top, z);
  if (!std::isfinite(top)) throw DegenerateFeedbackError("feedback logits are not finite");
  std::map<TermId, double> out;
  double sum = 0.0;
  for (const auto& [t, z] : logits) {
    const double e = std::exp(z - top);
    out.emplace(t, e);
    sum += e;
  }
  for (auto& [t, w] : out) w /= sum;
  return out;
}

FeedbackLM finish(std::map<TermId, double> weights, FeedbackMethod method) {
  auto q = normalized(std::move(weights));
  if (q.empty()) throw DegenerateFeedbackError(fmt::format("{} produced an empty model", to_string(method)));
  return FeedbackLM{std::move(q.weights), method};
}

// mean_d log p_mu(w|d) for every candidate term.
std::map<TermId, double> mean_log_doc_models(const Index& index, const FeedbackSet& fb, double mu) {
  std::map<TermId, double> out;
  const double inv = 1.0 / static_cast<double>(fb.docs.size());
  for (const auto& [term, c] : fb.term_counts) {
    double s = 0.0;
    for (const auto d : fb.docs) s += std::log(dirichlet_prob(index, term, d, mu));
    out.emplace(term, s * inv);
  }
  return out;
}

}  // namespace

std::string_view to_string(FeedbackMethod m) {
  switch (m) {
    case FeedbackMethod::Rm1:
      return "rm1";
    case FeedbackMethod::Rm2:
      return "rm2";
    case FeedbackMethod::Mixture:
      return "mixture";
    case FeedbackMethod::Dmm:
      return "dmm";
    case FeedbackMethod::Medmm:
      return "medmm";
    case FeedbackMethod::Rfmf:
      return "rfmf";
    case FeedbackMethod::Ecdmm:
      return "ecdmm";
  }
  return "unknown";
}

double FeedbackLM::total() const {
  double s = 0.0;
  for (const auto& [t, w] : weights) s += w;
  return s;
}

FeedbackLM rm1(const Index& index, const FeedbackSet& fb, std::span<const TermId> query_terms, double mu) {
  require_feedback(fb);
  const std::size_t n = fb.docs.size();
  std::vector<double> log_ql(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (const auto q : query_terms) log_ql[j] += std::log(dirichlet_prob(index, q, fb.docs[j], mu));
  }
  const double top = *std::max_element(log_ql.begin(), log_ql.end());
  if (!std::isfinite(top)) throw DegenerateFeedbackError("every feedback document has zero query likelihood");
  // The uniform prior 1/|F| is a constant factor and cancels on normalization.
  std::vector<double> doc_weight(n);
  for (std::size_t j = 0; j < n; ++j) doc_weight[j] = std::exp(log_ql[j] - top);

  std::map<TermId, double> weights;
  for (const auto& [term, c] : fb.term_counts) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += dirichlet_prob(index, term, fb.docs[j], mu) * doc_weight[j];
    weights.emplace(term, s);
  }
  return finish(std::move(weights), FeedbackMethod::Rm1);
}

FeedbackLM rm2(const Index& index, const FeedbackSet& fb, std::span<const TermId> query_terms, double mu) {
  require_feedback(fb);
  const std::size_t n = fb.docs.size();
  const double prior = 1.0 / static_cast<double>(n);

  std::vector<std::vector<double>> pq(query_terms.size(), std::vector<double>(n));
  for (std::size_t i = 0; i < query_terms.size(); ++i) {
    for (std::size_t j = 0; j < n; ++j) pq[i][j] = dirichlet_prob(index, query_terms[i], fb.docs[j], mu);
  }

  std::map<TermId, double> logits;
  std::vector<double> pw(n);
  for (const auto& [term, c] : fb.term_counts) {
    const double p_marginal = p_collection(index, term);
    for (std::size_t j = 0; j < n; ++j) pw[j] = dirichlet_prob(index, term, fb.docs[j], mu);
    double z = std::log(p_marginal);
    for (std::size_t i = 0; i < query_terms.size(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += pq[i][j] * pw[j] * prior;
      z += std::log(s / p_marginal);
    }
    logits.emplace(term, z);
  }
  return finish(softmax(logits), FeedbackMethod::Rm2);
}

std::pair<FeedbackLM, MixtureTrace> mixture_em(const Index& index, const FeedbackSet& fb, double lambda, double tol,
                                               int max_iter) {
  require_feedback(fb);
  if (!(lambda >= 0.0 && lambda < 1.0)) throw std::invalid_argument("mixture lambda must be in [0, 1)");

  std::vector<TermId> terms;
  std::vector<double> counts, background, p;
  for (const auto& [term, c] : fb.term_counts) {
    terms.push_back(term);
    counts.push_back(static_cast<double>(c));
    background.push_back(p_collection(index, term));
    p.push_back(fb.p_ml(term));
  }
  const auto loglik = [&](const std::vector<double>& model) {
    double ll = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i) {
      ll += counts[i] * std::log((1.0 - lambda) * model[i] + lambda * background[i]);
    }
    return ll;
  };

  MixtureTrace trace;
  trace.loglik.push_back(loglik(p));
  std::vector<double> next(p.size());
  for (int it = 0; it < max_iter; ++it) {
    double norm = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double topical = (1.0 - lambda) * p[i];
      const double t = topical / (topical + lambda * background[i]);
      next[i] = counts[i] * t;
      norm += next[i];
    }
    double change = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      next[i] /= norm;
      change = std::max(change, std::abs(next[i] - p[i]));
    }
    p.swap(next);
    trace.iterations = it + 1;
    trace.loglik.push_back(loglik(p));
    if (change < tol) {
      trace.converged = true;
      break;
    }
  }

  std::map<TermId, double> weights;
  for (std::size_t i = 0; i < terms.size(); ++i) weights.emplace(terms[i], p[i]);
  return {finish(std::move(weights), FeedbackMethod::Mixture), std::move(trace)};
}

FeedbackLM dmm(const Index& index, const FeedbackSet& fb, double lambda, double mu) {
  require_feedback(fb);
  if (!(lambda >= 0.0 && lambda < 1.0)) throw std::invalid_argument("dmm lambda must be in [0, 1)");
  const double a = 1.0 / (1.0 - lambda);
  const double b = lambda / (1.0 - lambda);
  auto logits = mean_log_doc_models(index, fb, mu);
  for (auto& [term, z] : logits) z = a * z - b * std::log(p_collection(index, term));
  return finish(softmax(logits), FeedbackMethod::Dmm);
}

FeedbackLM medmm(const Index& index, const FeedbackSet& fb, double lambda, double beta, double mu) {
  require_feedback(fb);
  if (!(beta > 0.0)) throw std::invalid_argument("medmm beta must be positive");
  auto logits = mean_log_doc_models(index, fb, mu);
  for (auto& [term, z] : logits) z = (z - lambda * std::log(p_collection(index, term))) / beta;
  return finish(softmax(logits), FeedbackMethod::Medmm);
}

RfmfResult rfmf(const Index& index, const FeedbackSet& fb, const QueryLM& original, int rank, int iterations,
                std::uint64_t seed) {
  require_feedback(fb);
  RfmfResult out;
  for (const auto& [term, c] : fb.term_counts) out.columns.push_back(term);
  for (const auto& [term, w] : original.weights) {
    if (!fb.term_counts.contains(term)) out.columns.push_back(term);
  }
  std::sort(out.columns.begin(), out.columns.end());

  const auto m = static_cast<Eigen::Index>(fb.docs.size() + 1);
  const auto n = static_cast<Eigen::Index>(out.columns.size());
  if (rank < 1 || rank > std::min(m, n)) {
    throw std::invalid_argument(fmt::format("rfmf rank {} outside [1, {}]", rank, std::min(m, n)));
  }
  out.A = Eigen::MatrixXd::Zero(m, n);
  double mean_len = 0.0;
  for (Eigen::Index i = 0; i + 1 < m; ++i) {
    const DocOrd d = fb.docs[static_cast<std::size_t>(i)];
    mean_len += index.doc_len(d);
    for (Eigen::Index c = 0; c < n; ++c) out.A(i, c) = index.count(out.columns[static_cast<std::size_t>(c)], d);
  }
  mean_len /= static_cast<double>(m - 1);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto it = original.weights.find(out.columns[static_cast<std::size_t>(c)]);
    if (it != original.weights.end()) out.A(m - 1, c) = it->second * mean_len;
  }
  if (out.A.isZero(0.0)) throw DegenerateFeedbackError("rfmf: all-zero term matrix");

  out.factors = nmf(out.A, rank, iterations, seed);
  const Eigen::RowVectorXd query_row = out.factors.U.row(m - 1) * out.factors.V;
  std::map<TermId, double> weights;
  for (Eigen::Index c = 0; c < n; ++c) {
    if (query_row(c) > 0.0) weights.emplace(out.columns[static_cast<std::size_t>(c)], query_row(c));
  }
  out.model = finish(std::move(weights), FeedbackMethod::Rfmf);
  return out;
}

std::vector<std::pair<TermId, double>> ranked_terms(const std::map<TermId, double>& weights, const Index& index) {
  std::vector<std::pair<TermId, double>> ranked(weights.begin(), weights.end());
  std::sort(ranked.begin(), ranked.end(), [&index](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return index.term(a.first) < index.term(b.first);
  });
  return ranked;
}

FeedbackLM truncate_terms(const FeedbackLM& lm, std::size_t top_k, const Index& index) {
  if (top_k == 0) throw std::invalid_argument("top_k must be >= 1");
  if (lm.weights.size() <= top_k) return lm;
  auto ranked = ranked_terms(lm.weights, index);
  ranked.resize(top_k);
  return finish(std::map<TermId, double>(ranked.begin(), ranked.end()), lm.method);
}

}  // namespace prf
