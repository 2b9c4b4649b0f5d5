#include "prf/ecdmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

namespace prf {

namespace {

std::map<TermId, double> normalize_weights(std::map<TermId, double> w) {
  double sum = 0.0;
  for (const auto& [t, x] : w) sum += x;
  if (!(sum > 0.0)) throw std::invalid_argument("sampling support is empty");
  for (auto& [t, x] : w) x /= sum;
  return w;
}

// Efraimidis-Spirakis: keep the k largest log(u)/w keys.
std::vector<TermId> weighted_sample_without_replacement(const std::map<TermId, double>& weights, std::size_t k,
                                                        Rng& rng) {
  std::vector<std::pair<double, TermId>> keyed;
  keyed.reserve(weights.size());
  for (const auto& [term, w] : weights) {
    const double u = 1.0 - uniform01(rng);
    keyed.emplace_back(std::log(u) / w, term);
  }
  k = std::min(k, keyed.size());
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(k), keyed.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  std::vector<TermId> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(keyed[i].second);
  return out;
}

Eigen::MatrixXd gather(const std::vector<TermId>& terms, const Index& index, const EmbeddingTable& table) {
  Eigen::MatrixXd out(table.dim(), static_cast<Eigen::Index>(terms.size()));
  for (std::size_t i = 0; i < terms.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = table.at(index.term(terms[i]));
  return out;
}

}  // namespace

void EcdmmParams::validate() const {
  if (alpha_pos < 0.0 || lambda_neg < 0.0 || beta < 0.0) {
    throw std::invalid_argument("alpha_pos, lambda_neg and beta must be non-negative");
  }
  if (n_pos < 1 || n_neg < 1) throw std::invalid_argument("n_pos and n_neg must be at least 1");
  if (!(lambda_mix >= 0.0 && lambda_mix < 1.0)) throw std::invalid_argument("lambda_mix must be in [0, 1)");
  if (max_iter < 1) throw std::invalid_argument("max_iter must be at least 1");
  if (!(eta0 > 0.0) || eta_decay < 0.0) throw std::invalid_argument("eta0 must be positive, eta_decay non-negative");
}

std::map<TermId, double> positive_sampling_weights(const FeedbackSet& fb, const Index& index,
                                                   const EcdmmParams& params, const TermFilter& eligible) {
  std::map<TermId, double> w;
  for (const auto& [term, c] : fb.term_counts) {
    if (eligible && !eligible(term)) continue;
    const double topical = (1.0 - params.lambda_mix) * fb.p_ml(term);
    const double denom = topical + params.lambda_mix * p_collection(index, term);
    if (denom > 0.0 && topical > 0.0) w.emplace(term, topical / denom);
  }
  return normalize_weights(std::move(w));
}

std::map<TermId, double> negative_sampling_weights(const FeedbackSet& fb, const Index& index,
                                                   const EcdmmParams& params, const TermFilter& eligible) {
  std::map<TermId, double> w;
  for (const auto& [term, c] : fb.term_counts) {
    if (eligible && !eligible(term)) continue;
    const double base =
        params.negative_source == NegativeSource::FeedbackUnigram ? fb.p_ml(term) : p_collection(index, term);
    if (base > 0.0) w.emplace(term, std::pow(base, 0.75));
  }
  return normalize_weights(std::move(w));
}

std::vector<TermId> sample_positive(const FeedbackSet& fb, const Index& index, const EcdmmParams& params, Rng& rng,
                                    const TermFilter& eligible) {
  return weighted_sample_without_replacement(positive_sampling_weights(fb, index, params, eligible), params.n_pos,
                                             rng);
}

std::vector<TermId> sample_negative(const FeedbackSet& fb, const Index& index, const EcdmmParams& params, Rng& rng,
                                    const TermFilter& eligible) {
  return weighted_sample_without_replacement(negative_sampling_weights(fb, index, params, eligible), params.n_neg,
                                             rng);
}

SampleSets<double> draw_samples(const FeedbackSet& fb, const Index& index, const EmbeddingTable& table,
                                const EcdmmParams& params, Rng& rng) {
  const TermFilter has_vector = [&](TermId t) { return table.contains(index.term(t)); };
  SampleSets<double> s;
  s.positive_terms = sample_positive(fb, index, params, rng, has_vector);
  s.negative_terms = sample_negative(fb, index, params, rng, has_vector);
  s.positives = gather(s.positive_terms, index, table);
  s.negatives = gather(s.negative_terms, index, table);

  std::vector<TermId> pos = s.positive_terms, neg = s.negative_terms;
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<TermId> both;
  std::set_intersection(pos.begin(), pos.end(), neg.begin(), neg.end(), std::back_inserter(both));
  spdlog::debug("ecdmm samples: {} positive, {} negative, {} in both", pos.size(), neg.size(), both.size());
  return s;
}

FeedbackLM ecdmm_feedback_lm(const Eigen::Ref<const Eigen::VectorXd>& vq_hat, const FeedbackSet& fb,
                             const Index& index, const EmbeddingTable& table, Similarity sim, bool weighted) {
  std::vector<TermId> terms;
  std::vector<double> sims;
  std::vector<double> counts;
  for (const auto& [term, c] : fb.term_counts) {
    const auto col = table.column(index.term(term));
    if (!col) continue;
    const auto v = table.vector(*col);
    if (sim == Similarity::Cosine && v.norm() == 0.0) continue;
    terms.push_back(term);
    sims.push_back(similarity(sim, vq_hat, v));
    counts.push_back(static_cast<double>(c));
  }
  if (terms.empty()) throw DegenerateFeedbackError("no feedback term has an embedding");

  const double top_sim = *std::max_element(sims.begin(), sims.end());
  const double top_count = *std::max_element(counts.begin(), counts.end());
  std::map<TermId, double> weights;
  double sum = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    double w = std::exp(sims[i] - top_sim);
    // Counts are scaled by their maximum so equal counts multiply by exactly 1.
    if (weighted) w *= counts[i] / top_count;
    weights.emplace(terms[i], w);
    sum += w;
  }
  for (auto& [t, w] : weights) w /= sum;
  return FeedbackLM{std::move(weights), FeedbackMethod::Ecdmm};
}

EcdmmExpansion ecdmm_expand(const Index& index, const FeedbackSet& fb, const EmbeddingTable& table,
                            std::span<const std::string> query_terms, const EcdmmParams& params, Similarity sim,
                            bool weighted) {
  params.validate();
  EcdmmExpansion out;
  out.query = query_vector(table, query_terms);
  Rng sampler(derive_seed(params.rng_seed, "samples"));
  out.samples = draw_samples(fb, index, table, params, sampler);
  out.projection = learn_projection(out.query.values, out.samples, params);
  out.projected = project_query(out.projection, out.query);
  out.model = ecdmm_feedback_lm(out.projected.values, fb, index, table, sim, weighted);
  return out;
}

}  // namespace prf
