#include "prf/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace prf {

double QueryLM::total() const {
  double s = 0.0;
  for (const auto& [t, w] : weights) s += w;
  return s;
}

std::vector<DocOrd> ScoredList::docs() const {
  std::vector<DocOrd> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.doc);
  return out;
}

QueryLM normalized(std::map<TermId, double> weights) {
  double sum = 0.0;
  for (auto it = weights.begin(); it != weights.end();) {
    if (!(it->second > 0.0)) {
      it = weights.erase(it);
    } else {
      sum += it->second;
      ++it;
    }
  }
  for (auto& [t, w] : weights) w /= sum;
  return QueryLM{std::move(weights)};
}

QueryLM mle_query(const Index& index, std::span<const std::string> terms) {
  std::map<TermId, double> counts;
  for (const auto& term : terms) {
    if (const auto id = index.term_id(term)) {
      counts[*id] += 1.0;
    } else {
      spdlog::warn("query term '{}' is not in the collection vocabulary; skipped", term);
    }
  }
  if (counts.empty()) throw EmptyQueryError("query has no in-vocabulary terms");
  return normalized(std::move(counts));
}

double dirichlet_prob(const Index& index, TermId term, DocOrd doc, double mu) {
  if (mu < 0.0) throw std::invalid_argument("mu must be non-negative");
  const double len = index.doc_len(doc);
  if (len + mu <= 0.0) {
    throw UndefinedModelError(fmt::format("document '{}' is empty and unsmoothed", index.doc_id(doc)));
  }
  return (index.count(term, doc) + mu * p_collection(index, term)) / (len + mu);
}

double score_kl(const Index& index, const QueryLM& qlm, DocOrd doc, double mu) {
  double score = 0.0;
  for (const auto& [term, weight] : qlm.weights) {
    if (p_collection(index, term) <= 0.0) continue;
    score += weight * std::log(dirichlet_prob(index, term, doc, mu));
  }
  return score;
}

ScoredList retrieve(const Index& index, const QueryLM& qlm, std::size_t k, double mu, std::string query_id) {
  if (k == 0) throw std::invalid_argument("retrieval depth must be at least 1");
  if (mu <= 0.0) throw std::invalid_argument("retrieve requires mu > 0");
  ScoredList out;
  out.query_id = std::move(query_id);
  if (index.num_docs() == 0 || index.total_tokens() == 0) return out;

  // score(d) = Σ_w q_w log(mu p_w)
  //          + Σ_{w in d} q_w [log(c + mu p_w) - log(mu p_w)]
  //          - Q log(|d| + mu)
  double base = 0.0;
  double mass = 0.0;
  std::vector<double> acc(index.num_docs(), 0.0);
  for (const auto& [term, weight] : qlm.weights) {
    const double pc = p_collection(index, term);
    if (pc <= 0.0) continue;
    const double background = mu * pc;
    base += weight * std::log(background);
    mass += weight;
    for (const auto& p : index.postings(term)) {
      acc[p.doc] += weight * (std::log(p.count + background) - std::log(background));
    }
  }

  std::vector<ScoredDoc> scored;
  scored.reserve(index.num_docs());
  for (DocOrd d = 0; d < index.num_docs(); ++d) {
    const auto len = index.doc_len(d);
    if (len == 0) continue;
    scored.push_back({d, base + acc[d] - mass * std::log(len + mu)});
  }
  const auto before = [&index](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return index.doc_id(a.doc) < index.doc_id(b.doc);
  };
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), before);
  scored.resize(keep);
  out.entries = std::move(scored);
  return out;
}

QueryLM interpolate_query(const QueryLM& feedback, const QueryLM& original, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument(fmt::format("interpolation coefficient {} outside [0,1]", alpha));
  }
  if (alpha == 1.0) return original;
  if (alpha == 0.0) return feedback;
  std::map<TermId, double> mixed;
  for (const auto& [t, w] : feedback.weights) mixed[t] += (1.0 - alpha) * w;
  for (const auto& [t, w] : original.weights) mixed[t] += alpha * w;
  return normalized(std::move(mixed));
}

void write_trec_run(std::ostream& out, const Index& index, const ScoredList& list, const std::string& tag) {
  std::size_t rank = 1;
  for (const auto& e : list.entries) {
    out << fmt::format("{} Q0 {} {} {:.6f} {}\n", list.query_id, index.doc_id(e.doc), rank++, e.score, tag);
  }
}

}  // namespace prf
