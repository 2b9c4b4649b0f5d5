#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "prf/corpus_io.hpp"

namespace prf {

struct RunEntry {
  std::string doc_id;
  double score;
};

// Per-topic ranked lists; ranks are implied by position.
struct RunFile {
  std::string tag;
  std::map<std::string, std::vector<RunEntry>> topics;
};

// Reorders each topic by (score desc, doc id asc) as trec_eval does.
RunFile parse_run(std::istream& in);
RunFile parse_run(const std::filesystem::path& path);
void write_run(std::ostream& out, const RunFile& run);

struct TopicMetrics {
  double ap = 0.0;
  double p5 = 0.0;
  double p10 = 0.0;
};

struct EvalResult {
  std::map<std::string, TopicMetrics> per_query;
  double map = 0.0;
  double p5 = 0.0;
  double p10 = 0.0;

  // Recomputes the aggregates from per_query.
  void aggregate();
  std::vector<double> ap_vector() const;
};

// nullopt when `relevant` is empty (the topic is excluded from means).
std::optional<double> average_precision(std::span<const std::string> ranked,
                                        const std::unordered_set<std::string>& relevant);

// |relevant ∩ top-k| / k, with divisor k even for short rankings.
double precision_at_k(std::span<const std::string> ranked, const std::unordered_set<std::string>& relevant,
                      std::size_t k);

// Metrics for one ranking; nullopt when the topic has no relevant documents.
std::optional<TopicMetrics> evaluate_topic(std::span<const std::string> ranked,
                                           const std::unordered_set<std::string>& relevant);

// Topics are those of `topic_ids` that have relevant documents; missing runs
// score zero.
EvalResult evaluate(const RunFile& run, const Qrels& qrels, std::span<const std::string> topic_ids);
// Every judged topic of `qrels`.
EvalResult evaluate(const RunFile& run, const Qrels& qrels);

// Two-tailed paired Student's t-test. Identical inputs give 1.0; a constant
// non-zero difference gives 0.0.
double paired_t_test(std::span<const double> a, std::span<const double> b);

// Orders topic ids numerically when both parse as integers, otherwise
// lexicographically.
bool topic_id_less(const std::string& a, const std::string& b);

struct CrossValidation {
  // alpha chosen for each test fold (fold 0 = even positions).
  double alpha[2] = {0.0, 0.0};
  EvalResult pooled;
};

// Runs the experiment once per grid value via `per_query_metrics(alpha)`,
// splits topics by parity of their sorted position, picks for each fold the
// alpha with the best MAP on the other fold (ties: smaller alpha) and pools
// the test-fold metrics.
CrossValidation cross_validate_alpha(std::span<const std::string> topic_ids, std::span<const double> grid,
                                     const std::function<std::map<std::string, TopicMetrics>(double)>& per_query_metrics);

// "method\tMAP\tP@5\tP@10" table rows.
void write_metrics_tsv(std::ostream& out, const std::vector<std::pair<std::string, EvalResult>>& rows);
void write_per_query_csv(std::ostream& out, const EvalResult& result);

}  // namespace prf
