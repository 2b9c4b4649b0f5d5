#pragma once

#include <atomic>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prf/corpus_io.hpp"
#include "prf/ecdmm.hpp"
#include "prf/embeddings.hpp"
#include "prf/eval.hpp"
#include "prf/feedback_classic.hpp"
#include "prf/index.hpp"
#include "prf/retrieval.hpp"

namespace prf {

enum class Method { Mle, Rm3, Rm4, Mixture, Dmm, Medmm, Rfmf, Ecdmm };

Method parse_method(std::string_view name);
std::string_view to_string(Method m);

struct ExperimentConfig {
  // Collection. Either index_path or docs_path must be set.
  std::filesystem::path index_path;
  std::filesystem::path docs_path;
  DocFormat doc_format = DocFormat::TrecSgml;
  std::filesystem::path stopwords_path;
  bool lowercase = true;
  bool stem = true;
  std::filesystem::path cache_dir;

  std::filesystem::path topics_path;
  std::filesystem::path qrels_path;
  std::filesystem::path embeddings_path;
  EmbeddingFormat embedding_format = EmbeddingFormat::Word2VecText;
  // Averages raw-form vectors into the tokenizer's term space.
  bool normalize_embeddings = true;

  double mu = kDefaultMu;
  std::size_t fb_docs = 10;
  std::size_t fb_terms = 50;
  std::size_t depth = 1000;

  Method method = Method::Ecdmm;
  EcdmmParams ecdmm;
  Similarity similarity = Similarity::Cosine;
  bool weighted_softmax = true;
  double mixture_lambda = 0.9;
  double mixture_tol = 1e-6;
  int mixture_max_iter = 100;
  double dmm_lambda = 0.5;
  double medmm_lambda = 0.1;
  double medmm_beta = 1.2;
  int rfmf_rank = 3;
  int rfmf_iters = 200;

  // Fixed interpolation weight; when unset, alpha is cross-validated over
  // cv_grid (requires qrels) or falls back to 0.5.
  std::optional<double> alpha_interp;
  std::vector<double> cv_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

  std::uint64_t seed = 42;
  std::size_t threads = 0;  // 0: hardware concurrency
  bool dump_terms = true;
  bool dump_traces = false;
  std::string tag;

  void validate() const;
  std::string run_tag() const;
};

// Per-topic state that does not depend on the feedback method.
struct TopicContext {
  std::string topic_id;
  std::vector<std::string> terms;
  std::optional<QueryLM> original;
  std::optional<FeedbackSet> feedback;
  std::string error;
};

// Loaded collection plus caches shared by every experiment run against it.
class Workspace {
 public:
  Workspace(Index index, std::vector<Topic> topics, std::optional<Qrels> qrels,
            std::optional<EmbeddingTable> embeddings);

  // Loads or builds the index (using the cache directory when configured),
  // topics, qrels and embeddings named by `config`.
  static std::unique_ptr<Workspace> load(const ExperimentConfig& config);

  const Index& index() const { return index_; }
  const std::vector<Topic>& topics() const { return topics_; }
  const Qrels* qrels() const { return qrels_ ? &*qrels_ : nullptr; }
  const EmbeddingTable* embeddings() const { return embeddings_ ? &*embeddings_ : nullptr; }

  // Initial MLE retrieval and feedback set, memoized on (topic, mu, |F|).
  const TopicContext& context(std::size_t topic, double mu, std::size_t fb_docs);

  std::size_t cache_hits() const { return hits_.load(); }
  std::size_t cache_misses() const { return misses_.load(); }

 private:
  Index index_;
  std::vector<Topic> topics_;
  std::optional<Qrels> qrels_;
  std::optional<EmbeddingTable> embeddings_;

  std::mutex mutex_;
  std::map<std::tuple<std::size_t, double, std::size_t>, std::unique_ptr<TopicContext>> contexts_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

struct TopicOutcome {
  std::string topic_id;
  std::optional<QueryLM> original;
  std::optional<FeedbackLM> feedback;
  std::optional<QueryLM> final_query;
  double alpha = 1.0;
  std::string failure;
  std::vector<double> trace_objective;
  std::vector<double> trace_step;
};

struct ExperimentResult {
  std::string tag;
  Method method = Method::Mle;
  RunFile run;
  std::optional<EvalResult> eval;
  std::optional<CrossValidation> cv;
  std::vector<TopicOutcome> topics;  // in topic-id order
};

// Initial MLE retrieval -> feedback model -> interpolation -> final
// retrieval -> evaluation, for every topic. A failing topic falls back to
// its unexpanded query and never affects other topics.
ExperimentResult run_experiment(Workspace& ws, const ExperimentConfig& config);

// run.txt, metrics.tsv, per_query.csv, cv.tsv, expansion/, traces/.
void write_experiment_outputs(const ExperimentResult& result, const Workspace& ws, const ExperimentConfig& config,
                              const std::filesystem::path& dir);

enum class SweepParam { NPos, NNeg, AlphaInterp };

SweepParam parse_sweep_param(std::string_view name);
std::string_view to_string(SweepParam p);

struct SweepRow {
  double value = 0.0;
  bool ok = false;
  std::string error;
  double map = 0.0;
  double p5 = 0.0;
  double p10 = 0.0;
};

// One experiment per value, sharing the workspace caches. Requires qrels.
std::vector<SweepRow> sweep(Workspace& ws, const ExperimentConfig& config, SweepParam param,
                            std::span<const double> values);
void write_sweep_csv(std::ostream& out, SweepParam param, const std::vector<SweepRow>& rows);

// Table of runs against a common qrels: metrics per run plus, for each run,
// the 1-based ids of other runs it beats on MAP (two-tailed paired t-test on AP, p <= 0.05).
void write_comparison_tsv(std::ostream& out, const std::vector<std::pair<std::string, EvalResult>>& runs);

}  // namespace prf
