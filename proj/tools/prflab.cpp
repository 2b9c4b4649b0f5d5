// prflab: batch driver for pseudo-relevance feedback experiments.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "prf/experiment.hpp"

namespace {

struct EnumArgs {
  std::string doc_format = "trec-sgml";
  std::string embedding_format = "word2vec";
  std::string method = "ecdmm";
  std::string similarity = "cosine";
  std::string negative_source = "feedback";
  double alpha = -1.0;
};

void add_collection_options(CLI::App& app, prf::ExperimentConfig& c, EnumArgs& e) {
  app.add_option("--index", c.index_path, "Prebuilt index file");
  app.add_option("--docs", c.docs_path, "Document collection");
  app.add_option("--doc-format", e.doc_format, "trec-sgml or jsonl")->capture_default_str();
  app.add_option("--stopwords", c.stopwords_path, "Stopword list, one word per line");
  app.add_flag("--lowercase,!--no-lowercase", c.lowercase, "Lowercase tokens")->capture_default_str();
  app.add_flag("--stem,!--no-stem", c.stem, "Porter-stem tokens")->capture_default_str();
  app.add_option("--cache-dir", c.cache_dir, "Directory for cached indexes (PRFLAB_CACHE_DIR overrides)");
}

void add_experiment_options(CLI::App& app, prf::ExperimentConfig& c, EnumArgs& e) {
  add_collection_options(app, c, e);
  app.add_option("--topics", c.topics_path, "Topics file (TREC or id<TAB>title)")->required();
  app.add_option("--qrels", c.qrels_path, "Relevance judgments");
  app.add_option("--embeddings", c.embeddings_path, "Word vectors");
  app.add_option("--embedding-format", e.embedding_format, "word2vec or glove")->capture_default_str();
  app.add_flag("--normalize-embeddings,!--raw-embeddings", c.normalize_embeddings,
               "Map vector vocabulary through the tokenizer")
      ->capture_default_str();

  app.add_option("--method", e.method, "mle, rm3, rm4, mixture, dmm, medmm, rfmf or ecdmm")->capture_default_str();
  app.add_option("--mu", c.mu, "Dirichlet prior")->capture_default_str();
  app.add_option("--fb-docs", c.fb_docs, "Feedback documents")->capture_default_str();
  app.add_option("--fb-terms", c.fb_terms, "Feedback terms kept before interpolation")->capture_default_str();
  app.add_option("--depth", c.depth, "Final ranking depth")->capture_default_str();
  app.add_option("--alpha", e.alpha, "Weight of the original query; cross-validated when omitted");
  app.add_option("--cv-grid", c.cv_grid, "Alpha values tried by cross-validation")->delimiter(',')->capture_default_str();

  app.add_option("--alpha-pos", c.ecdmm.alpha_pos, "ECDMM positive weight")->capture_default_str();
  app.add_option("--lambda-neg", c.ecdmm.lambda_neg, "ECDMM negative weight")->capture_default_str();
  app.add_option("--beta", c.ecdmm.beta, "ECDMM Frobenius regularizer")->capture_default_str();
  app.add_option("--n-pos", c.ecdmm.n_pos, "ECDMM positive samples")->capture_default_str();
  app.add_option("--n-neg", c.ecdmm.n_neg, "ECDMM negative samples")->capture_default_str();
  app.add_option("--lambda-mix", c.ecdmm.lambda_mix, "Background weight for positive sampling")
      ->capture_default_str();
  app.add_option("--negative-source", e.negative_source, "feedback or collection")->capture_default_str();
  app.add_option("--eta0", c.ecdmm.eta0, "Initial learning rate")->capture_default_str();
  app.add_option("--eta-decay", c.ecdmm.eta_decay, "Learning rate decay")->capture_default_str();
  app.add_option("--max-iter", c.ecdmm.max_iter, "Gradient steps")->capture_default_str();
  app.add_option("--conv-tol", c.ecdmm.conv_tol, "Stop when the step norm falls below this")->capture_default_str();
  app.add_option("--similarity", e.similarity, "cosine or sigmoid")->capture_default_str();
  app.add_flag("--weighted-softmax,!--plain-softmax", c.weighted_softmax, "Scale softmax terms by feedback counts")
      ->capture_default_str();

  app.add_option("--mixture-lambda", c.mixture_lambda, "Mixture background weight")->capture_default_str();
  app.add_option("--mixture-tol", c.mixture_tol, "EM relative log-likelihood tolerance")->capture_default_str();
  app.add_option("--mixture-max-iter", c.mixture_max_iter, "EM iterations")->capture_default_str();
  app.add_option("--dmm-lambda", c.dmm_lambda, "DMM background weight")->capture_default_str();
  app.add_option("--medmm-lambda", c.medmm_lambda, "MEDMM background weight")->capture_default_str();
  app.add_option("--medmm-beta", c.medmm_beta, "MEDMM entropy weight")->capture_default_str();
  app.add_option("--rfmf-rank", c.rfmf_rank, "RFMF factor rank")->capture_default_str();
  app.add_option("--rfmf-iters", c.rfmf_iters, "RFMF update steps")->capture_default_str();

  app.add_option("--seed", c.seed, "Global seed")->capture_default_str();
  app.add_option("--threads", c.threads, "Worker threads (0: all cores)")->capture_default_str();
  app.add_flag("--dump-terms,!--no-dump-terms", c.dump_terms, "Write top expansion terms per topic")
      ->capture_default_str();
  app.add_flag("--dump-traces", c.dump_traces, "Write ECDMM objective traces per topic");
  app.add_option("--tag", c.tag, "Run tag (defaults to the method name)");
}

void resolve(prf::ExperimentConfig& c, const EnumArgs& e) {
  c.doc_format = prf::parse_doc_format(e.doc_format);
  c.embedding_format = prf::parse_embedding_format(e.embedding_format);
  c.method = prf::parse_method(e.method);
  c.similarity = prf::parse_similarity(e.similarity);
  if (e.negative_source == "feedback") {
    c.ecdmm.negative_source = prf::NegativeSource::FeedbackUnigram;
  } else if (e.negative_source == "collection") {
    c.ecdmm.negative_source = prf::NegativeSource::CollectionOnFeedback;
  } else {
    throw std::invalid_argument("negative source must be 'feedback' or 'collection'");
  }
  if (e.alpha >= 0.0) c.alpha_interp = e.alpha;
  c.validate();
}

std::string run_name(const std::filesystem::path& path, const prf::RunFile& run) {
  return run.tag.empty() ? path.stem().string() : run.tag;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudo-relevance feedback experiments over language-model retrieval"};
  app.require_subcommand(1);
  // Options of the main app (--config, --log-level) may follow the subcommand.
  app.fallthrough();
  app.set_config("--config", "", "TOML/INI file; values go in [index], [run] or [sweep] sections");
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

  // One config per subcommand: CLI11 applies every section of a config file,
  // so shared storage would let [sweep] values leak into run.
  prf::ExperimentConfig index_config, run_config, sweep_config;
  EnumArgs index_enums, run_enums, sweep_enums;

  auto* index_cmd = app.add_subcommand("index", "Build an index from a document collection");
  std::filesystem::path index_out;
  add_collection_options(*index_cmd, index_config, index_enums);
  index_cmd->add_option("-o,--output", index_out, "Index file to write")->required();

  auto* run_cmd = app.add_subcommand("run", "Run one retrieval experiment");
  std::filesystem::path out_dir = "out";
  add_experiment_options(*run_cmd, run_config, run_enums);
  run_cmd->add_option("-o,--output", out_dir, "Output directory")->capture_default_str();

  auto* sweep_cmd = app.add_subcommand("sweep", "Repeat an experiment over values of one parameter");
  std::string sweep_param;
  std::vector<double> sweep_values;
  std::filesystem::path sweep_out;
  add_experiment_options(*sweep_cmd, sweep_config, sweep_enums);
  sweep_cmd->add_option("--param", sweep_param, "n_pos, n_neg or alpha_interp")->required();
  sweep_cmd->add_option("--values", sweep_values, "Comma-separated values")->delimiter(',')->required();
  sweep_cmd->add_option("-o,--output", sweep_out, "CSV file (stdout when omitted)");

  auto* eval_cmd = app.add_subcommand("eval", "Score a TREC run file");
  std::filesystem::path eval_run, eval_qrels, eval_per_query;
  eval_cmd->add_option("run", eval_run, "Run file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--qrels", eval_qrels, "Relevance judgments")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--per-query", eval_per_query, "Also write per-topic metrics as CSV");

  auto* compare_cmd = app.add_subcommand("compare", "Metrics and paired t-tests for several runs");
  std::vector<std::filesystem::path> compare_runs;
  std::filesystem::path compare_qrels;
  compare_cmd->add_option("runs", compare_runs, "Run files; the first is the baseline")
      ->required()
      ->check(CLI::ExistingFile);
  compare_cmd->add_option("--qrels", compare_qrels, "Relevance judgments")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  // stdout carries the result tables.
  spdlog::set_default_logger(spdlog::stderr_color_mt("prflab"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*index_cmd) {
      index_config.doc_format = prf::parse_doc_format(index_enums.doc_format);
      prf::TokenPipeline pipeline{index_config.lowercase, {}, index_config.stem};
      if (!index_config.stopwords_path.empty()) pipeline.stopwords = prf::load_stopwords(index_config.stopwords_path);
      const auto docs = prf::parse_documents(index_config.docs_path, index_config.doc_format);
      const auto index = prf::Index::build(docs, std::move(pipeline));
      index.save(index_out);
      spdlog::info("wrote {} ({} documents, {} terms)", index_out.string(), index.num_docs(), index.vocab_size());
    } else if (*run_cmd) {
      resolve(run_config, run_enums);
      auto ws = prf::Workspace::load(run_config);
      const auto result = prf::run_experiment(*ws, run_config);
      prf::write_experiment_outputs(result, *ws, run_config, out_dir);
      if (result.eval) {
        prf::write_metrics_tsv(std::cout, {{result.tag, *result.eval}});
      }
    } else if (*sweep_cmd) {
      resolve(sweep_config, sweep_enums);
      const auto param = prf::parse_sweep_param(sweep_param);
      auto ws = prf::Workspace::load(sweep_config);
      const auto rows = prf::sweep(*ws, sweep_config, param, sweep_values);
      if (sweep_out.empty()) {
        prf::write_sweep_csv(std::cout, param, rows);
      } else {
        std::ofstream out(sweep_out);
        if (!out) throw std::runtime_error("cannot write " + sweep_out.string());
        prf::write_sweep_csv(out, param, rows);
      }
    } else if (*eval_cmd) {
      const auto run = prf::parse_run(eval_run);
      const auto qrels = prf::parse_qrels(eval_qrels);
      const auto result = prf::evaluate(run, qrels);
      prf::write_metrics_tsv(std::cout, {{run_name(eval_run, run), result}});
      if (!eval_per_query.empty()) {
        std::ofstream out(eval_per_query);
        if (!out) throw std::runtime_error("cannot write " + eval_per_query.string());
        prf::write_per_query_csv(out, result);
      }
    } else if (*compare_cmd) {
      const auto qrels = prf::parse_qrels(compare_qrels);
      std::vector<std::pair<std::string, prf::EvalResult>> rows;
      for (const auto& path : compare_runs) {
        const auto run = prf::parse_run(path);
        rows.emplace_back(run_name(path, run), prf::evaluate(run, qrels));
      }
      prf::write_comparison_tsv(std::cout, rows);
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
