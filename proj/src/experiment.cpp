#include "prf/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace prf {

namespace {

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string index_cache_key(const ExperimentConfig& c, const TokenPipeline& pipeline) {
  namespace fs = std::filesystem;
  std::string key = fs::absolute(c.docs_path).string();
  key += fmt::format("|{}|{}|{}|{}", fs::file_size(c.docs_path),
                     fs::last_write_time(c.docs_path).time_since_epoch().count(), pipeline.lowercase, pipeline.stem);
  std::vector<std::string> stop(pipeline.stopwords.begin(), pipeline.stopwords.end());
  std::sort(stop.begin(), stop.end());
  for (const auto& s : stop) key += "|" + s;
  key += c.doc_format == DocFormat::Jsonl ? "|jsonl" : "|trec";
  return fmt::format("index-{:016x}.bin", fnv1a(key));
}

std::filesystem::path resolve_cache_dir(const ExperimentConfig& c) {
  if (const char* env = std::getenv("PRFLAB_CACHE_DIR"); env != nullptr && *env != '\0') return env;
  return c.cache_dir;
}

Index load_or_build_index(const ExperimentConfig& c) {
  if (!c.index_path.empty()) return Index::load(c.index_path);
  TokenPipeline pipeline;
  pipeline.lowercase = c.lowercase;
  pipeline.stem = c.stem;
  if (!c.stopwords_path.empty()) pipeline.stopwords = load_stopwords(c.stopwords_path);

  const auto cache = resolve_cache_dir(c);
  std::filesystem::path cached;
  if (!cache.empty()) {
    cached = cache / index_cache_key(c, pipeline);
    if (std::filesystem::exists(cached)) {
      spdlog::info("loading cached index {}", cached.string());
      return Index::load(cached);
    }
  }
  auto docs = parse_documents(c.docs_path, c.doc_format);
  auto index = Index::build(docs, std::move(pipeline));
  spdlog::info("indexed {} documents, {} terms, {} tokens", index.num_docs(), index.vocab_size(),
               index.total_tokens());
  if (!cached.empty()) {
    std::filesystem::create_directories(cache);
    index.save(cached);
  }
  return index;
}

// Fold membership by sorted-position parity, matching cross_validate_alpha.
std::map<std::string, int> fold_assignment(const std::vector<std::string>& topic_ids) {
  std::vector<std::string> sorted = topic_ids;
  std::sort(sorted.begin(), sorted.end(), topic_id_less);
  std::map<std::string, int> out;
  for (std::size_t i = 0; i < sorted.size(); ++i) out[sorted[i]] = static_cast<int>(i % 2);
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << content;
}

std::string safe_name(const std::string& id) {
  std::string out = id;
  for (char& c : out) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return out;
}

}  // namespace

Method parse_method(std::string_view name) {
  static const std::pair<std::string_view, Method> table[] = {
      {"mle", Method::Mle},     {"rm3", Method::Rm3},     {"rm4", Method::Rm4},
      {"mixture", Method::Mixture}, {"dmm", Method::Dmm}, {"medmm", Method::Medmm},
      {"rfmf", Method::Rfmf},   {"ecdmm", Method::Ecdmm}};
  for (const auto& [n, m] : table) {
    if (n == name) return m;
  }
  throw std::invalid_argument(fmt::format("unknown method '{}'", name));
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Mle:
      return "mle";
    case Method::Rm3:
      return "rm3";
    case Method::Rm4:
      return "rm4";
    case Method::Mixture:
      return "mixture";
    case Method::Dmm:
      return "dmm";
    case Method::Medmm:
      return "medmm";
    case Method::Rfmf:
      return "rfmf";
    case Method::Ecdmm:
      return "ecdmm";
  }
  return "unknown";
}

void ExperimentConfig::validate() const {
  if (index_path.empty() && docs_path.empty()) throw std::invalid_argument("either an index or documents are required");
  for (const auto* p : {&index_path, &docs_path, &topics_path, &qrels_path, &embeddings_path, &stopwords_path}) {
    if (!p->empty() && !std::filesystem::exists(*p)) {
      throw std::invalid_argument(fmt::format("'{}' does not exist", p->string()));
    }
  }
  if (topics_path.empty()) throw std::invalid_argument("a topics file is required");
  if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");
  if (fb_docs < 1 || fb_terms < 1 || depth < 1) throw std::invalid_argument("fb_docs, fb_terms and depth must be >= 1");
  if (alpha_interp && !(*alpha_interp >= 0.0 && *alpha_interp <= 1.0)) {
    throw std::invalid_argument("alpha must be in [0, 1]");
  }
  for (double a : cv_grid) {
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("cv grid values must be in [0, 1]");
  }
  if (method == Method::Ecdmm) {
    ecdmm.validate();
    if (embeddings_path.empty()) throw std::invalid_argument("ecdmm needs an embeddings file");
  }
  if (method == Method::Mixture && !(mixture_lambda >= 0.0 && mixture_lambda < 1.0)) {
    throw std::invalid_argument("mixture lambda must be in [0, 1)");
  }
  if (method == Method::Dmm && !(dmm_lambda >= 0.0 && dmm_lambda < 1.0)) {
    throw std::invalid_argument("dmm lambda must be in [0, 1)");
  }
  if (method == Method::Medmm && !(medmm_beta > 0.0)) throw std::invalid_argument("medmm beta must be positive");
  if (method == Method::Rfmf && (rfmf_rank < 1 || rfmf_iters < 1)) {
    throw std::invalid_argument("rfmf rank and iterations must be >= 1");
  }
}

std::string ExperimentConfig::run_tag() const { return tag.empty() ? std::string(to_string(method)) : tag; }

Workspace::Workspace(Index index, std::vector<Topic> topics, std::optional<Qrels> qrels,
                     std::optional<EmbeddingTable> embeddings)
    : index_(std::move(index)), qrels_(std::move(qrels)), embeddings_(std::move(embeddings)) {
  std::stable_sort(topics.begin(), topics.end(),
                   [](const Topic& a, const Topic& b) { return topic_id_less(a.topic_id, b.topic_id); });
  topics_ = std::move(topics);
}

std::unique_ptr<Workspace> Workspace::load(const ExperimentConfig& config) {
  auto index = load_or_build_index(config);
  auto topics = parse_topics(config.topics_path);
  std::optional<Qrels> qrels;
  if (!config.qrels_path.empty()) qrels = parse_qrels(config.qrels_path);
  std::optional<EmbeddingTable> table;
  if (!config.embeddings_path.empty()) {
    table = load_embeddings(config.embeddings_path, config.embedding_format);
    if (config.normalize_embeddings && (index.pipeline().lowercase || index.pipeline().stem)) {
      table = collapse_to_pipeline(*table, index.pipeline());
    }
    spdlog::info("loaded {} vectors of dimension {}", table->size(), table->dim());
  }
  return std::make_unique<Workspace>(std::move(index), std::move(topics), std::move(qrels), std::move(table));
}

const TopicContext& Workspace::context(std::size_t topic, double mu, std::size_t fb_docs) {
  const auto key = std::make_tuple(topic, mu, fb_docs);
  {
    std::lock_guard lock(mutex_);
    if (const auto it = contexts_.find(key); it != contexts_.end()) {
      ++hits_;
      return *it->second;
    }
  }
  auto ctx = std::make_unique<TopicContext>();
  const auto& t = topics_.at(topic);
  ctx->topic_id = t.topic_id;
  ctx->terms = tokenize(t.title, index_.pipeline());
  try {
    ctx->original = mle_query(index_, ctx->terms);
    const auto initial = retrieve(index_, *ctx->original, fb_docs, mu, t.topic_id);
    if (initial.entries.empty()) throw EmptyQueryError("initial retrieval returned no documents");
    const auto docs = initial.docs();
    ctx->feedback = feedback_counts(index_, docs);
  } catch (const std::exception& e) {
    ctx->error = e.what();
  }
  std::lock_guard lock(mutex_);
  auto [it, inserted] = contexts_.emplace(key, std::move(ctx));
  ++(inserted ? misses_ : hits_);
  return *it->second;
}

namespace {

std::vector<TermId> in_vocab_ids(const Index& index, const std::vector<std::string>& terms) {
  std::vector<TermId> ids;
  for (const auto& t : terms) {
    if (const auto id = index.term_id(t)) ids.push_back(*id);
  }
  return ids;
}

FeedbackLM build_feedback(const Workspace& ws, const ExperimentConfig& c, const TopicContext& ctx,
                          TopicOutcome& outcome) {
  const Index& index = ws.index();
  const FeedbackSet& fb = *ctx.feedback;
  const auto query_ids = in_vocab_ids(index, ctx.terms);
  switch (c.method) {
    case Method::Rm3:
      return rm1(index, fb, query_ids, c.mu);
    case Method::Rm4:
      return rm2(index, fb, query_ids, c.mu);
    case Method::Mixture:
      return mixture_em(index, fb, c.mixture_lambda, c.mixture_tol, c.mixture_max_iter).first;
    case Method::Dmm:
      return dmm(index, fb, c.dmm_lambda, c.mu);
    case Method::Medmm:
      return medmm(index, fb, c.medmm_lambda, c.medmm_beta, c.mu);
    case Method::Rfmf: {
      const auto max_rank = static_cast<int>(std::min<std::size_t>(fb.docs.size() + 1, fb.term_counts.size()));
      return rfmf(index, fb, *ctx.original, std::min(c.rfmf_rank, max_rank), c.rfmf_iters,
                  derive_seed(c.seed, ctx.topic_id + "/rfmf"))
          .model;
    }
    case Method::Ecdmm: {
      if (ws.embeddings() == nullptr) throw std::invalid_argument("no embeddings loaded");
      EcdmmParams params = c.ecdmm;
      params.rng_seed = derive_seed(c.seed, ctx.topic_id);
      try {
        auto ex = ecdmm_expand(index, fb, *ws.embeddings(), ctx.terms, params, c.similarity, c.weighted_softmax);
        outcome.trace_objective = ex.projection.objective;
        outcome.trace_step = ex.projection.step_norm;
        return ex.model;
      } catch (const DivergenceError& e) {
        outcome.trace_objective = e.objective;
        outcome.trace_step = e.step_norm;
        throw;
      }
    }
    case Method::Mle:
      break;
  }
  throw std::logic_error("no feedback model for this method");
}

}  // namespace

ExperimentResult run_experiment(Workspace& ws, const ExperimentConfig& config) {
  const auto& topics = ws.topics();
  const std::size_t n = topics.size();
  const Index& index = ws.index();

  ExperimentResult result;
  result.tag = config.run_tag();
  result.method = config.method;
  result.run.tag = result.tag;
  result.topics.resize(n);

  parallel_for(n, config.threads, [&](std::size_t i) {
    const auto& ctx = ws.context(i, config.mu, config.fb_docs);
    auto& out = result.topics[i];
    out.topic_id = ctx.topic_id;
    if (!ctx.original) {
      out.failure = ctx.error;
      spdlog::warn("topic {}: {}", ctx.topic_id, ctx.error);
      return;
    }
    out.original = ctx.original;
    if (config.method == Method::Mle) return;
    if (!ctx.feedback) {
      out.failure = ctx.error;
      spdlog::warn("topic {}: no feedback set ({}); using the unexpanded query", ctx.topic_id, ctx.error);
      return;
    }
    try {
      auto model = build_feedback(ws, config, ctx, out);
      out.feedback = truncate_terms(model, config.fb_terms, index);
    } catch (const std::exception& e) {
      out.failure = e.what();
      spdlog::warn("topic {}: feedback failed ({}); using the unexpanded query", ctx.topic_id, e.what());
    }
  });

  const auto final_query = [&](const TopicOutcome& t, double alpha) -> std::optional<QueryLM> {
    if (!t.original) return std::nullopt;
    if (!t.feedback) return t.original;
    return interpolate_query(t.feedback->as_query(), *t.original, alpha);
  };
  const auto rank_all = [&](const std::function<double(std::size_t)>& alpha_of) {
    std::vector<ScoredList> lists(n);
    parallel_for(n, config.threads, [&](std::size_t i) {
      lists[i].query_id = topics[i].topic_id;
      if (const auto q = final_query(result.topics[i], alpha_of(i))) {
        lists[i] = retrieve(index, *q, config.depth, config.mu, topics[i].topic_id);
      }
    });
    return lists;
  };
  const auto to_run_topics = [&](const std::vector<ScoredList>& lists) {
    std::map<std::string, std::vector<RunEntry>> out;
    for (const auto& l : lists) {
      auto& entries = out[l.query_id];
      for (const auto& e : l.entries) entries.push_back({index.doc_id(e.doc), e.score});
    }
    return out;
  };

  std::vector<std::string> topic_ids;
  for (const auto& t : topics) topic_ids.push_back(t.topic_id);
  const Qrels* qrels = ws.qrels();

  const bool uses_alpha = config.method != Method::Mle;
  const bool cross_validate = uses_alpha && !config.alpha_interp && qrels != nullptr && !config.cv_grid.empty() &&
                              n >= 2;
  std::vector<double> alpha_of_topic(n, config.alpha_interp.value_or(0.5));
  if (!uses_alpha) std::fill(alpha_of_topic.begin(), alpha_of_topic.end(), 1.0);

  if (cross_validate) {
    const auto per_query = [&](double alpha) {
      RunFile run;
      run.topics = to_run_topics(rank_all([alpha](std::size_t) { return alpha; }));
      return evaluate(run, *qrels, topic_ids).per_query;
    };
    result.cv = cross_validate_alpha(topic_ids, config.cv_grid, per_query);
    const auto folds = fold_assignment(topic_ids);
    for (std::size_t i = 0; i < n; ++i) alpha_of_topic[i] = result.cv->alpha[folds.at(topic_ids[i])];
  } else if (uses_alpha && !config.alpha_interp) {
    spdlog::info("no alpha given and no cross-validation possible; using alpha = 0.5");
  }

  for (std::size_t i = 0; i < n; ++i) {
    result.topics[i].alpha = alpha_of_topic[i];
    result.topics[i].final_query = final_query(result.topics[i], alpha_of_topic[i]);
  }
  result.run.topics = to_run_topics(rank_all([&](std::size_t i) { return alpha_of_topic[i]; }));
  if (qrels != nullptr) result.eval = evaluate(result.run, *qrels, topic_ids);
  return result;
}

void write_experiment_outputs(const ExperimentResult& result, const Workspace& ws, const ExperimentConfig& config,
                              const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const Index& index = ws.index();

  std::ostringstream run;
  write_run(run, result.run);
  write_file(dir / "run.txt", run.str());

  if (result.eval) {
    std::ostringstream metrics, per_query;
    write_metrics_tsv(metrics, {{result.tag, *result.eval}});
    write_per_query_csv(per_query, *result.eval);
    write_file(dir / "metrics.tsv", metrics.str());
    write_file(dir / "per_query.csv", per_query.str());
  }
  if (result.cv) {
    write_file(dir / "cv.tsv", fmt::format("fold\talpha\n0\t{}\n1\t{}\n", result.cv->alpha[0], result.cv->alpha[1]));
  }

  std::ostringstream failures;
  for (const auto& t : result.topics) {
    if (!t.failure.empty()) failures << t.topic_id << '\t' << t.failure << '\n';
  }
  write_file(dir / "failures.tsv", failures.str());

  if (config.dump_terms) {
    fs::create_directories(dir / "expansion");
    for (const auto& t : result.topics) {
      if (!t.final_query) continue;
      std::ostringstream out;
      auto ranked = ranked_terms(t.final_query->weights, index);
      if (ranked.size() > 10) ranked.resize(10);
      for (const auto& [term, w] : ranked) out << fmt::format("{}\t{:.4f}\n", index.term(term), w);
      write_file(dir / "expansion" / (safe_name(t.topic_id) + ".tsv"), out.str());
    }
  }
  if (config.dump_traces) {
    fs::create_directories(dir / "traces");
    for (const auto& t : result.topics) {
      if (t.trace_objective.empty()) continue;
      std::ostringstream out;
      out << "iteration,objective,step_norm\n";
      for (std::size_t i = 0; i < t.trace_objective.size(); ++i) {
        const double step = i == 0 ? 0.0 : t.trace_step[i - 1];
        out << fmt::format("{},{:.10g},{:.10g}\n", i, t.trace_objective[i], step);
      }
      write_file(dir / "traces" / (safe_name(t.topic_id) + ".csv"), out.str());
    }
  }
}

SweepParam parse_sweep_param(std::string_view name) {
  if (name == "n_pos") return SweepParam::NPos;
  if (name == "n_neg") return SweepParam::NNeg;
  if (name == "alpha_interp" || name == "alpha") return SweepParam::AlphaInterp;
  throw std::invalid_argument(fmt::format("unknown sweep parameter '{}'", name));
}

std::string_view to_string(SweepParam p) {
  switch (p) {
    case SweepParam::NPos:
      return "n_pos";
    case SweepParam::NNeg:
      return "n_neg";
    case SweepParam::AlphaInterp:
      return "alpha_interp";
  }
  return "unknown";
}

std::vector<SweepRow> sweep(Workspace& ws, const ExperimentConfig& config, SweepParam param,
                            std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
  if (ws.qrels() == nullptr) throw std::invalid_argument("sweep needs relevance judgments");
  std::vector<SweepRow> rows;
  for (const double v : values) {
    SweepRow row;
    row.value = v;
    ExperimentConfig c = config;
    try {
      switch (param) {
        case SweepParam::NPos:
          if (v < 1.0) throw std::invalid_argument("n_pos must be >= 1");
          c.ecdmm.n_pos = static_cast<std::size_t>(v);
          break;
        case SweepParam::NNeg:
          if (v < 1.0) throw std::invalid_argument("n_neg must be >= 1");
          c.ecdmm.n_neg = static_cast<std::size_t>(v);
          break;
        case SweepParam::AlphaInterp:
          c.alpha_interp = v;
          break;
      }
      c.validate();
      const auto result = run_experiment(ws, c);
      row.ok = true;
      row.map = result.eval->map;
      row.p5 = result.eval->p5;
      row.p10 = result.eval->p10;
    } catch (const std::exception& e) {
      row.error = e.what();
      spdlog::warn("sweep {}={}: {}", to_string(param), v, e.what());
    }
    rows.push_back(std::move(row));
  }
  spdlog::info("feedback-set cache: {} hits, {} misses", ws.cache_hits(), ws.cache_misses());
  return rows;
}

void write_sweep_csv(std::ostream& out, SweepParam param, const std::vector<SweepRow>& rows) {
  out << to_string(param) << ",MAP,P@5,P@10,status\n";
  for (const auto& r : rows) {
    if (r.ok) {
      out << fmt::format("{},{:.6f},{:.6f},{:.6f},ok\n", r.value, r.map, r.p5, r.p10);
    } else {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      out << fmt::format("{},,,,failed: {}\n", r.value, msg);
    }
  }
}

void write_comparison_tsv(std::ostream& out, const std::vector<std::pair<std::string, EvalResult>>& runs) {
  out << "id\tmethod\tMAP\tP@5\tP@10\tsignificant_over\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& [name, r] = runs[i];
    std::vector<std::string> beats;
    for (std::size_t j = 0; j < runs.size(); ++j) {
      if (i == j) continue;
      const auto& other = runs[j].second;
      std::vector<double> a, b;
      for (const auto& [topic, m] : r.per_query) {
        const auto it = other.per_query.find(topic);
        if (it == other.per_query.end()) continue;
        a.push_back(m.ap);
        b.push_back(it->second.ap);
      }
      if (a.size() < 2) continue;
      double ma = 0.0, mb = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) {
        ma += a[k];
        mb += b[k];
      }
      if (ma > mb && paired_t_test(a, b) <= 0.05) beats.push_back(std::to_string(j + 1));
    }
    std::string sig;
    for (const auto& s : beats) sig += (sig.empty() ? "" : ",") + s;
    out << fmt::format("{}\t{}\t{:.4f}\t{:.4f}\t{:.4f}\t{}\n", i + 1, name, r.map, r.p5, r.p10,
                       sig.empty() ? "-" : sig);
  }
}

}  // namespace prf
