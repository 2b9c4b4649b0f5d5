#include "prf/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

namespace prf {

namespace {

std::optional<long long> as_integer(const std::string& s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::vector<std::string> ranked_ids(const std::vector<RunEntry>& entries) {
  std::vector<std::string> ids;
  ids.reserve(entries.size());
  for (const auto& e : entries) ids.push_back(e.doc_id);
  return ids;
}

double mean_ap(const std::map<std::string, TopicMetrics>& m) {
  if (m.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [t, x] : m) s += x.ap;
  return s / static_cast<double>(m.size());
}

}  // namespace

RunFile parse_run(std::istream& in) {
  RunFile run;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string topic, q0, doc, rank, score, tag;
    if (!(fields >> topic)) continue;
    if (!(fields >> q0 >> doc >> rank >> score)) {
      throw ParseError(fmt::format("run line {}: expected 'topic Q0 docid rank score tag'", line_no));
    }
    fields >> tag;
    if (run.tag.empty()) run.tag = tag;
    double value = 0.0;
    try {
      value = std::stod(score);
    } catch (const std::exception&) {
      throw ParseError(fmt::format("run line {}: bad score '{}'", line_no, score));
    }
    run.topics[topic].push_back({doc, value});
  }
  for (auto& [topic, entries] : run.topics) {
    std::stable_sort(entries.begin(), entries.end(), [](const RunEntry& a, const RunEntry& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.doc_id < b.doc_id;
    });
  }
  return run;
}

RunFile parse_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open run '{}'", path.string()));
  return parse_run(in);
}

void write_run(std::ostream& out, const RunFile& run) {
  std::vector<std::string> order;
  for (const auto& [topic, entries] : run.topics) order.push_back(topic);
  std::sort(order.begin(), order.end(), topic_id_less);
  for (const auto& topic : order) {
    std::size_t rank = 1;
    for (const auto& e : run.topics.at(topic)) {
      out << fmt::format("{} Q0 {} {} {:.6f} {}\n", topic, e.doc_id, rank++, e.score, run.tag);
    }
  }
}

void EvalResult::aggregate() {
  map = p5 = p10 = 0.0;
  if (per_query.empty()) return;
  for (const auto& [t, m] : per_query) {
    map += m.ap;
    p5 += m.p5;
    p10 += m.p10;
  }
  const auto n = static_cast<double>(per_query.size());
  map /= n;
  p5 /= n;
  p10 /= n;
}

std::vector<double> EvalResult::ap_vector() const {
  std::vector<double> v;
  for (const auto& [t, m] : per_query) v.push_back(m.ap);
  return v;
}

std::optional<double> average_precision(std::span<const std::string> ranked,
                                        const std::unordered_set<std::string>& relevant) {
  if (relevant.empty()) return std::nullopt;
  double hits = 0.0;
  double sum = 0.0;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (relevant.contains(ranked[i]) && seen.insert(ranked[i]).second) {
      hits += 1.0;
      sum += hits / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

double precision_at_k(std::span<const std::string> ranked, const std::unordered_set<std::string>& relevant,
                      std::size_t k) {
  if (k == 0) throw std::invalid_argument("precision cutoff must be >= 1");
  const std::size_t limit = std::min(k, ranked.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < limit; ++i) hits += relevant.contains(ranked[i]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

std::optional<TopicMetrics> evaluate_topic(std::span<const std::string> ranked,
                                           const std::unordered_set<std::string>& relevant) {
  const auto ap = average_precision(ranked, relevant);
  if (!ap) return std::nullopt;
  return TopicMetrics{*ap, precision_at_k(ranked, relevant, 5), precision_at_k(ranked, relevant, 10)};
}

EvalResult evaluate(const RunFile& run, const Qrels& qrels, std::span<const std::string> topic_ids) {
  EvalResult result;
  for (const auto& topic : topic_ids) {
    const auto relevant = qrels.relevant(topic);
    const auto it = run.topics.find(topic);
    const std::vector<std::string> ranked = it == run.topics.end() ? std::vector<std::string>{} : ranked_ids(it->second);
    if (const auto m = evaluate_topic(ranked, relevant)) result.per_query.emplace(topic, *m);
  }
  result.aggregate();
  return result;
}

EvalResult evaluate(const RunFile& run, const Qrels& qrels) {
  std::vector<std::string> topics;
  for (const auto& [key, grade] : qrels.judgments()) {
    if (topics.empty() || topics.back() != key.first) topics.push_back(key.first);
  }
  return evaluate(run, qrels, topics);
}

double paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("paired_t_test: need at least two pairs");
  const auto n = static_cast<double>(a.size());
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) return mean == 0.0 ? 1.0 : 0.0;
  const double t = mean / (sd / std::sqrt(n));
  const boost::math::students_t dist(n - 1.0);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

bool topic_id_less(const std::string& a, const std::string& b) {
  const auto ia = as_integer(a);
  const auto ib = as_integer(b);
  if (ia && ib && *ia != *ib) return *ia < *ib;
  return a < b;
}

CrossValidation cross_validate_alpha(
    std::span<const std::string> topic_ids, std::span<const double> grid,
    const std::function<std::map<std::string, TopicMetrics>(double)>& per_query_metrics) {
  if (grid.empty()) throw std::invalid_argument("cross validation grid is empty");
  if (topic_ids.size() < 2) throw std::invalid_argument("cross validation needs at least two topics");

  std::vector<std::string> sorted(topic_ids.begin(), topic_ids.end());
  std::sort(sorted.begin(), sorted.end(), topic_id_less);
  std::map<std::string, int> fold_of;
  for (std::size_t i = 0; i < sorted.size(); ++i) fold_of[sorted[i]] = static_cast<int>(i % 2);

  std::vector<std::map<std::string, TopicMetrics>> by_alpha;
  by_alpha.reserve(grid.size());
  for (const double alpha : grid) by_alpha.push_back(per_query_metrics(alpha));

  const auto restrict_to = [&fold_of](const std::map<std::string, TopicMetrics>& m, int fold) {
    std::map<std::string, TopicMetrics> out;
    for (const auto& [topic, x] : m) {
      const auto it = fold_of.find(topic);
      if (it != fold_of.end() && it->second == fold) out.emplace(topic, x);
    }
    return out;
  };

  CrossValidation cv;
  for (int test = 0; test < 2; ++test) {
    const int train = 1 - test;
    std::size_t best = 0;
    double best_map = -1.0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double map = mean_ap(restrict_to(by_alpha[g], train));
      if (map > best_map || (map == best_map && grid[g] < grid[best])) {
        best = g;
        best_map = map;
      }
    }
    cv.alpha[test] = grid[best];
    for (auto& [topic, x] : restrict_to(by_alpha[best], test)) cv.pooled.per_query.emplace(topic, x);
  }
  cv.pooled.aggregate();
  return cv;
}

void write_metrics_tsv(std::ostream& out, const std::vector<std::pair<std::string, EvalResult>>& rows) {
  out << "method\tMAP\tP@5\tP@10\n";
  for (const auto& [name, r] : rows) out << fmt::format("{}\t{:.4f}\t{:.4f}\t{:.4f}\n", name, r.map, r.p5, r.p10);
}

void write_per_query_csv(std::ostream& out, const EvalResult& result) {
  std::vector<std::string> topics;
  for (const auto& [t, m] : result.per_query) topics.push_back(t);
  std::sort(topics.begin(), topics.end(), topic_id_less);
  out << "topic,AP,P@5,P@10\n";
  for (const auto& t : topics) {
    const auto& m = result.per_query.at(t);
    out << fmt::format("{},{:.6f},{:.6f},{:.6f}\n", t, m.ap, m.p5, m.p10);
  }
}

}  // namespace prf
