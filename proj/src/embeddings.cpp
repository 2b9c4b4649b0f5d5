#include "prf/embeddings.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace prf {

EmbeddingFormat parse_embedding_format(std::string_view name) {
  if (name == "word2vec-text" || name == "word2vec") return EmbeddingFormat::Word2VecText;
  if (name == "glove-text" || name == "glove") return EmbeddingFormat::GloveText;
  throw std::invalid_argument(fmt::format("unknown embedding format '{}'", name));
}

Similarity parse_similarity(std::string_view name) {
  if (name == "sigmoid") return Similarity::Sigmoid;
  if (name == "cosine") return Similarity::Cosine;
  throw std::invalid_argument(fmt::format("unknown similarity '{}'", name));
}

void EmbeddingTable::insert(const std::string& term, const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (dim_ == 0) dim_ = v.size();
  if (v.size() != dim_) {
    throw std::invalid_argument(fmt::format("vector for '{}' has length {}, table dim is {}", term, v.size(), dim_));
  }
  if (const auto it = lookup_.find(term); it != lookup_.end()) {
    vectors_.col(it->second) = v;
    return;
  }
  const auto col = static_cast<Eigen::Index>(terms_.size());
  if (col >= vectors_.cols()) vectors_.conservativeResize(dim_, std::max<Eigen::Index>(16, 2 * vectors_.cols()));
  vectors_.col(col) = v;
  terms_.push_back(term);
  lookup_.emplace(term, col);
}

std::optional<Eigen::Index> EmbeddingTable::column(std::string_view term) const {
  const auto it = lookup_.find(std::string(term));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

Eigen::Ref<const Eigen::VectorXd> EmbeddingTable::at(std::string_view term) const {
  const auto col = column(term);
  if (!col) throw std::out_of_range(fmt::format("no vector for '{}'", term));
  return vectors_.col(*col);
}

EmbeddingTable load_embeddings(std::istream& in, EmbeddingFormat format) {
  EmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  Eigen::Index dim = 0;

  if (format == EmbeddingFormat::Word2VecText) {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") != std::string::npos) break;
    }
    std::istringstream header(line);
    long long count = 0;
    if (!(header >> count >> dim) || dim <= 0 || count < 0) {
      throw ParseError(fmt::format("line {}: expected word2vec header 'count dim'", line_no));
    }
  }

  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream row(line);
    std::string term;
    if (!(row >> term)) continue;
    values.clear();
    std::string field;
    while (row >> field) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw ParseError(fmt::format("line {}: non-numeric value '{}'", line_no, field));
      }
    }
    if (dim == 0) {
      if (values.empty()) throw ParseError(fmt::format("line {}: row has no values", line_no));
      dim = static_cast<Eigen::Index>(values.size());
    }
    if (static_cast<Eigen::Index>(values.size()) != dim) {
      throw ParseError(fmt::format("line {}: row has {} values, expected {}", line_no, values.size(), dim));
    }
    if (table.contains(term)) spdlog::warn("embedding line {}: duplicate term '{}', keeping the last row", line_no, term);
    table.insert(term, Eigen::Map<const Eigen::VectorXd>(values.data(), dim));
  }
  if (table.dim() == 0) table = EmbeddingTable(dim);
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, EmbeddingFormat format) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open embeddings '{}'", path.string()));
  return load_embeddings(in, format);
}

EmbeddingTable collapse_to_pipeline(const EmbeddingTable& table, const TokenPipeline& pipeline) {
  std::vector<std::string> order;
  std::map<std::string, std::pair<Eigen::VectorXd, int>> groups;
  for (const auto& term : table.terms()) {
    const auto key = normalize_term(term, pipeline);
    if (key.empty()) continue;
    auto [it, inserted] = groups.try_emplace(key, Eigen::VectorXd::Zero(table.dim()), 0);
    if (inserted) order.push_back(key);
    it->second.first += table.at(term);
    ++it->second.second;
  }
  EmbeddingTable out(table.dim());
  std::size_t merged = 0;
  for (const auto& key : order) {
    const auto& [sum, n] = groups.at(key);
    if (n > 1) ++merged;
    out.insert(key, sum / static_cast<double>(n));
  }
  if (merged > 0) spdlog::info("embedding table: {} normalized terms averaged over multiple surface forms", merged);
  return out;
}

QueryVector query_vector(const EmbeddingTable& table, std::span<const std::string> terms) {
  QueryVector qv;
  qv.values = Eigen::VectorXd::Zero(table.dim());
  for (const auto& term : terms) {
    const auto col = table.column(term);
    if (!col) {
      spdlog::debug("query term '{}' has no vector; skipped", term);
      continue;
    }
    qv.values += table.vector(*col);
    qv.source_terms.push_back(term);
  }
  if (qv.source_terms.empty()) throw std::invalid_argument("no query term has an embedding");
  qv.values /= static_cast<double>(qv.source_terms.size());
  return qv;
}

}  // namespace prf
