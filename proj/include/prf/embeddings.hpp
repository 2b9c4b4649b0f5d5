#pragma once

#include <cmath>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "prf/corpus_io.hpp"

namespace prf {

enum class EmbeddingFormat { Word2VecText, GloveText };

EmbeddingFormat parse_embedding_format(std::string_view name);

// Term -> dense vector of fixed dimension. Vectors are stored column-wise.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(Eigen::Index dim) : dim_(dim) {}

  Eigen::Index dim() const { return dim_; }
  std::size_t size() const { return terms_.size(); }
  bool contains(std::string_view term) const { return lookup_.contains(std::string(term)); }

  // Replaces the vector when the term already exists.
  void insert(const std::string& term, const Eigen::Ref<const Eigen::VectorXd>& v);

  std::optional<Eigen::Index> column(std::string_view term) const;
  Eigen::Ref<const Eigen::VectorXd> vector(Eigen::Index column) const { return vectors_.col(column); }
  // Throws std::out_of_range for unknown terms.
  Eigen::Ref<const Eigen::VectorXd> at(std::string_view term) const;

  // Insertion order.
  const std::vector<std::string>& terms() const { return terms_; }

 private:
  Eigen::Index dim_ = 0;
  std::vector<std::string> terms_;
  std::unordered_map<std::string, Eigen::Index> lookup_;
  Eigen::MatrixXd vectors_;
};

// word2vec text: "count dim" header then rows; GloVe text: rows only.
// Ragged rows throw ParseError naming the line; duplicate terms keep the
// last row and log a warning.
EmbeddingTable load_embeddings(std::istream& in, EmbeddingFormat format);
EmbeddingTable load_embeddings(const std::filesystem::path& path, EmbeddingFormat format);

// Re-keys a raw-form table into the tokenizer's output space. Forms that
// normalize to the same term are averaged; stopwords are kept.
EmbeddingTable collapse_to_pipeline(const EmbeddingTable& table, const TokenPipeline& pipeline);

struct QueryVector {
  Eigen::VectorXd values;
  std::vector<std::string> source_terms;
};

// Mean of the in-table term vectors, counting repeated terms. Terms missing
// from the table are skipped; throws std::invalid_argument if none remain.
QueryVector query_vector(const EmbeddingTable& table, std::span<const std::string> terms);

enum class Similarity { Sigmoid, Cosine };

Similarity parse_similarity(std::string_view name);

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar sigmoid_sim(const Eigen::MatrixBase<DerivedA>& u, const Eigen::MatrixBase<DerivedB>& v) {
  if (u.size() != v.size()) throw std::invalid_argument("sigmoid_sim: length mismatch");
  using Scalar = typename DerivedA::Scalar;
  const Scalar dot = u.dot(v);
  // Evaluated on the side that cannot overflow.
  if (dot >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-dot));
  const Scalar e = std::exp(dot);
  return e / (Scalar(1) + e);
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_sim(const Eigen::MatrixBase<DerivedA>& u, const Eigen::MatrixBase<DerivedB>& v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine_sim: length mismatch");
  using Scalar = typename DerivedA::Scalar;
  const Scalar nu = u.norm();
  const Scalar nv = v.norm();
  if (nu == Scalar(0) || nv == Scalar(0)) throw std::invalid_argument("cosine_sim: zero-norm vector");
  return u.dot(v) / (nu * nv);
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar similarity(Similarity kind, const Eigen::MatrixBase<DerivedA>& u,
                                     const Eigen::MatrixBase<DerivedB>& v) {
  return kind == Similarity::Sigmoid ? sigmoid_sim(u, v) : cosine_sim(u, v);
}

}  // namespace prf
