#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "prf/corpus_io.hpp"

namespace prf {

using TermId = std::uint32_t;
using DocOrd = std::uint32_t;

// Raised when a probability is requested from a model with no mass
// (an empty document without smoothing, an empty feedback set).
class UndefinedModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Posting {
  DocOrd doc;
  std::uint32_t count;
};

struct TermCount {
  TermId term;
  std::uint32_t count;
};

// Immutable document-level inverted index. Holds every unigram statistic the
// feedback models need: c(w,d), |d|, collection frequencies and the total
// token count.
class Index {
 public:
  Index() = default;

  // Throws ParseError on duplicate doc ids.
  static Index build(std::span<const RawDocument> docs, TokenPipeline pipeline);

  // Writes `<prefix>` (binary) and `<prefix>.vocab.tsv`.
  void save(const std::filesystem::path& path) const;
  static Index load(const std::filesystem::path& path);
  void write_vocab_tsv(std::ostream& out) const;

  std::size_t num_docs() const { return doc_ids_.size(); }
  std::size_t vocab_size() const { return terms_.size(); }
  std::uint64_t total_tokens() const { return total_tokens_; }

  std::optional<TermId> term_id(std::string_view term) const;
  const std::string& term(TermId id) const { return terms_[id]; }
  std::uint64_t coll_freq(TermId id) const { return coll_freq_[id]; }
  std::span<const Posting> postings(TermId id) const { return postings_[id]; }

  const std::string& doc_id(DocOrd d) const { return doc_ids_[d]; }
  std::optional<DocOrd> doc_ord(std::string_view doc_id) const;
  std::uint32_t doc_len(DocOrd d) const { return doc_len_[d]; }
  // Sorted by term id.
  std::span<const TermCount> doc_terms(DocOrd d) const { return forward_[d]; }
  std::uint32_t count(TermId term, DocOrd d) const;

  const TokenPipeline& pipeline() const { return pipeline_; }

 private:
  void rebuild_lookups();

  TokenPipeline pipeline_;
  std::vector<std::string> terms_;
  std::vector<std::uint64_t> coll_freq_;
  std::vector<std::vector<Posting>> postings_;
  std::vector<std::string> doc_ids_;
  std::vector<std::uint32_t> doc_len_;
  std::uint64_t total_tokens_ = 0;

  std::unordered_map<std::string, TermId> term_lookup_;
  std::unordered_map<std::string, DocOrd> doc_lookup_;
  std::vector<std::vector<TermCount>> forward_;
};

// c(w,d)/|d|. Throws UndefinedModelError when |d| = 0.
double p_ml_doc(const Index& index, TermId term, DocOrd doc);

// coll_freq(w)/total_tokens; 0 for ids outside the vocabulary.
double p_collection(const Index& index, TermId term);

// Term statistics of the top-ranked documents F.
struct FeedbackSet {
  std::vector<DocOrd> docs;
  std::map<TermId, std::uint64_t> term_counts;
  std::uint64_t total = 0;

  std::uint64_t count(TermId term) const;
  // c(w,F)/Σ c(·,F)
  double p_ml(TermId term) const;
};

// Throws std::invalid_argument on an empty or out-of-range document list.
FeedbackSet feedback_counts(const Index& index, std::span<const DocOrd> docs);

}  // namespace prf
