#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace prf {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RawDocument {
  std::string doc_id;
  std::string text;
};

// Title-only query.
struct Topic {
  std::string topic_id;
  std::string title;
};

class Qrels {
 public:
  // Throws ParseError on a duplicate (topic, doc) pair or a negative grade.
  void add(const std::string& topic_id, const std::string& doc_id, int grade);

  // Documents with grade > 0.
  std::unordered_set<std::string> relevant(const std::string& topic_id) const;
  int grade(const std::string& topic_id, const std::string& doc_id) const;
  std::size_t size() const { return judgments_.size(); }

  const std::map<std::pair<std::string, std::string>, int>& judgments() const {
    return judgments_;
  }

 private:
  std::map<std::pair<std::string, std::string>, int> judgments_;
};

// Lowercasing happens first, then stopword removal, then stemming.
struct TokenPipeline {
  bool lowercase = true;
  std::unordered_set<std::string> stopwords;
  bool stem = true;
};

enum class DocFormat { TrecSgml, Jsonl };

DocFormat parse_doc_format(std::string_view name);

std::vector<RawDocument> parse_documents(std::istream& in, DocFormat format);
std::vector<RawDocument> parse_documents(const std::filesystem::path& path, DocFormat format);

// Writes one {"doc_id","text"} object per line.
void write_documents_jsonl(std::ostream& out, const std::vector<RawDocument>& docs);

// Accepts TREC topic files (<top>/<num>/<title>) or two-column TSV.
std::vector<Topic> parse_topics(std::istream& in);
std::vector<Topic> parse_topics(const std::filesystem::path& path);

// "topic iter docid grade" per line.
Qrels parse_qrels(std::istream& in);
Qrels parse_qrels(const std::filesystem::path& path);

std::unordered_set<std::string> load_stopwords(std::istream& in);
std::unordered_set<std::string> load_stopwords(const std::filesystem::path& path);

std::vector<std::string> tokenize(std::string_view text, const TokenPipeline& pipeline);

// Applies lowercasing and stemming to a single term, no stopword check.
std::string normalize_term(std::string_view term, const TokenPipeline& pipeline);

// Porter (1980) suffix stripper, following the reference C implementation.
// Input is expected lowercase ASCII; words of length <= 2 are returned as-is.
std::string porter_stem(std::string_view word);

}  // namespace prf
