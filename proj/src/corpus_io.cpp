#include "prf/corpus_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace prf {

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(fmt::format("cannot open '{}'", path.string()));
  return in;
}

std::string slurp(std::istream& in) {
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Tags are replaced with a single space so adjacent fields do not merge.
std::string strip_tags(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_tag = false;
  for (char c : s) {
    if (c == '<') {
      in_tag = true;
      out.push_back(' ');
    } else if (c == '>' && in_tag) {
      in_tag = false;
    } else if (!in_tag) {
      out.push_back(c);
    }
  }
  return out;
}

std::vector<RawDocument> parse_trec_sgml(const std::string& data) {
  std::vector<RawDocument> docs;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = data.find("<DOC>", pos);
    if (open == std::string::npos) break;
    const std::size_t ordinal = docs.size();
    const std::size_t close = data.find("</DOC>", open);
    if (close == std::string::npos) {
      throw ParseError(fmt::format("unterminated <DOC> at byte {} (document #{})", open, ordinal));
    }
    const std::size_t body_begin = open + 5;
    const std::string_view body(data.data() + body_begin, close - body_begin);
    const std::size_t id_open = body.find("<DOCNO>");
    const std::size_t id_close = body.find("</DOCNO>");
    if (id_open == std::string_view::npos || id_close == std::string_view::npos || id_close < id_open) {
      throw ParseError(fmt::format("missing <DOCNO> in document at byte {} (document #{})", open, ordinal));
    }
    RawDocument doc;
    doc.doc_id = std::string(trim(body.substr(id_open + 7, id_close - id_open - 7)));
    if (doc.doc_id.empty()) {
      throw ParseError(fmt::format("empty <DOCNO> at byte {} (document #{})", open, ordinal));
    }
    std::string text(body.substr(0, id_open));
    text += ' ';
    text.append(body.substr(id_close + 8));
    doc.text = strip_tags(text);
    docs.push_back(std::move(doc));
    pos = close + 6;
  }
  return docs;
}

std::vector<RawDocument> parse_jsonl(std::istream& in) {
  std::vector<RawDocument> docs;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (trim(line).empty()) continue;
    const std::size_t ordinal = docs.size();
    try {
      const auto obj = nlohmann::json::parse(line);
      RawDocument doc;
      doc.doc_id = obj.at("doc_id").get<std::string>();
      doc.text = obj.at("text").get<std::string>();
      if (doc.doc_id.empty()) throw ParseError("empty doc_id");
      docs.push_back(std::move(doc));
    } catch (const std::exception& e) {
      throw ParseError(
          fmt::format("malformed record at byte {} (document #{}): {}", line_offset, ordinal, e.what()));
    }
  }
  return docs;
}

void check_unique_ids(const std::vector<RawDocument>& docs) {
  std::unordered_set<std::string> seen;
  seen.reserve(docs.size());
  for (const auto& d : docs) {
    if (!seen.insert(d.doc_id).second) throw ParseError(fmt::format("duplicate doc_id '{}'", d.doc_id));
  }
}

// Text between `tag` and the next '<' (or end of input).
std::string_view field_after(std::string_view block, std::string_view tag) {
  const std::size_t at = block.find(tag);
  if (at == std::string_view::npos) return {};
  const std::size_t begin = at + tag.size();
  const std::size_t end = block.find('<', begin);
  return block.substr(begin, end == std::string_view::npos ? std::string_view::npos : end - begin);
}

std::string_view drop_label(std::string_view s, std::string_view label) {
  s = trim(s);
  if (s.substr(0, label.size()) == label) s = trim(s.substr(label.size()));
  return s;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : trim(s)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
    } else {
      if (space && !out.empty()) out.push_back(' ');
      space = false;
      out.push_back(c);
    }
  }
  return out;
}

std::vector<Topic> parse_trec_topics(const std::string& data) {
  std::vector<Topic> topics;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = data.find("<top>", pos);
    if (open == std::string::npos) break;
    std::size_t close = data.find("</top>", open);
    if (close == std::string::npos) close = data.size();
    const std::string_view block(data.data() + open, close - open);
    Topic t;
    t.topic_id = std::string(drop_label(field_after(block, "<num>"), "Number:"));
    if (t.topic_id.empty()) throw ParseError(fmt::format("topic at byte {} has no <num>", open));
    t.title = collapse_whitespace(drop_label(field_after(block, "<title>"), "Topic:"));
    if (t.title.empty()) throw ParseError(fmt::format("topic '{}' is missing a title", t.topic_id));
    topics.push_back(std::move(t));
    pos = close;
  }
  return topics;
}

std::vector<Topic> parse_tsv_topics(const std::string& data) {
  std::vector<Topic> topics;
  std::istringstream in(data);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto tab = line.find('\t');
    Topic t;
    t.topic_id = std::string(trim(std::string_view(line).substr(0, tab)));
    if (tab != std::string::npos) t.title = collapse_whitespace(std::string_view(line).substr(tab + 1));
    if (t.title.empty()) throw ParseError(fmt::format("topic '{}' is missing a title", t.topic_id));
    topics.push_back(std::move(t));
  }
  return topics;
}

bool is_word_byte(unsigned char c) { return c >= 0x80 || std::isalnum(c) != 0; }

bool is_ascii(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; });
}

}  // namespace

void Qrels::add(const std::string& topic_id, const std::string& doc_id, int grade) {
  if (grade < 0) throw ParseError(fmt::format("negative grade for ({}, {})", topic_id, doc_id));
  if (!judgments_.emplace(std::make_pair(topic_id, doc_id), grade).second) {
    throw ParseError(fmt::format("duplicate judgment ({}, {})", topic_id, doc_id));
  }
}

std::unordered_set<std::string> Qrels::relevant(const std::string& topic_id) const {
  std::unordered_set<std::string> out;
  for (auto it = judgments_.lower_bound({topic_id, std::string()});
       it != judgments_.end() && it->first.first == topic_id; ++it) {
    if (it->second > 0) out.insert(it->first.second);
  }
  return out;
}

int Qrels::grade(const std::string& topic_id, const std::string& doc_id) const {
  const auto it = judgments_.find({topic_id, doc_id});
  return it == judgments_.end() ? 0 : it->second;
}

DocFormat parse_doc_format(std::string_view name) {
  if (name == "trec-sgml" || name == "trec") return DocFormat::TrecSgml;
  if (name == "jsonl") return DocFormat::Jsonl;
  throw std::invalid_argument(fmt::format("unknown document format '{}'", name));
}

std::vector<RawDocument> parse_documents(std::istream& in, DocFormat format) {
  auto docs = format == DocFormat::Jsonl ? parse_jsonl(in) : parse_trec_sgml(slurp(in));
  check_unique_ids(docs);
  return docs;
}

std::vector<RawDocument> parse_documents(const std::filesystem::path& path, DocFormat format) {
  auto in = open_input(path);
  return parse_documents(in, format);
}

void write_documents_jsonl(std::ostream& out, const std::vector<RawDocument>& docs) {
  for (const auto& d : docs) {
    out << nlohmann::json{{"doc_id", d.doc_id}, {"text", d.text}}.dump() << '\n';
  }
}

std::vector<Topic> parse_topics(std::istream& in) {
  const std::string data = slurp(in);
  if (data.find("<top>") != std::string::npos) return parse_trec_topics(data);
  return parse_tsv_topics(data);
}

std::vector<Topic> parse_topics(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_topics(in);
}

Qrels parse_qrels(std::istream& in) {
  Qrels qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream fields(line);
    std::string topic, iter, doc, grade_text;
    if (!(fields >> topic >> iter >> doc >> grade_text)) {
      throw ParseError(fmt::format("qrels line {}: expected 4 columns", line_no));
    }
    int grade = 0;
    const auto [ptr, ec] = std::from_chars(grade_text.data(), grade_text.data() + grade_text.size(), grade);
    if (ec != std::errc() || ptr != grade_text.data() + grade_text.size()) {
      throw ParseError(fmt::format("qrels line {}: non-integer grade '{}'", line_no, grade_text));
    }
    try {
      qrels.add(topic, doc, grade);
    } catch (const ParseError& e) {
      throw ParseError(fmt::format("qrels line {}: {}", line_no, e.what()));
    }
  }
  return qrels;
}

Qrels parse_qrels(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_qrels(in);
}

std::unordered_set<std::string> load_stopwords(std::istream& in) {
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    const auto w = trim(line);
    if (!w.empty()) words.emplace(w);
  }
  return words;
}

std::unordered_set<std::string> load_stopwords(const std::filesystem::path& path) {
  auto in = open_input(path);
  return load_stopwords(in);
}

std::string normalize_term(std::string_view term, const TokenPipeline& pipeline) {
  std::string t(term);
  if (pipeline.lowercase) {
    for (char& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (pipeline.stem && is_ascii(t)) t = porter_stem(t);
  return t;
}

std::vector<std::string> tokenize(std::string_view text, const TokenPipeline& pipeline) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t begin = i;
    while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
    if (begin == i) continue;
    std::string term(text.substr(begin, i - begin));
    if (pipeline.lowercase) {
      for (char& c : term) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (pipeline.stopwords.contains(term)) continue;
    if (pipeline.stem && is_ascii(term)) term = porter_stem(term);
    if (!term.empty()) out.push_back(std::move(term));
  }
  return out;
}

}  // namespace prf
