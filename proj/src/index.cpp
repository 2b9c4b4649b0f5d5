#include "prf/index.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

namespace prf {

namespace {

constexpr std::array<char, 8> kMagic = {'P', 'R', 'F', 'I', 'D', 'X', '\0', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

// Little-endian host assumed; the header records the version so a future
// byte-order-aware format can be detected.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  template <typename T>
  void pod(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  template <typename T>
  T pod() {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in_) throw ParseError("truncated index file");
    return value;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) throw ParseError("truncated index file");
    return s;
  }

 private:
  std::istream& in_;
};

}  // namespace

Index Index::build(std::span<const RawDocument> docs, TokenPipeline pipeline) {
  Index index;
  index.pipeline_ = std::move(pipeline);
  index.doc_ids_.reserve(docs.size());
  index.doc_len_.reserve(docs.size());

  for (const auto& raw : docs) {
    const auto ord = static_cast<DocOrd>(index.doc_ids_.size());
    if (!index.doc_lookup_.emplace(raw.doc_id, ord).second) {
      throw ParseError(fmt::format("duplicate doc_id '{}'", raw.doc_id));
    }
    index.doc_ids_.push_back(raw.doc_id);

    std::map<TermId, std::uint32_t> counts;
    const auto tokens = tokenize(raw.text, index.pipeline_);
    for (const auto& tok : tokens) {
      auto [it, inserted] = index.term_lookup_.try_emplace(tok, static_cast<TermId>(index.terms_.size()));
      if (inserted) {
        index.terms_.push_back(tok);
        index.coll_freq_.push_back(0);
        index.postings_.emplace_back();
      }
      ++counts[it->second];
    }
    for (const auto& [term, c] : counts) {
      index.postings_[term].push_back({ord, c});
      index.coll_freq_[term] += c;
    }
    index.doc_len_.push_back(static_cast<std::uint32_t>(tokens.size()));
    index.total_tokens_ += tokens.size();
  }
  index.rebuild_lookups();
  return index;
}

void Index::rebuild_lookups() {
  term_lookup_.clear();
  term_lookup_.reserve(terms_.size());
  for (TermId t = 0; t < terms_.size(); ++t) term_lookup_.emplace(terms_[t], t);
  doc_lookup_.clear();
  doc_lookup_.reserve(doc_ids_.size());
  for (DocOrd d = 0; d < doc_ids_.size(); ++d) doc_lookup_.emplace(doc_ids_[d], d);

  forward_.assign(doc_ids_.size(), {});
  for (TermId t = 0; t < postings_.size(); ++t) {
    for (const auto& p : postings_[t]) forward_[p.doc].push_back({t, p.count});
  }
}

std::optional<TermId> Index::term_id(std::string_view term) const {
  const auto it = term_lookup_.find(std::string(term));
  if (it == term_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<DocOrd> Index::doc_ord(std::string_view doc_id) const {
  const auto it = doc_lookup_.find(std::string(doc_id));
  if (it == doc_lookup_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t Index::count(TermId term, DocOrd d) const {
  const auto& row = forward_[d];
  const auto it = std::lower_bound(row.begin(), row.end(), term,
                                   [](const TermCount& tc, TermId t) { return tc.term < t; });
  return (it != row.end() && it->term == term) ? it->count : 0;
}

void Index::save(const std::filesystem::path& path) const {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError(fmt::format("cannot write '{}'", path.string()));
    BinaryWriter w(out);
    out.write(kMagic.data(), kMagic.size());
    w.pod(kFormatVersion);

    w.pod<std::uint8_t>(pipeline_.lowercase ? 1 : 0);
    w.pod<std::uint8_t>(pipeline_.stem ? 1 : 0);
    std::vector<std::string> stop(pipeline_.stopwords.begin(), pipeline_.stopwords.end());
    std::sort(stop.begin(), stop.end());
    w.pod<std::uint64_t>(stop.size());
    for (const auto& s : stop) w.str(s);

    w.pod<std::uint64_t>(doc_ids_.size());
    for (DocOrd d = 0; d < doc_ids_.size(); ++d) {
      w.str(doc_ids_[d]);
      w.pod(doc_len_[d]);
    }
    w.pod<std::uint64_t>(terms_.size());
    for (TermId t = 0; t < terms_.size(); ++t) {
      w.str(terms_[t]);
      w.pod<std::uint64_t>(postings_[t].size());
      for (const auto& p : postings_[t]) {
        w.pod(p.doc);
        w.pod(p.count);
      }
    }
    if (!out) throw ParseError(fmt::format("write failed for '{}'", path.string()));
  }
  std::ofstream vocab(path.string() + ".vocab.tsv", std::ios::trunc);
  write_vocab_tsv(vocab);
}

Index Index::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(fmt::format("cannot open index '{}'", path.string()));
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw ParseError(fmt::format("'{}' is not an index file", path.string()));
  BinaryReader r(in);
  const auto version = r.pod<std::uint32_t>();
  if (version != kFormatVersion) {
    throw ParseError(fmt::format("index version {} unsupported (expected {})", version, kFormatVersion));
  }

  Index index;
  index.pipeline_.lowercase = r.pod<std::uint8_t>() != 0;
  index.pipeline_.stem = r.pod<std::uint8_t>() != 0;
  const auto n_stop = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_stop; ++i) index.pipeline_.stopwords.insert(r.str());

  const auto n_docs = r.pod<std::uint64_t>();
  index.doc_ids_.reserve(n_docs);
  index.doc_len_.reserve(n_docs);
  for (std::uint64_t d = 0; d < n_docs; ++d) {
    index.doc_ids_.push_back(r.str());
    index.doc_len_.push_back(r.pod<std::uint32_t>());
    index.total_tokens_ += index.doc_len_.back();
  }
  const auto n_terms = r.pod<std::uint64_t>();
  index.terms_.reserve(n_terms);
  index.postings_.resize(n_terms);
  index.coll_freq_.assign(n_terms, 0);
  for (std::uint64_t t = 0; t < n_terms; ++t) {
    index.terms_.push_back(r.str());
    const auto n_post = r.pod<std::uint64_t>();
    auto& list = index.postings_[t];
    list.reserve(n_post);
    for (std::uint64_t i = 0; i < n_post; ++i) {
      Posting p{};
      p.doc = r.pod<DocOrd>();
      p.count = r.pod<std::uint32_t>();
      if (p.doc >= n_docs || p.count == 0) throw ParseError("corrupt posting in index file");
      list.push_back(p);
      index.coll_freq_[t] += p.count;
    }
  }
  index.rebuild_lookups();
  return index;
}

void Index::write_vocab_tsv(std::ostream& out) const {
  for (TermId t = 0; t < terms_.size(); ++t) out << t << '\t' << terms_[t] << '\t' << coll_freq_[t] << '\n';
}

double p_ml_doc(const Index& index, TermId term, DocOrd doc) {
  const auto len = index.doc_len(doc);
  if (len == 0) throw UndefinedModelError(fmt::format("document '{}' is empty", index.doc_id(doc)));
  return static_cast<double>(index.count(term, doc)) / static_cast<double>(len);
}

double p_collection(const Index& index, TermId term) {
  if (term >= index.vocab_size() || index.total_tokens() == 0) return 0.0;
  return static_cast<double>(index.coll_freq(term)) / static_cast<double>(index.total_tokens());
}

std::uint64_t FeedbackSet::count(TermId term) const {
  const auto it = term_counts.find(term);
  return it == term_counts.end() ? 0 : it->second;
}

double FeedbackSet::p_ml(TermId term) const {
  if (total == 0) throw UndefinedModelError("feedback set has no tokens");
  return static_cast<double>(count(term)) / static_cast<double>(total);
}

FeedbackSet feedback_counts(const Index& index, std::span<const DocOrd> docs) {
  if (docs.empty()) throw std::invalid_argument("feedback set needs at least one document");
  FeedbackSet fb;
  fb.docs.assign(docs.begin(), docs.end());
  for (const auto d : docs) {
    if (d >= index.num_docs()) throw std::invalid_argument(fmt::format("document ordinal {} out of range", d));
    for (const auto& tc : index.doc_terms(d)) {
      fb.term_counts[tc.term] += tc.count;
      fb.total += tc.count;
    }
  }
  return fb;
}

}  // namespace prf
