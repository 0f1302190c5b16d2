#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vemr/json.hpp"
#include "vemr/lexicon.hpp"
#include "vemr/rules.hpp"

namespace vemr::retrieval {

struct GuidelineDoc {
    std::string doc_id;
    std::string source_label;
    std::string title;
    std::string body;
    bool operator==(const GuidelineDoc&) const = default;
};

/// Plain-text files with a front-matter header:
///
///     ---
///     doc_id: ...
///     source_label: ...
///     title: ...
///     ---
///     body
GuidelineDoc parse_guideline(std::string_view text, const std::string& origin);

/// Every *.txt in `dir`, sorted by file name. Duplicate doc_id is an error.
std::vector<GuidelineDoc> load_corpus_dir(const std::string& dir);

struct IndexOptions {
    std::size_t chunk_tokens = 200;
    std::size_t overlap = 40;
    double k1 = 1.2;
    double b = 0.75;
};

struct Chunk {
    std::size_t doc = 0; // index into Index::docs()
    std::size_t token_begin = 0;
    std::size_t token_end = 0;
    std::size_t char_begin = 0;
    std::size_t char_end = 0;
    std::size_t length = 0; // tokens
    std::map<std::string, std::size_t> term_freq;
    bool operator==(const Chunk&) const = default;
};

/// Token windows [start, start+chunk) advancing by chunk-overlap; the last
/// window ends at the document's last token.
std::vector<std::pair<std::size_t, std::size_t>> window_spans(std::size_t tokens, std::size_t chunk,
                                                              std::size_t overlap);

/// Immutable BM25 index over fixed-size overlapping chunks.
class Index {
public:
    Index() = default;
    Index(std::vector<GuidelineDoc> docs, IndexOptions options);

    const std::vector<GuidelineDoc>& docs() const noexcept { return docs_; }
    const std::vector<Chunk>& chunks() const noexcept { return chunks_; }
    const IndexOptions& options() const noexcept { return options_; }
    std::size_t doc_freq(std::string_view term) const noexcept;
    double average_length() const noexcept { return avg_len_; }

    /// BM25 score of one chunk for a set of distinct query terms.
    double score(const Chunk& chunk, const std::vector<std::string>& terms) const;

    bool operator==(const Index& o) const {
        return docs_ == o.docs_ && chunks_ == o.chunks_ && df_ == o.df_;
    }

private:
    std::vector<GuidelineDoc> docs_;
    IndexOptions options_;
    std::vector<Chunk> chunks_;
    std::map<std::string, std::size_t, std::less<>> df_;
    double avg_len_ = 0.0;
};

/// Throws ValidationError on an empty corpus, duplicate doc ids, empty
/// bodies, or overlap >= chunk size.
Index index_corpus(const std::vector<GuidelineDoc>& docs, const IndexOptions& options = {});

struct Snippet {
    std::string doc_id;
    std::size_t begin = 0; // byte span in the document body
    std::size_t end = 0;
    std::string text;
    double score = 0.0;

    /// "doc_id#begin-end", used for citations.
    std::string id() const;
    bool operator==(const Snippet&) const = default;
};

/// Distinct lower-cased word tokens of a query, in first-seen order.
std::vector<std::string> query_terms(std::string_view query);

/// Top-k chunks with positive score, descending; ties by (doc_id, span).
/// Chunks are scored in parallel.
std::vector<Snippet> retrieve(std::string_view query, const Index& index, std::size_t k = 3);

/// Single-threaded reference for `retrieve`.
std::vector<Snippet> retrieve_serial(std::string_view query, const Index& index, std::size_t k = 3);

Json index_to_json(const Index& index);
Index index_from_json(const Json& j);

/// Titles and rule-specific term groups of the flags, lexicon-normalized.
/// Empty flags give an empty query.
std::string flags_to_query(const std::vector<rules::RedFlag>& flags, const lexicon::Lexicon& lex);

} // namespace vemr::retrieval
