#include "vemr/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "vemr/error.hpp"
#include "vemr/text.hpp"

namespace vemr::retrieval {

namespace fs = std::filesystem;

GuidelineDoc parse_guideline(std::string_view t, const std::string& origin) {
    auto next_line = [&](std::size_t& pos) {
        auto nl = t.find('\n', pos);
        auto line = t.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? t.size() : nl + 1;
        return text::trim(line);
    };
    std::size_t pos = 0;
    if (next_line(pos) != "---") throw ParseError("guideline must start with front matter", origin);
    GuidelineDoc d;
    bool closed = false;
    while (pos < t.size()) {
        auto line = next_line(pos);
        if (line == "---") {
            closed = true;
            break;
        }
        auto colon = line.find(':');
        if (colon == std::string_view::npos) throw ParseError("malformed front matter line", origin);
        auto key = text::trim(line.substr(0, colon));
        auto value = std::string(text::trim(line.substr(colon + 1)));
        if (key == "doc_id") d.doc_id = value;
        else if (key == "source_label") d.source_label = value;
        else if (key == "title") d.title = value;
    }
    if (!closed) throw ParseError("unterminated front matter", origin);
    if (d.doc_id.empty()) throw ParseError("front matter lacks doc_id", origin);
    d.body = std::string(text::trim(t.substr(pos)));
    if (d.body.empty()) throw ValidationError("guideline " + d.doc_id + " has an empty body", d.doc_id);
    return d;
}

std::vector<GuidelineDoc> load_corpus_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("guideline corpus directory not found: " + dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<GuidelineDoc> docs;
    std::set<std::string> ids;
    for (const auto& f : files) {
        auto d = parse_guideline(text::read_file(f.string()), f.string());
        if (!ids.insert(d.doc_id).second) throw ValidationError("duplicate doc_id " + d.doc_id + " in " + f.string(), d.doc_id);
        docs.push_back(std::move(d));
    }
    return docs;
}

std::vector<std::pair<std::size_t, std::size_t>> window_spans(std::size_t n, std::size_t chunk, std::size_t overlap) {
    if (chunk == 0 || overlap >= chunk) throw ValidationError("overlap must be smaller than the chunk size", "overlap");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t s = 0;; s += chunk - overlap) {
        const std::size_t e = std::min(s + chunk, n);
        out.emplace_back(s, e);
        if (e >= n) break;
    }
    return out;
}

Index::Index(std::vector<GuidelineDoc> docs, IndexOptions options) : docs_(std::move(docs)), options_(options) {
    std::size_t total = 0;
    for (std::size_t d = 0; d < docs_.size(); ++d) {
        const auto toks = text::word_tokens(docs_[d].body);
        if (toks.empty()) continue;
        for (auto [b, e] : window_spans(toks.size(), options_.chunk_tokens, options_.overlap)) {
            Chunk c;
            c.doc = d;
            c.token_begin = b;
            c.token_end = e;
            c.char_begin = toks[b].begin;
            c.char_end = toks[e - 1].end;
            c.length = e - b;
            for (std::size_t i = b; i < e; ++i) ++c.term_freq[toks[i].text];
            for (const auto& [term, _] : c.term_freq) ++df_[term];
            total += c.length;
            chunks_.push_back(std::move(c));
        }
    }
    avg_len_ = chunks_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(chunks_.size());
}

std::size_t Index::doc_freq(std::string_view term) const noexcept {
    auto it = df_.find(term);
    return it == df_.end() ? 0 : it->second;
}

double Index::score(const Chunk& c, const std::vector<std::string>& terms) const {
    const double n = static_cast<double>(chunks_.size());
    const double norm = options_.k1 * (1.0 - options_.b + options_.b * static_cast<double>(c.length) / avg_len_);
    double s = 0.0;
    for (const auto& t : terms) {
        auto it = c.term_freq.find(t);
        if (it == c.term_freq.end()) continue;
        const double df = static_cast<double>(doc_freq(t));
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        const double tf = static_cast<double>(it->second);
        s += idf * tf * (options_.k1 + 1.0) / (tf + norm);
    }
    return s;
}

Index index_corpus(const std::vector<GuidelineDoc>& docs, const IndexOptions& options) {
    if (docs.empty()) throw ValidationError("guideline corpus is empty", "docs");
    if (options.chunk_tokens == 0 || options.overlap >= options.chunk_tokens)
        throw ValidationError("overlap must be smaller than the chunk size", "overlap");
    std::set<std::string> ids;
    for (const auto& d : docs) {
        if (!ids.insert(d.doc_id).second) throw ValidationError("duplicate doc_id " + d.doc_id, d.doc_id);
        if (text::trim(d.body).empty()) throw ValidationError("guideline " + d.doc_id + " has an empty body", d.doc_id);
    }
    return Index(docs, options);
}

std::string Snippet::id() const { return doc_id + "#" + std::to_string(begin) + "-" + std::to_string(end); }

std::vector<std::string> query_terms(std::string_view query) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (auto& t : text::word_tokens(query))
        if (seen.insert(t.text).second) out.push_back(std::move(t.text));
    return out;
}

namespace {

std::vector<Snippet> rank(const Index& index, const std::vector<double>& scores, std::size_t k) {
    if (k == 0) throw ValidationError("k must be at least 1", "k");
    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i] > 0.0) hits.push_back(i);
    const auto& chunks = index.chunks();
    const auto& docs = index.docs();
    std::sort(hits.begin(), hits.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        const auto& da = docs[chunks[a].doc].doc_id;
        const auto& db = docs[chunks[b].doc].doc_id;
        if (da != db) return da < db;
        return std::pair(chunks[a].char_begin, chunks[a].char_end) < std::pair(chunks[b].char_begin, chunks[b].char_end);
    });
    if (hits.size() > k) hits.resize(k);
    std::vector<Snippet> out;
    for (auto i : hits) {
        const auto& c = chunks[i];
        const auto& d = docs[c.doc];
        out.push_back({d.doc_id, c.char_begin, c.char_end, d.body.substr(c.char_begin, c.char_end - c.char_begin),
                       scores[i]});
    }
    return out;
}

} // namespace

std::vector<Snippet> retrieve(std::string_view query, const Index& index, std::size_t k) {
    const auto terms = query_terms(query);
    const auto& chunks = index.chunks();
    std::vector<double> scores(chunks.size(), 0.0);
    if (!terms.empty()) {
        const auto n = static_cast<std::ptrdiff_t>(chunks.size());
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) scores[static_cast<std::size_t>(i)] = index.score(chunks[static_cast<std::size_t>(i)], terms);
    }
    return rank(index, scores, k);
}

std::vector<Snippet> retrieve_serial(std::string_view query, const Index& index, std::size_t k) {
    const auto terms = query_terms(query);
    std::vector<double> scores;
    scores.reserve(index.chunks().size());
    for (const auto& c : index.chunks()) scores.push_back(terms.empty() ? 0.0 : index.score(c, terms));
    return rank(index, scores, k);
}

Json index_to_json(const Index& index) {
    Json docs = Json::array();
    for (const auto& d : index.docs())
        docs.push_back({{"doc_id", d.doc_id}, {"source_label", d.source_label}, {"title", d.title}, {"body", d.body}});
    Json chunks = Json::array();
    for (const auto& c : index.chunks())
        chunks.push_back({{"doc_id", index.docs()[c.doc].doc_id},
                          {"tokens", {c.token_begin, c.token_end}},
                          {"span", {c.char_begin, c.char_end}}});
    const auto& o = index.options();
    return {{"format", "vemr-guideline-index/1"},
            {"options", {{"chunk_tokens", o.chunk_tokens}, {"overlap", o.overlap}, {"k1", o.k1}, {"b", o.b}}},
            {"docs", std::move(docs)},
            {"chunks", std::move(chunks)}};
}

Index index_from_json(const Json& j) {
    try {
        IndexOptions o;
        const auto& oj = j.at("options");
        o.chunk_tokens = oj.at("chunk_tokens").get<std::size_t>();
        o.overlap = oj.at("overlap").get<std::size_t>();
        o.k1 = oj.at("k1").get<double>();
        o.b = oj.at("b").get<double>();
        std::vector<GuidelineDoc> docs;
        for (const auto& d : j.at("docs"))
            docs.push_back({d.at("doc_id").get<std::string>(), d.at("source_label").get<std::string>(),
                            d.at("title").get<std::string>(), d.at("body").get<std::string>()});
        auto index = index_corpus(docs, o);
        // Chunk table is derived; a mismatch means the file was built by a different tokenizer.
        const auto& cj = j.at("chunks");
        if (cj.size() != index.chunks().size()) throw ParseError("chunk table does not match corpus", "chunks");
        for (std::size_t i = 0; i < cj.size(); ++i) {
            const auto& c = index.chunks()[i];
            if (cj[i].at("span").at(0).get<std::size_t>() != c.char_begin ||
                cj[i].at("span").at(1).get<std::size_t>() != c.char_end)
                throw ParseError("chunk span does not match corpus", "chunks[" + std::to_string(i) + "]");
        }
        return index;
    } catch (const Json::exception& e) {
        throw ParseError(std::string("guideline index: ") + e.what(), "");
    }
}

namespace {

const std::map<std::string, std::string, std::less<>>& rule_terms() {
    static const std::map<std::string, std::string, std::less<>> table = {
        {"hypertension", "hypertension blood pressure preeclampsia"},
        {"obesity", "obesity bmi weight gain"},
        {"anemia", "anemia hemoglobin iron"},
        {"hyperglycemia", "gestational diabetes glucose screening"},
        {"elevated_hba1c", "gestational diabetes hba1c glucose"},
        {"proteinuria", "proteinuria albumin urine preeclampsia"},
        {"glycosuria", "glycosuria urine glucose diabetes"},
    };
    return table;
}

} // namespace

std::string flags_to_query(const std::vector<rules::RedFlag>& flags, const lexicon::Lexicon& lex) {
    std::vector<std::string> parts;
    for (const auto& f : flags) {
        auto it = rule_terms().find(f.rule_id);
        if (it != rule_terms().end()) {
            parts.push_back(it->second);
        } else if (!f.rule_id.empty()) {
            std::string r = f.rule_id;
            std::replace_if(r.begin(), r.end(), [](char ch) { return ch == '_' || ch == '.'; }, ' ');
            parts.push_back(r);
        }
        parts.push_back(text::casefold(f.title));
    }
    if (parts.empty()) return {};
    auto joined = text::join(parts, " ");
    return lexicon::normalize_text(joined, lex).text;
}

} // namespace vemr::retrieval
