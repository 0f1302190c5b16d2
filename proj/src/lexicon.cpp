#include "vemr/lexicon.hpp"

#include <fstream>
#include <set>

#include "vemr/error.hpp"
#include "vemr/text.hpp"

namespace vemr::lexicon {

namespace {

std::string phrase_key(std::string_view phrase) {
    std::string key;
    for (const auto& tok : text::word_tokens(phrase)) {
        if (!key.empty()) key.push_back(' ');
        key += tok.text;
    }
    return key;
}

std::size_t token_count(std::string_view key) {
    if (key.empty()) return 0;
    std::size_t n = 1;
    for (char c : key)
        if (c == ' ') ++n;
    return n;
}

std::string describe(const Entry& e) {
    std::string s = "'" + e.canonical + "'";
    if (e.line) s += " (line " + std::to_string(e.line) + ")";
    return s;
}

} // namespace

std::string_view to_string(Category c) noexcept {
    switch (c) {
    case Category::Colloquialism: return "colloquialism";
    case Category::OrthographicVariant: return "orthographic-variant";
    case Category::ClinicalTerm: return "clinical-term";
    }
    return "?";
}

std::optional<Category> category_from_string(std::string_view s) noexcept {
    if (s == "colloquialism") return Category::Colloquialism;
    if (s == "orthographic-variant") return Category::OrthographicVariant;
    if (s == "clinical-term") return Category::ClinicalTerm;
    return std::nullopt;
}

Lexicon::Lexicon(std::vector<Entry> entries) : entries_(std::move(entries)) {
    std::map<std::string, std::size_t, std::less<>> canonicals;
    // Every key claimed so far, with its owning entry; used for collision reports.
    std::map<std::string, std::size_t, std::less<>> claimed;

    auto claim = [&](const std::string& key, std::size_t owner, const std::string& shown) {
        auto [it, inserted] = claimed.emplace(key, owner);
        if (!inserted && it->second != owner) {
            throw ValidationError("lexicon collision on '" + shown + "' between " +
                                  describe(entries_[it->second]) + " and " + describe(entries_[owner]));
        }
        if (!inserted) throw ValidationError("variant '" + shown + "' listed twice in " + describe(entries_[owner]));
    };

    for (std::size_t i = 0; i < entries_.size(); ++i) {
        auto& e = entries_[i];
        if (text::trim(e.canonical).empty()) throw ValidationError("lexicon entry with empty canonical");
        if (e.category != Category::ClinicalTerm && e.variants.empty())
            throw ValidationError("entry " + describe(e) + " needs at least one variant");
        const auto ckey = phrase_key(e.canonical);
        if (ckey.empty()) throw ValidationError("entry " + describe(e) + " has no word characters");
        if (!canonicals.emplace(ckey, i).second)
            throw ValidationError("duplicate canonical " + describe(e) + " and " +
                                  describe(entries_[canonicals[ckey]]));
        for (const auto& v : e.variants) {
            if (phrase_key(v) == ckey)
                throw ValidationError("variant '" + v + "' equals its canonical in " + describe(e));
        }
    }

    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (e.category == Category::OrthographicVariant) {
            const auto rep = text::casefold(text::trim(e.variants.front()));
            for (const auto& v : e.variants) {
                auto key = text::casefold(text::trim(v));
                if (key.find_first_of(" \t") != std::string::npos)
                    throw ValidationError("orthographic variant '" + v + "' must be a single token");
                claim("spell:" + key, i, v);
                spellings_.emplace(key, rep);
            }
            continue;
        }
        auto ckey = phrase_key(e.canonical);
        claim("phrase:" + ckey, i, e.canonical);
        phrases_.emplace(ckey, PhraseHit{i, true});
        max_tokens_ = std::max(max_tokens_, token_count(ckey));
        for (const auto& v : e.variants) {
            auto key = phrase_key(v);
            if (key.empty()) throw ValidationError("empty variant in " + describe(e));
            claim("phrase:" + key, i, v);
            phrases_.emplace(key, PhraseHit{i, false});
            max_tokens_ = std::max(max_tokens_, token_count(key));
        }
    }
}

const Lexicon::PhraseHit* Lexicon::find_phrase(std::string_view key) const noexcept {
    auto it = phrases_.find(key);
    return it == phrases_.end() ? nullptr : &it->second;
}

const std::string* Lexicon::find_spelling(std::string_view token) const noexcept {
    auto it = spellings_.find(token);
    return it == spellings_.end() ? nullptr : &it->second;
}

Lexicon load_lexicon(std::istream& in) {
    std::vector<Entry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto body = text::trim(line);
        if (body.empty() || body.front() == '#') continue;
        auto first = body.find(';');
        auto second = first == std::string_view::npos ? first : body.find(';', first + 1);
        if (second == std::string_view::npos)
            throw ParseError("expected 'canonical ; category ; variants'", "line " + std::to_string(lineno));
        Entry e;
        e.line = lineno;
        e.canonical = std::string(text::trim(body.substr(0, first)));
        auto cat = category_from_string(text::trim(body.substr(first + 1, second - first - 1)));
        if (!cat) throw ParseError("unknown category", "line " + std::to_string(lineno));
        e.category = *cat;
        auto rest = body.substr(second + 1);
        std::size_t pos = 0;
        while (pos <= rest.size()) {
            auto bar = rest.find('|', pos);
            auto piece = text::trim(rest.substr(pos, bar == std::string_view::npos ? std::string_view::npos : bar - pos));
            if (!piece.empty()) e.variants.emplace_back(piece);
            if (bar == std::string_view::npos) break;
            pos = bar + 1;
        }
        entries.push_back(std::move(e));
    }
    try {
        return Lexicon(std::move(entries));
    } catch (const ValidationError& err) {
        throw ValidationError(std::string("lexicon: ") + err.what());
    }
}

Lexicon load_lexicon_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open lexicon " + path);
    return load_lexicon(in);
}

TermMatch normalize_term(std::string_view phrase, const Lexicon& lex) {
    if (const auto* hit = lex.find_phrase(phrase_key(phrase))) {
        return {lex.entries()[hit->entry].canonical, true};
    }
    return {std::string(phrase), false};
}

NormalizedText normalize_text(std::string_view input, const Lexicon& lex) {
    NormalizedText out;
    const auto tokens = text::word_tokens(input);
    const std::size_t n = tokens.size();
    std::size_t i = 0;
    std::string key;
    while (i < n) {
        std::size_t taken = 0;
        const std::size_t longest = std::min(lex.max_phrase_tokens(), n - i);
        for (std::size_t len = longest; len >= 1; --len) {
            key.clear();
            for (std::size_t k = i; k < i + len; ++k) {
                if (k > i) key.push_back(' ');
                key += tokens[k].text;
            }
            const auto* hit = lex.find_phrase(key);
            if (!hit) continue;
            taken = len;
            if (!hit->identity) {
                const auto b = tokens[i].begin;
                const auto e = tokens[i + len - 1].end;
                out.substitutions.push_back(
                    {b, e, std::string(input.substr(b, e - b)), lex.entries()[hit->entry].canonical});
            }
            break;
        }
        i += taken ? taken : 1;
    }
    out.text = apply_substitutions(input, out.substitutions);
    return out;
}

std::string apply_substitutions(std::string_view input, const std::vector<Substitution>& subs) {
    std::string out;
    out.reserve(input.size());
    std::size_t cursor = 0;
    for (const auto& s : subs) {
        out.append(input.substr(cursor, s.begin - cursor));
        out += s.to;
        cursor = s.end;
    }
    out.append(input.substr(cursor));
    return out;
}

std::string canonical_spelling(std::string_view token, const Lexicon& lex) {
    if (const auto* rep = lex.find_spelling(text::casefold(token))) return *rep;
    return std::string(token);
}

std::vector<const Entry*> relevant_entries(std::string_view input, const Lexicon& lex) {
    std::set<std::size_t> hits;
    const auto tokens = text::word_tokens(input);
    const std::size_t n = tokens.size();
    std::string key;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t len = 1; len <= std::min(lex.max_phrase_tokens(), n - i); ++len) {
            key.clear();
            for (std::size_t k = i; k < i + len; ++k) {
                if (k > i) key.push_back(' ');
                key += tokens[k].text;
            }
            if (const auto* hit = lex.find_phrase(key)) hits.insert(hit->entry);
        }
        if (lex.find_spelling(tokens[i].text)) {
            for (std::size_t e = 0; e < lex.size(); ++e) {
                const auto& entry = lex.entries()[e];
                if (entry.category != Category::OrthographicVariant) continue;
                for (const auto& v : entry.variants)
                    if (text::casefold(v) == tokens[i].text) hits.insert(e);
            }
        }
    }
    std::vector<const Entry*> out;
    for (auto e : hits) out.push_back(&lex.entries()[e]);
    return out;
}

} // namespace vemr::lexicon
