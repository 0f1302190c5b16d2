#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vemr::lexicon {

enum class Category { Colloquialism, OrthographicVariant, ClinicalTerm };

std::string_view to_string(Category c) noexcept;
std::optional<Category> category_from_string(std::string_view s) noexcept;

struct Entry {
    std::string canonical;
    Category category = Category::ClinicalTerm;
    std::vector<std::string> variants; // listing order preserved; first is the representative spelling
    std::size_t line = 0;              // source line, 0 when built in memory
};

/// Immutable after construction; safe for concurrent readers.
///
/// Two indexes are kept. The phrase index maps every colloquialism or
/// clinical-term variant (and each canonical, as an identity) to its
/// canonical; it drives normalize_term / normalize_text. The spelling index
/// collapses Roman-Urdu orthographic variants onto one representative token.
class Lexicon {
public:
    Lexicon() = default;

    /// Throws ValidationError on invariant breaks or variant collisions,
    /// naming both colliding entries.
    explicit Lexicon(std::vector<Entry> entries);

    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    struct PhraseHit {
        std::size_t entry = 0;
        bool identity = false; // the phrase is the canonical itself
    };

    /// Lookup by space-joined, case-folded token key.
    const PhraseHit* find_phrase(std::string_view key) const noexcept;
    std::size_t max_phrase_tokens() const noexcept { return max_tokens_; }

    /// Representative spelling for an orthographic variant (case-folded key).
    const std::string* find_spelling(std::string_view token) const noexcept;

private:
    std::vector<Entry> entries_;
    std::map<std::string, PhraseHit, std::less<>> phrases_;
    std::map<std::string, std::string, std::less<>> spellings_;
    std::size_t max_tokens_ = 0;
};

/// Record format, one per line: `canonical ; category ; variant|variant|...`.
/// Blank lines and lines starting with '#' are ignored. Malformed lines raise
/// ParseError naming the line number.
Lexicon load_lexicon(std::istream& in);
Lexicon load_lexicon_file(const std::string& path);

struct TermMatch {
    std::string canonical;
    bool matched = false;
};

/// Whole-phrase lookup; case-insensitive. Unmatched input is returned as is.
TermMatch normalize_term(std::string_view phrase, const Lexicon& lex);

struct Substitution {
    std::size_t begin = 0; // byte span in the input
    std::size_t end = 0;
    std::string from;
    std::string to;
    bool operator==(const Substitution&) const = default;
};

struct NormalizedText {
    std::string text;
    std::vector<Substitution> substitutions; // ascending, non-overlapping
};

/// Greedy longest-match-first, left-to-right phrase replacement.
NormalizedText normalize_text(std::string_view input, const Lexicon& lex);

/// Replays substitutions onto `input`; used to check span soundness.
std::string apply_substitutions(std::string_view input, const std::vector<Substitution>& subs);

/// Collapses a Roman-Urdu orthographic variant to its representative spelling.
std::string canonical_spelling(std::string_view token, const Lexicon& lex);

/// Entries whose canonical or a variant occurs in `text` (in entry order);
/// used for the prompt's dictionary excerpt.
std::vector<const Entry*> relevant_entries(std::string_view text, const Lexicon& lex);

} // namespace vemr::lexicon
