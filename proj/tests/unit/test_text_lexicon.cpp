#include <doctest.h>

#include <random>
#include <sstream>

#include "vemr/error.hpp"
#include "vemr/lexicon.hpp"
#include "vemr/text.hpp"

using namespace vemr;

namespace {

const lexicon::Lexicon& dictionary() {
    static const auto lex = lexicon::load_lexicon_file(std::string(VEMR_DATA_DIR) + "/lexicon/medical_dictionary.txt");
    return lex;
}

lexicon::Lexicon from_text(const std::string& s) {
    std::istringstream in(s);
    return lexicon::load_lexicon(in);
}

} // namespace

TEST_CASE("text helpers") {
    CHECK(text::casefold("Hb Is LOW") == "hb is low");
    CHECK(text::trim("  a b \n") == "a b");
    CHECK(text::canonical("  Cephalic ") == "cephalic");
    CHECK(text::split_whitespace(" a  b\tc ") == std::vector<std::string>{"a", "b", "c"});
    CHECK(text::strip_punctuation("don't stop, ok.") == "dont stop  ok ");
    const auto toks = text::word_tokens("BP: 150/95");
    REQUIRE(toks.size() == 3);
    CHECK(toks[0].text == "bp");
    CHECK(toks[2].begin == 8);
    CHECK(toks[2].end == 10);
}

TEST_CASE("shipped dictionary loads with all three categories") {
    const auto& lex = dictionary();
    CHECK(lex.size() >= 100);
    std::size_t counts[3] = {0, 0, 0};
    for (const auto& e : lex.entries()) ++counts[static_cast<int>(e.category)];
    CHECK(counts[0] > 0);
    CHECK(counts[1] > 0);
    CHECK(counts[2] > 0);
}

TEST_CASE("normalize_term maps colloquialisms and is identity on canonicals") {
    const auto& lex = dictionary();
    CHECK(lexicon::normalize_term("sugar", lex).canonical == "diabetes");
    CHECK(lexicon::normalize_term("Sugar Ki Bimari", lex).canonical == "diabetes");
    CHECK(lexicon::normalize_term("duplascon", lex).canonical == "duphaston");
    const auto same = lexicon::normalize_term("diabetes", lex);
    CHECK(same.matched);
    CHECK(same.canonical == "diabetes");
    const auto miss = lexicon::normalize_term("zzz unknown", lex);
    CHECK_FALSE(miss.matched);
    CHECK(miss.canonical == "zzz unknown");
}

TEST_CASE("normalize_text prefers the longest phrase") {
    const auto& lex = dictionary();
    const auto n = lexicon::normalize_text("Husband family has high blood pressure.", lex);
    CHECK(n.text == "Husband family has hypertension.");
    REQUIRE(n.substitutions.size() == 1);
    CHECK(n.substitutions[0].from == "high blood pressure");

    const auto m = lexicon::normalize_text("Patient has sugar ki bimari and sugar", lex);
    CHECK(m.text == "Patient has diabetes and diabetes");
}

TEST_CASE("orthographic variants stay out of text normalization but share a spelling") {
    const auto& lex = dictionary();
    CHECK(lexicon::normalize_text("wo kaam krte hain", lex).text == "wo kaam krte hain");
    for (const char* v : {"kertay", "krte", "krtay", "krty", "KRTE"})
        CHECK(lexicon::canonical_spelling(v, lex) == "kertay");
    CHECK(lexicon::canonical_spelling("mareez", lex) == "mareez");
}

TEST_CASE("normalization is idempotent and its spans replay exactly") {
    const auto& lex = dictionary();
    std::vector<std::string> vocab;
    for (const auto& e : lex.entries()) {
        vocab.push_back(e.canonical);
        for (const auto& v : e.variants) vocab.push_back(v);
    }
    for (const char* w : {"the", "patient", "has", "no", ",", ".", "and", "Mild"}) vocab.emplace_back(w);
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
    for (int trial = 0; trial < 500; ++trial) {
        std::string s;
        const int n = std::uniform_int_distribution<int>(0, 12)(rng);
        for (int i = 0; i < n; ++i) s += (i ? " " : "") + vocab[pick(rng)];
        const auto once = lexicon::normalize_text(s, lex);
        CHECK(lexicon::apply_substitutions(s, once.substitutions) == once.text);
        for (std::size_t k = 0; k < once.substitutions.size(); ++k) {
            const auto& sub = once.substitutions[k];
            CHECK(s.substr(sub.begin, sub.end - sub.begin) == sub.from);
            if (k) CHECK(once.substitutions[k - 1].end <= sub.begin);
        }
        CHECK(lexicon::normalize_text(once.text, lex).text == once.text);
    }
}

TEST_CASE("loader rejects malformed lines and collisions") {
    CHECK_THROWS_AS(from_text("fever ; colloquialism"), ParseError);
    CHECK_THROWS_AS(from_text("fever ; slang ; bukhar"), ParseError);
    try {
        from_text("a\nfever ; colloquialism ; bukhar\nmalaria ; colloquialism ; bukhar\n");
        FAIL("expected a failure");
    } catch (const ParseError& e) {
        CHECK(e.path() == "line 1");
    }
    try {
        from_text("fever ; colloquialism ; bukhar\nmalaria ; colloquialism ; bukhar\n");
        FAIL("expected a collision");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("fever") != std::string::npos);
        CHECK(msg.find("malaria") != std::string::npos);
    }
    CHECK_THROWS_AS(from_text("fever ; colloquialism ;\n"), ValidationError);
    CHECK_THROWS_AS(from_text("do ; orthographic-variant ; kar te\n"), ValidationError);
}

TEST_CASE("relevant entries follow entry order") {
    const auto& lex = dictionary();
    const auto hits = lexicon::relevant_entries("Prescribed duplascon, patient family has sugar", lex);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0]->canonical == "diabetes");
    CHECK(hits[1]->canonical == "duphaston");
}
