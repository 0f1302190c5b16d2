#include <doctest.h>

#include <cctype>
#include <cmath>
#include <random>
#include <set>

#include "vemr/error.hpp"
#include "vemr/lexicon.hpp"
#include "vemr/retrieval.hpp"
#include "vemr/rules.hpp"

using namespace vemr;
using namespace vemr::retrieval;

namespace {

const Index& shipped() {
    static const auto idx = index_corpus(load_corpus_dir(std::string(VEMR_DATA_DIR) + "/guidelines"), {60, 15});
    return idx;
}

std::vector<std::string> words_of(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c >= 128) {
            cur.push_back(static_cast<char>(c < 128 ? std::tolower(c) : c));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// Okapi BM25 over chunk texts, recomputed from the raw spans.
double bm25_oracle(const Index& idx, std::size_t chunk, const std::vector<std::string>& terms) {
    std::vector<std::vector<std::string>> texts;
    double total = 0;
    for (const auto& c : idx.chunks()) {
        texts.push_back(words_of(idx.docs()[c.doc].body.substr(c.char_begin, c.char_end - c.char_begin)));
        total += static_cast<double>(texts.back().size());
    }
    const double n = static_cast<double>(texts.size());
    const double avg = total / n;
    const auto& mine = texts[chunk];
    double s = 0;
    for (const auto& t : terms) {
        double df = 0;
        for (const auto& tx : texts) df += std::count(tx.begin(), tx.end(), t) > 0;
        const double tf = static_cast<double>(std::count(mine.begin(), mine.end(), t));
        if (tf == 0) continue;
        const double idf = std::log(1 + (n - df + 0.5) / (df + 0.5));
        const double k1 = idx.options().k1, b = idx.options().b;
        s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * static_cast<double>(mine.size()) / avg));
    }
    return s;
}

} // namespace

TEST_CASE("window spans cover every token with the configured overlap") {
    for (std::size_t n : {1u, 5u, 200u, 201u, 359u, 1000u}) {
        const auto spans = window_spans(n, 200, 40);
        CHECK(spans.front().first == 0);
        CHECK(spans.back().second == n);
        for (std::size_t i = 1; i < spans.size(); ++i) {
            CHECK(spans[i].first == spans[i - 1].first + 160);
            CHECK(spans[i - 1].second - spans[i - 1].first == 200);
        }
    }
    CHECK_THROWS_AS(window_spans(10, 5, 5), ValidationError);
}

TEST_CASE("guideline files parse with front matter") {
    const auto docs = load_corpus_dir(std::string(VEMR_DATA_DIR) + "/guidelines");
    REQUIRE(docs.size() >= 5);
    std::set<std::string> ids;
    for (const auto& d : docs) {
        CHECK_FALSE(d.title.empty());
        CHECK_FALSE(d.source_label.empty());
        ids.insert(d.doc_id);
    }
    CHECK(ids.size() == docs.size());
    CHECK_THROWS_AS(parse_guideline("no front matter", "x.txt"), ParseError);
}

TEST_CASE("scores match an independent BM25 computation") {
    const auto& idx = shipped();
    const auto terms = query_terms("Hemoglobin below 11 iron folic acid blood pressure");
    for (std::size_t c = 0; c < idx.chunks().size(); ++c)
        CHECK(idx.score(idx.chunks()[c], terms) == doctest::Approx(bm25_oracle(idx, c, terms)).epsilon(1e-12));
}

TEST_CASE("retrieval ranks, cites exact spans, and matches the serial reference") {
    const auto& idx = shipped();
    const auto hits = retrieve("low hemoglobin anemia iron", idx, 3);
    REQUIRE_FALSE(hits.empty());
    CHECK(hits.front().doc_id == "anc-anemia");
    for (std::size_t i = 0; i < hits.size(); ++i) {
        if (i) CHECK(hits[i - 1].score >= hits[i].score);
        CHECK(hits[i].score > 0);
        const auto* doc = &idx.docs()[0];
        for (const auto& d : idx.docs())
            if (d.doc_id == hits[i].doc_id) doc = &d;
        CHECK(doc->body.substr(hits[i].begin, hits[i].end - hits[i].begin) == hits[i].text);
        CHECK(hits[i].id() == hits[i].doc_id + "#" + std::to_string(hits[i].begin) + "-" + std::to_string(hits[i].end));
    }
    CHECK(retrieve("zzzz qqqq", idx, 3).empty());

    std::mt19937_64 rng(8);
    const std::vector<std::string> vocab{"blood", "pressure", "iron", "bmi", "urine", "protein", "glucose", "headache",
                                         "weight", "diet", "the", "of", "hemoglobin", "referral"};
    for (int trial = 0; trial < 200; ++trial) {
        std::string q;
        for (int i = 0; i < 4; ++i) q += vocab[std::uniform_int_distribution<std::size_t>(0, vocab.size() - 1)(rng)] + " ";
        const auto k = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
        CHECK(retrieve(q, idx, k) == retrieve_serial(q, idx, k));
    }
}

TEST_CASE("index survives a JSON round trip") {
    const auto& idx = shipped();
    const auto back = index_from_json(index_to_json(idx));
    CHECK(back == idx);
    CHECK(retrieve("blood pressure", back) == retrieve("blood pressure", idx));
}

TEST_CASE("index construction rejects bad corpora") {
    CHECK_THROWS_AS(index_corpus({}), ValidationError);
    const GuidelineDoc a{"a", "s", "t", "body text"};
    CHECK_THROWS_AS(index_corpus({a, a}), ValidationError);
    CHECK_THROWS_AS(index_corpus({{"b", "s", "t", "   "}}), ValidationError);
    CHECK_THROWS_AS(index_corpus({a}, {10, 10}), ValidationError);
}

TEST_CASE("flag queries carry rule terms and are empty for no flags") {
    const auto lex = lexicon::load_lexicon_file(std::string(VEMR_DATA_DIR) + "/lexicon/medical_dictionary.txt");
    CHECK(flags_to_query({}, lex).empty());
    const auto flags = rules::evaluate_thresholds({{"hemoglobin", 9}}, rules::default_rules());
    const auto q = flags_to_query(flags, lex);
    CHECK(q.find("anemia") != std::string::npos);
    CHECK(retrieve(q, shipped(), 1).front().doc_id == "anc-anemia");
}
