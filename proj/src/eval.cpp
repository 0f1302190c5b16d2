#include "vemr/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>

#include "vemr/error.hpp"
#include "vemr/text.hpp"
#include "vemr/transcript.hpp"

namespace vemr::eval {

namespace fs = std::filesystem;

namespace {

const char* on_off(bool b) { return b ? "on" : "off"; }

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

/// Plain text table: first column left aligned, the rest right aligned.
std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(header.size(), 0);
    auto widen = [&](const std::vector<std::string>& r) {
        for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], r[i].size());
    };
    widen(header);
    for (const auto& r : rows) widen(r);

    auto line = [&](const std::vector<std::string>& r) {
        std::string out;
        for (std::size_t i = 0; i < width.size(); ++i) {
            const std::string cell = i < r.size() ? r[i] : "";
            const std::string pad(width[i] - cell.size(), ' ');
            if (i) out += "  ";
            out += i == 0 ? cell + pad : pad + cell;
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        return out + "\n";
    };
    std::string out = line(header);
    std::size_t total = 0;
    for (auto w : width) total += w;
    out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    for (const auto& r : rows) out += line(r);
    return out;
}

Json read_json(const fs::path& p) {
    try {
        return Json::parse(text::read_file(p.string()));
    } catch (const Json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what(), p.string());
    }
}

emr::Document read_document(const fs::path& p, const emr::Schema& schema) {
    return emr::parse(text::read_file(p.string()), schema);
}

std::vector<std::string> sorted_subdirs(const fs::path& dir) {
    std::vector<std::string> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) out.push_back(e.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
}

Json aggregate_json(const RatingAggregate& a) {
    Json j;
    j["rated"] = a.rated;
    j["medical_accuracy_pct"] = a.accuracy_pct ? Json(*a.accuracy_pct) : Json(nullptr);
    j["patient_relevance_pct"] = a.relevance_pct ? Json(*a.relevance_pct) : Json(nullptr);
    return j;
}

std::string pct_or_dash(const std::optional<double>& v) { return v ? fixed(*v, 1) + "%" : "n/a"; }

} // namespace

// ---------------------------------------------------------------------------
// WER

std::string describe(const NormalizationOptions& o) {
    return std::string("casefold=") + on_off(o.casefold) + " strip_punct=" + on_off(o.strip_punct) +
           " collapse_repetitions=" + on_off(o.collapse_repetitions) +
           " roman_urdu_canonicalize=" + on_off(o.roman_urdu_canonicalize);
}

std::vector<std::string> normalize_words(std::string_view input, const NormalizationOptions& opts,
                                         const lexicon::Lexicon* lex) {
    if (opts.roman_urdu_canonicalize && !lex)
        throw ValidationError("orthographic canonicalization needs a lexicon", "roman_urdu_canonicalize");
    std::string s(input);
    if (opts.casefold) s = text::casefold(s);
    if (opts.strip_punct) s = text::strip_punctuation(s);
    auto words = text::split_whitespace(s);
    if (opts.roman_urdu_canonicalize)
        for (auto& w : words) w = lexicon::canonical_spelling(w, *lex);
    if (opts.collapse_repetitions) words = text::split_whitespace(transcript::collapse_repetitions(text::join(words, " ")));
    return words;
}

WerResult align_words(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
    if (ref.empty()) throw ValidationError("reference transcript is empty", "reference");
    const std::size_t n = ref.size(), m = hyp.size();
    // cost[i][j]: edit distance between ref[0..i) and hyp[0..j)
    std::vector<std::size_t> cost((n + 1) * (m + 1));
    auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return cost[i * (m + 1) + j]; };
    for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
    for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
        }

    WerResult r;
    r.ref_words = n;
    r.hyp_words = m;
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
            if (ref[i - 1] != hyp[j - 1]) ++r.substitutions;
            --i, --j;
        } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
            ++r.deletions;
            --i;
        } else {
            ++r.insertions;
            --j;
        }
    }
    r.wer = static_cast<double>(r.errors()) / static_cast<double>(n);
    return r;
}

WerResult wer(std::string_view reference, std::string_view hypothesis, const NormalizationOptions& opts,
              const lexicon::Lexicon* lex) {
    return align_words(normalize_words(reference, opts, lex), normalize_words(hypothesis, opts, lex));
}

std::vector<WerResult> wer_batch_serial(const std::vector<WerPair>& pairs, const NormalizationOptions& opts,
                                        const lexicon::Lexicon* lex) {
    std::vector<WerResult> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(wer(p.reference, p.hypothesis, opts, lex));
    return out;
}

std::vector<WerResult> wer_batch(const std::vector<WerPair>& pairs, const NormalizationOptions& opts,
                                 const lexicon::Lexicon* lex) {
    std::vector<WerResult> out(pairs.size());
    std::vector<std::string> errors(pairs.size());
    const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            out[i] = wer(pairs[i].reference, pairs[i].hypothesis, opts, lex);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty()) throw ValidationError(pairs[i].id + ": " + errors[i], "reference");
    return out;
}

WerResult aggregate(const std::vector<WerResult>& rows) {
    WerResult t;
    for (const auto& r : rows) {
        t.substitutions += r.substitutions;
        t.deletions += r.deletions;
        t.insertions += r.insertions;
        t.ref_words += r.ref_words;
        t.hyp_words += r.hyp_words;
    }
    t.wer = t.ref_words ? static_cast<double>(t.errors()) / static_cast<double>(t.ref_words) : 0.0;
    return t;
}

// ---------------------------------------------------------------------------
// Field accuracy

FieldAccuracyResult field_accuracy(const emr::Document& system, const emr::Document& truth, const emr::Schema& schema) {
    FieldAccuracyResult r;
    for (auto k : emr::kAllSections) r.per_section[k];
    for (const auto& d : emr::diff_documents(system, truth, schema)) {
        auto& sec = r.per_section[schema.find(d.field_id)->section];
        ++sec.total;
        ++r.total;
        if (d.equal) {
            ++sec.correct;
            ++r.correct;
        }
    }
    return r;
}

std::vector<FieldAccuracyResult> field_accuracy_batch_serial(const std::vector<DocumentPair>& pairs,
                                                             const emr::Schema& schema) {
    std::vector<FieldAccuracyResult> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(field_accuracy(p.system, p.truth, schema));
    return out;
}

std::vector<FieldAccuracyResult> field_accuracy_batch(const std::vector<DocumentPair>& pairs,
                                                      const emr::Schema& schema) {
    std::vector<FieldAccuracyResult> out(pairs.size());
    std::vector<std::string> errors(pairs.size());
    const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            out[i] = field_accuracy(pairs[i].system, pairs[i].truth, schema);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty()) throw ValidationError(pairs[i].id + ": " + errors[i], "schema_version");
    return out;
}

FieldAccuracyResult combine(const std::vector<FieldAccuracyResult>& results) {
    FieldAccuracyResult t;
    for (auto k : emr::kAllSections) t.per_section[k];
    for (const auto& r : results) {
        t.correct += r.correct;
        t.total += r.total;
        for (const auto& [k, s] : r.per_section) {
            t.per_section[k].correct += s.correct;
            t.per_section[k].total += s.total;
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Categorization

namespace {

struct CategoryName {
    ErrorCategory c;
    std::string_view wire;
    std::string_view display;
};

constexpr CategoryName kCategoryNames[] = {
    {ErrorCategory::NoActionNeeded, "no_action_needed", "No Action Needed"},
    {ErrorCategory::EasilyIdentifiableAndCorrectable, "easily_identifiable_and_correctable",
     "Easily Identifiable and Correctable"},
    {ErrorCategory::UnidentifiableWithoutGroundTruth, "unidentifiable_without_ground_truth",
     "Unidentifiable and Uncorrectable Without Ground Truth"},
};

} // namespace

std::string_view to_string(ErrorCategory c) noexcept { return kCategoryNames[static_cast<int>(c)].wire; }
std::string_view display_name(ErrorCategory c) noexcept { return kCategoryNames[static_cast<int>(c)].display; }

std::optional<ErrorCategory> category_from_string(std::string_view s) noexcept {
    for (const auto& n : kCategoryNames)
        if (n.wire == s) return n.c;
    return std::nullopt;
}

double ErrorCategoryTally::percent(ErrorCategory c) const noexcept {
    std::set<std::string> annotators;
    for (const auto& l : labels) annotators.insert(l.annotator);
    const double denom = static_cast<double>(total_fields) * static_cast<double>(std::max<std::size_t>(1, annotators.size()));
    auto it = counts.find(c);
    if (denom == 0.0 || it == counts.end()) return 0.0;
    return 100.0 * static_cast<double>(it->second) / denom;
}

ErrorCategoryTally record_categorization(const std::vector<emr::FieldDiff>& diffs,
                                         const std::vector<CategoryLabel>& labels) {
    std::map<std::string, bool> equal;
    for (const auto& d : diffs) equal[d.field_id] = d.equal;

    ErrorCategoryTally t;
    for (auto c : kAllCategories) t.counts[c] = 0;
    t.total_fields = diffs.size();
    for (const auto& d : diffs)
        if (!d.equal) ++t.unequal_fields;

    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& l : labels) {
        auto it = equal.find(l.field_id);
        if (it == equal.end()) throw ValidationError("label for unknown field " + l.field_id, l.field_id);
        if (it->second) throw ValidationError("label for a field that matches ground truth: " + l.field_id, l.field_id);
        if (!seen.emplace(l.field_id, l.annotator).second)
            throw ValidationError("field " + l.field_id + " labelled twice by " + l.annotator, l.field_id);
        ++t.counts[l.category];
        t.labels.push_back(l);
    }
    return t;
}

// ---------------------------------------------------------------------------
// Red-flag ratings

RedFlagRatingReport rate_redflags(const std::vector<std::string>& flag_ids, const std::vector<FlagRating>& ratings) {
    std::set<std::string> known(flag_ids.begin(), flag_ids.end());
    RedFlagRatingReport r;
    r.total_flags = known.size();

    struct Count {
        std::size_t n = 0, accurate = 0, relevant = 0;
    };
    Count pooled;
    std::map<std::string, Count> by_rater;
    std::set<std::string> rated;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& x : ratings) {
        if (!known.count(x.flag_id)) throw ValidationError("rating for unknown flag " + x.flag_id, x.flag_id);
        if (!seen.emplace(x.flag_id, x.rater).second)
            throw ValidationError("flag " + x.flag_id + " rated twice by " + x.rater, x.flag_id);
        rated.insert(x.flag_id);
        for (Count* c : {&pooled, &by_rater[x.rater]}) {
            ++c->n;
            c->accurate += x.medically_accurate;
            c->relevant += x.patient_relevant;
        }
    }
    auto finish = [](const Count& c) {
        RatingAggregate a;
        a.rated = c.n;
        if (c.n) {
            a.accuracy_pct = 100.0 * static_cast<double>(c.accurate) / static_cast<double>(c.n);
            a.relevance_pct = 100.0 * static_cast<double>(c.relevant) / static_cast<double>(c.n);
        }
        return a;
    };
    r.pooled = finish(pooled);
    for (const auto& [rater, c] : by_rater) r.per_rater[rater] = finish(c);
    for (const auto& id : known)
        if (!rated.count(id)) r.unrated.push_back(id);
    return r;
}

// ---------------------------------------------------------------------------
// Cross-model

std::vector<CrossModelRow> cross_model_report(const std::vector<ModelRun>& runs) {
    std::vector<const ModelRun*> sorted;
    for (const auto& r : runs) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->backend_id < b->backend_id; });

    std::vector<CrossModelRow> out;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const auto& run = *sorted[i];
        if (i && run.backend_id == sorted[i - 1]->backend_id)
            throw ValidationError("backend listed twice: " + run.backend_id, "backend_id");
        if (i) {
            std::vector<std::string> a, b;
            for (const auto& [id, _] : sorted[0]->per_patient) a.push_back(id);
            for (const auto& [id, _] : run.per_patient) b.push_back(id);
            if (a != b)
                throw ValidationError("backends " + sorted[0]->backend_id + " and " + run.backend_id +
                                          " cover different patients",
                                      "patients");
        }
        std::vector<FieldAccuracyResult> rs;
        for (const auto& [_, r] : run.per_patient) rs.push_back(r);
        out.push_back({run.backend_id, combine(rs)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Emitters

std::string format_percent(double fraction) { return fixed(100.0 * fraction, 1) + "%"; }

std::string wer_table(const std::vector<WerPair>& pairs, const std::vector<WerResult>& rows,
                      const NormalizationOptions& opts) {
    std::vector<std::vector<std::string>> body;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        body.push_back({pairs[i].id, std::to_string(r.ref_words), std::to_string(r.hyp_words),
                        std::to_string(r.substitutions), std::to_string(r.deletions), std::to_string(r.insertions),
                        fixed(r.wer, 4)});
    }
    const auto t = aggregate(rows);
    body.push_back({"TOTAL", std::to_string(t.ref_words), std::to_string(t.hyp_words), std::to_string(t.substitutions),
                    std::to_string(t.deletions), std::to_string(t.insertions), fixed(t.wer, 4)});
    return "normalization: " + describe(opts) + "\n" +
           render_table({"id", "ref", "hyp", "S", "D", "I", "WER"}, body);
}

Json wer_json(const std::vector<WerPair>& pairs, const std::vector<WerResult>& rows, const NormalizationOptions& opts) {
    auto row = [](const WerResult& r) {
        return Json{{"ref_words", r.ref_words}, {"hyp_words", r.hyp_words}, {"substitutions", r.substitutions},
                    {"deletions", r.deletions},  {"insertions", r.insertions}, {"wer", r.wer}};
    };
    Json j;
    j["normalization"] = {{"casefold", opts.casefold},
                          {"strip_punct", opts.strip_punct},
                          {"collapse_repetitions", opts.collapse_repetitions},
                          {"roman_urdu_canonicalize", opts.roman_urdu_canonicalize}};
    j["pairs"] = Json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto r = row(rows[i]);
        r["id"] = pairs[i].id;
        j["pairs"].push_back(r);
    }
    j["total"] = row(aggregate(rows));
    return j;
}

std::string accuracy_table(const std::vector<std::string>& ids, const std::vector<FieldAccuracyResult>& rows) {
    std::vector<std::vector<std::string>> body;
    for (std::size_t i = 0; i < rows.size(); ++i)
        body.push_back({ids[i], std::to_string(rows[i].correct), std::to_string(rows[i].total),
                        format_percent(rows[i].accuracy())});
    const auto t = combine(rows);
    for (auto k : emr::kAllSections) {
        const auto& s = t.per_section.at(k);
        body.push_back({std::string(emr::display_name(k)), std::to_string(s.correct), std::to_string(s.total),
                        format_percent(s.accuracy())});
    }
    body.push_back({"Overall Accuracy", std::to_string(t.correct), std::to_string(t.total), format_percent(t.accuracy())});
    return render_table({"patient / section", "correct", "total", "accuracy"}, body);
}

namespace {

Json accuracy_row(const FieldAccuracyResult& r) {
    Json j{{"correct", r.correct}, {"total", r.total}, {"accuracy", r.accuracy()}};
    j["sections"] = Json::object();
    for (const auto& [k, s] : r.per_section)
        j["sections"][std::string(emr::to_string(k))] = {{"correct", s.correct}, {"total", s.total}};
    return j;
}

} // namespace

Json accuracy_json(const std::vector<std::string>& ids, const std::vector<FieldAccuracyResult>& rows) {
    Json j;
    j["patients"] = Json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto r = accuracy_row(rows[i]);
        r["id"] = ids[i];
        j["patients"].push_back(r);
    }
    j["overall"] = accuracy_row(combine(rows));
    return j;
}

std::string categorization_table(const ErrorCategoryTally& t) {
    std::vector<std::vector<std::string>> body;
    for (auto c : kAllCategories)
        body.push_back({std::string(display_name(c)), std::to_string(t.counts.at(c)), fixed(t.percent(c), 2) + "%"});
    return "fields: " + std::to_string(t.total_fields) + ", differing from ground truth: " +
           std::to_string(t.unequal_fields) + "\n" + render_table({"Category", "fields", "%"}, body);
}

Json categorization_json(const ErrorCategoryTally& t) {
    Json j{{"total_fields", t.total_fields}, {"unequal_fields", t.unequal_fields}};
    j["categories"] = Json::object();
    for (auto c : kAllCategories)
        j["categories"][std::string(to_string(c))] = {{"count", t.counts.at(c)}, {"percent", t.percent(c)}};
    return j;
}

std::string ratings_table(const RedFlagRatingReport& r) {
    std::vector<std::vector<std::string>> body{
        {"Total Red Flags", std::to_string(r.total_flags)},
        {"Ratings", std::to_string(r.pooled.rated)},
        {"Medical Accuracy %", pct_or_dash(r.pooled.accuracy_pct)},
        {"Patient-Specific Relevance %", pct_or_dash(r.pooled.relevance_pct)},
    };
    for (const auto& [rater, a] : r.per_rater)
        body.push_back({"  " + rater + ": accuracy / relevance",
                        pct_or_dash(a.accuracy_pct) + " / " + pct_or_dash(a.relevance_pct)});
    body.push_back({"Unrated flags", std::to_string(r.unrated.size())});
    return render_table({"Measure", "Value"}, body);
}

Json ratings_json(const RedFlagRatingReport& r) {
    Json j{{"total_flags", r.total_flags}, {"pooled", aggregate_json(r.pooled)}};
    j["per_rater"] = Json::object();
    for (const auto& [rater, a] : r.per_rater) j["per_rater"][rater] = aggregate_json(a);
    j["unrated"] = r.unrated;
    return j;
}

std::string cross_model_table(const std::vector<CrossModelRow>& rows) {
    std::vector<std::string> header{"Section", "Total Fields"};
    for (const auto& r : rows) header.push_back(r.backend_id);
    std::vector<std::vector<std::string>> body;
    for (auto k : emr::kAllSections) {
        std::vector<std::string> line{std::string(emr::display_name(k)),
                                      rows.empty() ? "0" : std::to_string(rows.front().pooled.per_section.at(k).total)};
        for (const auto& r : rows) line.push_back(format_percent(r.pooled.per_section.at(k).accuracy()));
        body.push_back(line);
    }
    std::vector<std::string> overall{"Overall Accuracy", ""};
    for (const auto& r : rows) overall.push_back(format_percent(r.pooled.accuracy()));
    body.push_back(overall);
    return render_table(header, body);
}

Json cross_model_json(const std::vector<CrossModelRow>& rows) {
    Json j = Json::array();
    for (const auto& r : rows) {
        auto row = accuracy_row(r.pooled);
        row["backend_id"] = r.backend_id;
        j.push_back(row);
    }
    return Json{{"backends", j}};
}

// ---------------------------------------------------------------------------
// Corpus bundles

std::vector<std::string> patient_ids(const std::string& corpus_dir) {
    const fs::path dir = fs::path(corpus_dir) / "patients";
    if (!fs::is_directory(dir)) throw IoError("corpus has no patients/ directory: " + corpus_dir);
    return sorted_subdirs(dir);
}

std::vector<WerPair> load_wer_pairs(const std::string& corpus_dir) {
    std::vector<WerPair> out;
    for (const auto& id : patient_ids(corpus_dir)) {
        const auto dir = fs::path(corpus_dir) / "patients" / id;
        if (!fs::exists(dir / "reference.txt") || !fs::exists(dir / "hypothesis.txt")) continue;
        out.push_back({id, text::read_file((dir / "reference.txt").string()),
                       text::read_file((dir / "hypothesis.txt").string())});
    }
    return out;
}

std::vector<DocumentPair> load_document_pairs(const std::string& corpus_dir, const emr::Schema& schema) {
    std::vector<DocumentPair> out;
    for (const auto& id : patient_ids(corpus_dir)) {
        const auto dir = fs::path(corpus_dir) / "patients" / id;
        if (!fs::exists(dir / "system_emr.json") || !fs::exists(dir / "truth_emr.json")) continue;
        out.push_back({id, read_document(dir / "system_emr.json", schema), read_document(dir / "truth_emr.json", schema)});
    }
    return out;
}

std::vector<CategoryLabel> load_labels(const std::string& corpus_dir, const std::string& patient_id) {
    const auto path = fs::path(corpus_dir) / "patients" / patient_id / "categories.json";
    std::vector<CategoryLabel> out;
    if (!fs::exists(path)) return out;
    const auto j = read_json(path);
    const auto& arr = j.at("labels");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto& l = arr[i];
        auto cat = category_from_string(l.value("category", std::string()));
        if (!cat) throw ParseError("unknown category", path.string() + ":labels[" + std::to_string(i) + "].category");
        out.push_back({l.at("field_id").get<std::string>(), *cat, l.value("annotator", std::string("annotator"))});
    }
    return out;
}

std::pair<std::vector<std::string>, std::vector<FlagRating>> load_flag_ratings(const std::string& corpus_dir) {
    std::vector<std::string> ids;
    std::vector<FlagRating> ratings;
    for (const auto& pid : patient_ids(corpus_dir)) {
        const auto dir = fs::path(corpus_dir) / "patients" / pid;
        if (fs::exists(dir / "flags.json")) {
            const auto j = read_json(dir / "flags.json");
            for (const auto& f : j.at("flags")) ids.push_back(pid + "/" + f.at("id").get<std::string>());
        }
        if (fs::exists(dir / "ratings.json")) {
            const auto j = read_json(dir / "ratings.json");
            for (const auto& r : j.at("ratings"))
                ratings.push_back({pid + "/" + r.at("flag_id").get<std::string>(), r.at("rater").get<std::string>(),
                                   r.at("medically_accurate").get<bool>(), r.at("patient_relevant").get<bool>()});
        }
    }
    return {ids, ratings};
}

std::vector<ModelRun> load_model_runs(const std::string& corpus_dir, const emr::Schema& schema) {
    std::map<std::string, emr::Document> truths;
    for (const auto& id : patient_ids(corpus_dir)) {
        const auto p = fs::path(corpus_dir) / "patients" / id / "truth_emr.json";
        if (fs::exists(p)) truths.emplace(id, read_document(p, schema));
    }
    std::vector<ModelRun> out;
    const auto runs_dir = fs::path(corpus_dir) / "runs";
    for (const auto& backend : sorted_subdirs(runs_dir)) {
        ModelRun run{backend, {}};
        for (const auto& pid : sorted_subdirs(runs_dir / backend)) {
            auto it = truths.find(pid);
            if (it == truths.end()) throw ValidationError("run " + backend + " covers unknown patient " + pid, "patients");
            run.per_patient[pid] =
                field_accuracy(read_document(runs_dir / backend / pid / "system_emr.json", schema), it->second, schema);
        }
        out.push_back(std::move(run));
    }
    return out;
}

ErrorCategoryTally categorize_corpus(const std::string& corpus_dir, const emr::Schema& schema) {
    std::vector<emr::FieldDiff> diffs;
    std::vector<CategoryLabel> labels;
    for (const auto& pair : load_document_pairs(corpus_dir, schema)) {
        for (auto d : emr::diff_documents(pair.system, pair.truth, schema)) {
            d.field_id = pair.id + "/" + d.field_id;
            diffs.push_back(std::move(d));
        }
        for (auto l : load_labels(corpus_dir, pair.id)) {
            l.field_id = pair.id + "/" + l.field_id;
            labels.push_back(std::move(l));
        }
    }
    return record_categorization(diffs, labels);
}

} // namespace vemr::eval
