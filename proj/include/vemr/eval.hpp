#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vemr/emr.hpp"
#include "vemr/json.hpp"
#include "vemr/lexicon.hpp"

namespace vemr::eval {

// ---------------------------------------------------------------------------
// Word error rate

struct NormalizationOptions {
    bool casefold = true;
    bool strip_punct = true;
    bool collapse_repetitions = false;
    bool roman_urdu_canonicalize = false;
    bool operator==(const NormalizationOptions&) const = default;
};

/// "casefold=on strip_punct=on collapse_repetitions=off roman_urdu_canonicalize=off"
std::string describe(const NormalizationOptions& o);

struct WerResult {
    std::size_t substitutions = 0;
    std::size_t deletions = 0;
    std::size_t insertions = 0;
    std::size_t ref_words = 0;
    std::size_t hyp_words = 0;
    double wer = 0.0; // (S + D + I) / ref_words, unclamped

    std::size_t errors() const noexcept { return substitutions + deletions + insertions; }
    bool operator==(const WerResult&) const = default;
};

/// Applied identically to reference and hypothesis: case fold, punctuation
/// strip, orthographic canonicalization, repetition collapse, whitespace
/// split. `lex` is required only for canonicalization.
std::vector<std::string> normalize_words(std::string_view text, const NormalizationOptions& opts,
                                         const lexicon::Lexicon* lex);

/// Minimum edit distance alignment with unit costs. Throws ValidationError
/// when the reference is empty.
WerResult align_words(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

WerResult wer(std::string_view reference, std::string_view hypothesis, const NormalizationOptions& opts,
              const lexicon::Lexicon* lex);

struct WerPair {
    std::string id;
    std::string reference;
    std::string hypothesis;
};

/// Pairs are scored in parallel; results are in input order.
std::vector<WerResult> wer_batch(const std::vector<WerPair>& pairs, const NormalizationOptions& opts,
                                 const lexicon::Lexicon* lex);
std::vector<WerResult> wer_batch_serial(const std::vector<WerPair>& pairs, const NormalizationOptions& opts,
                                        const lexicon::Lexicon* lex);

/// Corpus-level rate: summed errors over summed reference words.
WerResult aggregate(const std::vector<WerResult>& rows);

// ---------------------------------------------------------------------------
// Field accuracy

struct Tally {
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy() const noexcept { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
    bool operator==(const Tally&) const = default;
};

struct FieldAccuracyResult {
    std::size_t correct = 0;
    std::size_t total = 0;
    std::map<emr::SectionKind, Tally> per_section;

    double accuracy() const noexcept { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
    bool operator==(const FieldAccuracyResult&) const = default;
};

/// Counts canonically equal fields. Throws ValidationError when the
/// documents use different schema versions.
FieldAccuracyResult field_accuracy(const emr::Document& system, const emr::Document& truth, const emr::Schema& schema);

struct DocumentPair {
    std::string id;
    emr::Document system;
    emr::Document truth;
};

std::vector<FieldAccuracyResult> field_accuracy_batch(const std::vector<DocumentPair>& pairs, const emr::Schema& schema);
std::vector<FieldAccuracyResult> field_accuracy_batch_serial(const std::vector<DocumentPair>& pairs,
                                                             const emr::Schema& schema);

FieldAccuracyResult combine(const std::vector<FieldAccuracyResult>& results);

// ---------------------------------------------------------------------------
// Error categorization

enum class ErrorCategory { NoActionNeeded, EasilyIdentifiableAndCorrectable, UnidentifiableWithoutGroundTruth };

inline constexpr ErrorCategory kAllCategories[] = {ErrorCategory::NoActionNeeded,
                                                   ErrorCategory::EasilyIdentifiableAndCorrectable,
                                                   ErrorCategory::UnidentifiableWithoutGroundTruth};

/// "no_action_needed", "easily_identifiable_and_correctable",
/// "unidentifiable_without_ground_truth".
std::string_view to_string(ErrorCategory c) noexcept;
std::string_view display_name(ErrorCategory c) noexcept;
std::optional<ErrorCategory> category_from_string(std::string_view s) noexcept;

struct CategoryLabel {
    std::string field_id;
    ErrorCategory category = ErrorCategory::NoActionNeeded;
    std::string annotator;
    bool operator==(const CategoryLabel&) const = default;
};

struct ErrorCategoryTally {
    std::map<ErrorCategory, std::size_t> counts; // all three keys present
    std::vector<CategoryLabel> labels;
    std::size_t total_fields = 0;
    std::size_t unequal_fields = 0;

    /// Share of all fields, in percent.
    double percent(ErrorCategory c) const noexcept;
};

/// Throws ValidationError for labels on unknown or equal fields, and for a
/// second label on the same field by the same annotator.
ErrorCategoryTally record_categorization(const std::vector<emr::FieldDiff>& diffs,
                                         const std::vector<CategoryLabel>& labels);

// ---------------------------------------------------------------------------
// Red-flag ratings

struct FlagRating {
    std::string flag_id;
    std::string rater;
    bool medically_accurate = false;
    bool patient_relevant = false;
    bool operator==(const FlagRating&) const = default;
};

struct RatingAggregate {
    std::size_t rated = 0;
    std::optional<double> accuracy_pct; // nullopt: no data
    std::optional<double> relevance_pct;
    bool operator==(const RatingAggregate&) const = default;
};

struct RedFlagRatingReport {
    std::size_t total_flags = 0;
    RatingAggregate pooled;
    std::map<std::string, RatingAggregate> per_rater;
    std::vector<std::string> unrated;
};

/// Throws ValidationError when a rating names a flag not in `flag_ids`.
RedFlagRatingReport rate_redflags(const std::vector<std::string>& flag_ids, const std::vector<FlagRating>& ratings);

// ---------------------------------------------------------------------------
// Cross-model comparison

struct ModelRun {
    std::string backend_id;
    std::map<std::string, FieldAccuracyResult> per_patient;
};

struct CrossModelRow {
    std::string backend_id;
    FieldAccuracyResult pooled;
    bool operator==(const CrossModelRow&) const = default;
};

/// Rows sorted by backend id. Throws ValidationError when runs cover
/// different patient sets or duplicate a backend.
std::vector<CrossModelRow> cross_model_report(const std::vector<ModelRun>& runs);

// ---------------------------------------------------------------------------
// Report emitters

std::string format_percent(double fraction); // 0.9623 -> "96.2%"

std::string wer_table(const std::vector<WerPair>& pairs, const std::vector<WerResult>& rows,
                      const NormalizationOptions& opts);
Json wer_json(const std::vector<WerPair>& pairs, const std::vector<WerResult>& rows, const NormalizationOptions& opts);

std::string accuracy_table(const std::vector<std::string>& ids, const std::vector<FieldAccuracyResult>& rows);
Json accuracy_json(const std::vector<std::string>& ids, const std::vector<FieldAccuracyResult>& rows);

std::string categorization_table(const ErrorCategoryTally& tally);
Json categorization_json(const ErrorCategoryTally& tally);

std::string ratings_table(const RedFlagRatingReport& r);
Json ratings_json(const RedFlagRatingReport& r);

/// Section rows with total field counts, one accuracy column per backend,
/// and an overall row.
std::string cross_model_table(const std::vector<CrossModelRow>& rows);
Json cross_model_json(const std::vector<CrossModelRow>& rows);

// ---------------------------------------------------------------------------
// Corpus bundles
//
//   <corpus>/patients/<id>/reference.txt, hypothesis.txt, system_emr.json,
//                          truth_emr.json, flags.json, ratings.json,
//                          categories.json
//   <corpus>/runs/<backend>/<id>/system_emr.json

std::vector<std::string> patient_ids(const std::string& corpus_dir);
std::vector<WerPair> load_wer_pairs(const std::string& corpus_dir);
std::vector<DocumentPair> load_document_pairs(const std::string& corpus_dir, const emr::Schema& schema);
std::vector<CategoryLabel> load_labels(const std::string& corpus_dir, const std::string& patient_id);
/// Flag ids are prefixed "<patient>/" to keep them unique across patients.
std::pair<std::vector<std::string>, std::vector<FlagRating>> load_flag_ratings(const std::string& corpus_dir);
std::vector<ModelRun> load_model_runs(const std::string& corpus_dir, const emr::Schema& schema);
/// Diffs and labels of every patient, field ids prefixed "<patient>/".
ErrorCategoryTally categorize_corpus(const std::string& corpus_dir, const emr::Schema& schema);

} // namespace vemr::eval
