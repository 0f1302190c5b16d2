#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vemr/emr.hpp"
#include "vemr/json.hpp"

namespace vemr::rules {

// ---------------------------------------------------------------------------
// Calculators

/// weight / height_m^2, rounded half-up to one decimal. Throws
/// ValidationError for non-positive weight or height outside 50..250 cm.
double compute_bmi(double weight_kg, double height_cm);

struct GestationResult {
    int weeks = 0;
    int days = 0; // 0..6
    std::chrono::year_month_day edd;
    bool implausible = false; // more than 320 days since LMP
    bool operator==(const GestationResult&) const = default;
};

/// Completed weeks and days since LMP; EDD = LMP + 280 days. Throws
/// ValidationError when `lmp` is after `on`.
GestationResult gestation(std::chrono::year_month_day lmp, std::chrono::year_month_day on);

/// "10 weeks 3 days"
std::string format_gestation(const GestationResult& g);

// ---------------------------------------------------------------------------
// Threshold rules

enum class Comparator { Greater, GreaterEqual, Less, LessEqual };

std::string_view to_string(Comparator c) noexcept; // ">", ">=", "<", "<="
std::optional<Comparator> comparator_from_string(std::string_view s) noexcept;
bool compare(double value, Comparator c, double threshold) noexcept;

/// One measured parameter tested against a threshold. Dipstick grades are
/// compared by ordinal (negative=0 ... plus4=5).
struct Condition {
    std::string parameter; // EMR field id, e.g. "bp_systolic"
    Comparator comparator = Comparator::Greater;
    double threshold = 0.0;
};

enum class Combine { Any, All };

struct Rule {
    std::string id; // e.g. "hypertension"
    std::string title;
    std::vector<Condition> conditions;
    Combine combine = Combine::Any;
};

struct ThresholdRuleSet {
    std::string version;
    std::vector<Rule> rules;

    const Rule* find(std::string_view id) const noexcept;
    /// Throws ValidationError: thresholds must be strictly positive, ids unique.
    void validate() const;
};

/// The built-in antenatal thresholds: BP > 140/90 (either component),
/// BMI > 30, Hb < 11, RBG >= 160, HbA1c >= 7, albumin >= 1+, glucose >= 2+.
ThresholdRuleSet default_rules();

ThresholdRuleSet parse_rules(std::string_view json_text);
ThresholdRuleSet load_rules(const std::string& path);
Json rules_to_json(const ThresholdRuleSet& rules);

/// Measured values keyed by EMR field id. Dipstick grades stored as ordinals.
using Measurements = std::map<std::string, double, std::less<>>;

/// Collects rule inputs from the document's numeric/ordinal fields. Vital
/// signs fill blood pressure when the document has none; BMI is computed from
/// height and weight when absent and both are known.
Measurements collect_measurements(const emr::Document& doc, const emr::VitalSigns& vitals);

// ---------------------------------------------------------------------------
// Flags

enum class FlagCategory { Critical, Missing };
enum class FlagSource { Deterministic, Llm, Merged };
enum class Severity { Red, Yellow };

std::string_view to_string(FlagCategory c) noexcept;
std::string_view to_string(FlagSource s) noexcept;
std::string_view to_string(Severity s) noexcept;
std::optional<FlagCategory> flag_category_from_string(std::string_view s) noexcept;
std::optional<FlagSource> flag_source_from_string(std::string_view s) noexcept;

inline Severity severity_of(FlagCategory c) noexcept {
    return c == FlagCategory::Critical ? Severity::Red : Severity::Yellow;
}

struct RedFlag {
    std::string id; // unique within a report
    FlagCategory category = FlagCategory::Critical;
    std::string rule_id;
    std::string title;
    std::string detail;
    FlagSource source = FlagSource::Deterministic;
    std::vector<std::string> citations; // guideline snippet ids

    Severity severity() const noexcept { return severity_of(category); }
    bool operator==(const RedFlag&) const = default;
};

/// Narrative candidate produced by a language-model backend.
struct NarrativeFlag {
    FlagCategory category = FlagCategory::Critical;
    std::string title;
    std::string body;
    std::optional<std::string> rule_id;
    std::vector<std::string> citations;
    bool operator==(const NarrativeFlag&) const = default;
};

struct RedFlagReport {
    std::vector<RedFlag> flags;
    std::string doc_ref; // SHA-256 of the serialized document
    std::string rules_version;

    std::vector<std::string> critical_ids() const;
    bool operator==(const RedFlagReport&) const = default;
};

/// One critical flag per triggered rule, in rule-set order. Absent
/// measurements never trigger.
std::vector<RedFlag> evaluate_thresholds(const Measurements& m, const ThresholdRuleSet& rules);

/// Convenience form: vitals supply blood pressure, `labs` the laboratory
/// values, `bmi` the body mass index when known.
std::vector<RedFlag> evaluate_thresholds(const emr::VitalSigns& vitals, const Measurements& labs,
                                         std::optional<double> bmi, const ThresholdRuleSet& rules);

/// One missing-information flag per required_for_flagging field holding
/// NoInformation, then one per absent vital sign.
std::vector<RedFlag> detect_missing(const emr::Document& doc, const emr::Schema& schema,
                                    const emr::VitalSigns& vitals = {});

/// Deterministic flags first, unchanged apart from merged narrative detail;
/// candidates naming a deterministic rule_id merge into it, others are
/// appended as "llm.N".
RedFlagReport merge_reports(const std::vector<RedFlag>& deterministic,
                            const std::vector<NarrativeFlag>& narrative);

Json flag_to_json(const RedFlag& f);
RedFlag flag_from_json(const Json& j);
Json narrative_to_json(const NarrativeFlag& f);
NarrativeFlag narrative_from_json(const Json& j);
Json report_to_json(const RedFlagReport& r);
RedFlagReport report_from_json(const Json& j);

} // namespace vemr::rules
