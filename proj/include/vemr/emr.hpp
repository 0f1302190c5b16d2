#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace vemr::emr {

// ---------------------------------------------------------------------------
// Sections

enum class SectionKind {
    PersonalMedicalHistory,
    FamilyHistory,
    SocioEconomicHistory,
    PastPregnancy,
    PresentPregnancy,
    ProposedPlan,
};

inline constexpr std::array<SectionKind, 6> kAllSections = {
    SectionKind::PersonalMedicalHistory, SectionKind::FamilyHistory,
    SectionKind::SocioEconomicHistory,   SectionKind::PastPregnancy,
    SectionKind::PresentPregnancy,       SectionKind::ProposedPlan,
};

/// Wire identifier, e.g. "present_pregnancy".
std::string_view to_string(SectionKind s) noexcept;
std::optional<SectionKind> section_from_string(std::string_view s) noexcept;
std::string_view display_name(SectionKind s) noexcept;
inline std::size_t ordinal(SectionKind s) noexcept { return static_cast<std::size_t>(s); }

// ---------------------------------------------------------------------------
// Field values

enum class Unit { Kg, Cm, MmHg, GPerDl, MgPerDl, Percent, Weeks, Years, KgPerM2 };

std::string_view to_string(Unit u) noexcept;
std::optional<Unit> unit_from_string(std::string_view s) noexcept;

/// Urine dipstick scale, ordered negative < trace < 1+ < ... < 4+.
enum class DipstickGrade { Negative, Trace, Plus1, Plus2, Plus3, Plus4 };

std::string_view to_string(DipstickGrade g) noexcept;
/// Accepts wire names ("plus1") and clinical notation ("1+", "nil", "trace").
std::optional<DipstickGrade> grade_from_string(std::string_view s) noexcept;

struct NoInformation {
    bool operator==(const NoInformation&) const = default;
};
struct Affirmed {
    std::optional<std::string> detail;
    bool operator==(const Affirmed&) const = default;
};
struct Denied {
    bool operator==(const Denied&) const = default;
};
struct Text {
    std::string text;
    bool operator==(const Text&) const = default;
};
struct Numeric {
    double value = 0.0;
    Unit unit = Unit::Kg;
    bool operator==(const Numeric&) const = default;
};
struct Date {
    std::chrono::year_month_day date;
    bool operator==(const Date&) const = default;
};
struct Ordinal {
    DipstickGrade grade = DipstickGrade::Negative;
    bool operator==(const Ordinal&) const = default;
};

using FieldValue = std::variant<NoInformation, Affirmed, Denied, Text, Numeric, Date, Ordinal>;

/// Expected value family of a field. NoInformation is admissible for every kind.
enum class FieldKind { Boolean, Text, Numeric, Date, Ordinal };

std::string_view to_string(FieldKind k) noexcept;
std::optional<FieldKind> kind_from_string(std::string_view s) noexcept;

inline bool is_no_information(const FieldValue& v) noexcept {
    return std::holds_alternative<NoInformation>(v);
}

/// Equality after case-folding and trimming text payloads. No fuzzy matching.
bool canonically_equal(const FieldValue& a, const FieldValue& b);

/// Human-readable rendering ("Yes", "No", "No Info", "36 cm", "plus1", ...).
std::string display(const FieldValue& v);

std::string format_date(const std::chrono::year_month_day& d);
std::optional<std::chrono::year_month_day> parse_date(std::string_view iso) noexcept;

// ---------------------------------------------------------------------------
// Schema

struct FieldSpec {
    std::string id;
    SectionKind section = SectionKind::PersonalMedicalHistory;
    std::string label;
    std::string group; // sub-heading inside the section, may be empty
    FieldKind kind = FieldKind::Boolean;
    std::optional<Unit> unit; // set iff kind == Numeric
    bool required_for_flagging = false;
    bool clinically_critical = false;
};

struct SectionSpec {
    SectionKind kind;
    std::string label;
    bool extensible = false;
    std::vector<FieldSpec> fields;
};

/// Versioned field catalogue. Loaded from data, never hard-coded.
class Schema {
public:
    Schema() = default;
    Schema(std::string version, std::vector<SectionSpec> sections);

    const std::string& version() const noexcept { return version_; }
    const std::vector<SectionSpec>& sections() const noexcept { return sections_; }
    const SectionSpec& section(SectionKind k) const;

    /// All specs in schema order (section order, then listing order).
    const std::vector<FieldSpec>& specs() const noexcept { return flat_; }
    const FieldSpec* find(std::string_view id) const noexcept;
    std::size_t size() const noexcept { return flat_.size(); }

    /// Throws ValidationError if the schema breaks its own invariants.
    void self_check() const;

private:
    std::string version_;
    std::vector<SectionSpec> sections_;
    std::vector<FieldSpec> flat_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

Schema load_schema(const std::string& path);
Schema parse_schema(std::string_view json_text);

// ---------------------------------------------------------------------------
// Documents

enum class Provenance { LlmGenerated, ClinicianEdited, Deterministic };

std::string_view to_string(Provenance p) noexcept;
std::optional<Provenance> provenance_from_string(std::string_view s) noexcept;

struct Document {
    std::string schema_version;
    std::map<std::string, FieldValue> values;
    std::map<SectionKind, std::string> additional_info;
    std::map<std::string, Provenance> provenance;

    bool operator==(const Document&) const = default;

    const FieldValue& value(const std::string& id) const;
};

struct VitalSigns {
    std::optional<double> height_cm;
    std::optional<double> weight_kg;
    std::optional<double> systolic_mmHg;
    std::optional<double> diastolic_mmHg;
    std::optional<double> temperature_C;
    std::optional<double> pulse_bpm;

    bool operator==(const VitalSigns&) const = default;

    static constexpr std::size_t kCount = 6;
};

/// Violations of the VitalSigns invariants; empty when valid.
std::vector<std::string> validate_vitals(const VitalSigns& v);

struct Violation {
    std::string field_id; // empty for document-level problems
    std::string message;
    bool operator==(const Violation&) const = default;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const noexcept { return violations.empty(); }
};

struct FieldDiff {
    std::string field_id;
    FieldValue system_value;
    FieldValue truth_value;
    bool equal = false;
};

using Edit = std::pair<std::string, FieldValue>;

bool matches_kind(const FieldValue& v, const FieldSpec& spec) noexcept;

Document blank_document(const Schema& schema);
ValidationReport validate_document(const Document& doc, const Schema& schema);

/// One FieldDiff per spec in schema order. Throws ValidationError when the
/// documents carry different schema versions.
std::vector<FieldDiff> diff_documents(const Document& system, const Document& truth,
                                      const Schema& schema);

/// Applies edits in order (last write wins) and marks each edited field
/// clinician-edited. Throws ValidationError on unknown ids or kind mismatch.
Document apply_edits(const Document& doc, const std::vector<Edit>& edits, const Schema& schema);

/// Canonical UTF-8 wire form. Key order follows the schema; byte-stable.
std::string serialize(const Document& doc, const Schema& schema);

/// Inverse of serialize. Throws ParseError naming the first offending path,
/// or the section being read when the text is truncated.
Document parse(std::string_view text, const Schema& schema);

} // namespace vemr::emr
