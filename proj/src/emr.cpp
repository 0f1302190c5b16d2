#include "vemr/emr.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "vemr/emr_json.hpp"
#include "vemr/error.hpp"
#include "vemr/text.hpp"

namespace vemr::emr {

namespace {

struct SectionName {
    SectionKind kind;
    std::string_view wire;
    std::string_view display;
};

constexpr std::array<SectionName, 6> kSectionNames = {{
    {SectionKind::PersonalMedicalHistory, "personal_medical_history", "Personal and Medical History"},
    {SectionKind::FamilyHistory, "family_history", "Family History"},
    {SectionKind::SocioEconomicHistory, "socio_economic_history", "Socio-Economic History"},
    {SectionKind::PastPregnancy, "past_pregnancy", "Past Pregnancy"},
    {SectionKind::PresentPregnancy, "present_pregnancy", "Present Pregnancy"},
    {SectionKind::ProposedPlan, "proposed_plan", "Proposed Plan"},
}};

constexpr std::array<std::pair<Unit, std::string_view>, 9> kUnits = {{
    {Unit::Kg, "kg"},
    {Unit::Cm, "cm"},
    {Unit::MmHg, "mmHg"},
    {Unit::GPerDl, "g/dL"},
    {Unit::MgPerDl, "mg/dL"},
    {Unit::Percent, "percent"},
    {Unit::Weeks, "weeks"},
    {Unit::Years, "years"},
    {Unit::KgPerM2, "kg/m2"},
}};

constexpr std::array<std::pair<DipstickGrade, std::string_view>, 6> kGrades = {{
    {DipstickGrade::Negative, "negative"},
    {DipstickGrade::Trace, "trace"},
    {DipstickGrade::Plus1, "plus1"},
    {DipstickGrade::Plus2, "plus2"},
    {DipstickGrade::Plus3, "plus3"},
    {DipstickGrade::Plus4, "plus4"},
}};

constexpr std::array<std::pair<FieldKind, std::string_view>, 5> kKinds = {{
    {FieldKind::Boolean, "boolean"},
    {FieldKind::Text, "text"},
    {FieldKind::Numeric, "numeric"},
    {FieldKind::Date, "date"},
    {FieldKind::Ordinal, "ordinal"},
}};

constexpr std::array<std::pair<Provenance, std::string_view>, 3> kProvenance = {{
    {Provenance::LlmGenerated, "llm-generated"},
    {Provenance::ClinicianEdited, "clinician-edited"},
    {Provenance::Deterministic, "deterministic"},
}};

template <typename E, std::size_t N>
std::string_view lookup_name(const std::array<std::pair<E, std::string_view>, N>& table, E e) {
    for (const auto& [k, v] : table)
        if (k == e) return v;
    return "?";
}

template <typename E, std::size_t N>
std::optional<E> lookup_value(const std::array<std::pair<E, std::string_view>, N>& table,
                              std::string_view s) {
    for (const auto& [k, v] : table)
        if (v == s) return k;
    return std::nullopt;
}

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

} // namespace

std::string_view to_string(SectionKind s) noexcept { return kSectionNames[ordinal(s)].wire; }
std::string_view display_name(SectionKind s) noexcept { return kSectionNames[ordinal(s)].display; }

std::optional<SectionKind> section_from_string(std::string_view s) noexcept {
    for (const auto& n : kSectionNames)
        if (n.wire == s) return n.kind;
    return std::nullopt;
}

std::string_view to_string(Unit u) noexcept { return lookup_name(kUnits, u); }
std::optional<Unit> unit_from_string(std::string_view s) noexcept { return lookup_value(kUnits, s); }

std::string_view to_string(DipstickGrade g) noexcept { return lookup_name(kGrades, g); }

std::optional<DipstickGrade> grade_from_string(std::string_view s) noexcept {
    if (auto g = lookup_value(kGrades, s)) return g;
    auto c = text::canonical(s);
    if (c == "nil" || c == "neg" || c == "negative" || c == "-") return DipstickGrade::Negative;
    if (c == "trace" || c == "traces") return DipstickGrade::Trace;
    if (c == "1+" || c == "+" || c == "plus1" || c == "+1") return DipstickGrade::Plus1;
    if (c == "2+" || c == "++" || c == "plus2" || c == "+2") return DipstickGrade::Plus2;
    if (c == "3+" || c == "+++" || c == "plus3" || c == "+3") return DipstickGrade::Plus3;
    if (c == "4+" || c == "++++" || c == "plus4" || c == "+4") return DipstickGrade::Plus4;
    return std::nullopt;
}

std::string_view to_string(FieldKind k) noexcept { return lookup_name(kKinds, k); }
std::optional<FieldKind> kind_from_string(std::string_view s) noexcept { return lookup_value(kKinds, s); }

std::string_view to_string(Provenance p) noexcept { return lookup_name(kProvenance, p); }
std::optional<Provenance> provenance_from_string(std::string_view s) noexcept {
    return lookup_value(kProvenance, s);
}

std::string format_date(const std::chrono::year_month_day& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
    return buf;
}

std::optional<std::chrono::year_month_day> parse_date(std::string_view iso) noexcept {
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') return std::nullopt;
    auto digits = [&](std::size_t from, std::size_t n, int& out) {
        out = 0;
        for (std::size_t i = from; i < from + n; ++i) {
            if (iso[i] < '0' || iso[i] > '9') return false;
            out = out * 10 + (iso[i] - '0');
        }
        return true;
    };
    int y = 0, m = 0, d = 0;
    if (!digits(0, 4, y) || !digits(5, 2, m) || !digits(8, 2, d)) return std::nullopt;
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                    std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    return ymd;
}

bool canonically_equal(const FieldValue& a, const FieldValue& b) {
    if (a.index() != b.index()) return false;
    return std::visit(
        [&](const auto& lhs) -> bool {
            using T = std::decay_t<decltype(lhs)>;
            const auto& rhs = std::get<T>(b);
            if constexpr (std::is_same_v<T, Text>) {
                return text::canonical(lhs.text) == text::canonical(rhs.text);
            } else if constexpr (std::is_same_v<T, Affirmed>) {
                return text::canonical(lhs.detail.value_or("")) == text::canonical(rhs.detail.value_or(""));
            } else {
                return lhs == rhs;
            }
        },
        a);
}

std::string display(const FieldValue& v) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, NoInformation>) {
                return "No Info";
            } else if constexpr (std::is_same_v<T, Affirmed>) {
                return x.detail ? "Yes (" + *x.detail + ")" : std::string("Yes");
            } else if constexpr (std::is_same_v<T, Denied>) {
                return "No";
            } else if constexpr (std::is_same_v<T, Text>) {
                return x.text;
            } else if constexpr (std::is_same_v<T, Numeric>) {
                return format_number(x.value) + " " + std::string(to_string(x.unit));
            } else if constexpr (std::is_same_v<T, Date>) {
                return format_date(x.date);
            } else {
                return std::string(to_string(x.grade));
            }
        },
        v);
}

// ---------------------------------------------------------------------------
// Schema

Schema::Schema(std::string version, std::vector<SectionSpec> sections)
    : version_(std::move(version)), sections_(std::move(sections)) {
    for (auto& sec : sections_) {
        for (auto& f : sec.fields) {
            f.section = sec.kind;
            index_.emplace(f.id, flat_.size());
            flat_.push_back(f);
        }
    }
}

const SectionSpec& Schema::section(SectionKind k) const {
    for (const auto& s : sections_)
        if (s.kind == k) return s;
    throw NotFoundError("schema has no section " + std::string(to_string(k)));
}

const FieldSpec* Schema::find(std::string_view id) const noexcept {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &flat_[it->second];
}

void Schema::self_check() const {
    if (version_.empty()) throw ValidationError("schema version is empty");
    if (sections_.size() != kAllSections.size())
        throw ValidationError("schema must define exactly six sections");
    for (std::size_t i = 0; i < sections_.size(); ++i) {
        if (sections_[i].kind != kAllSections[i])
            throw ValidationError("section " + std::string(to_string(sections_[i].kind)) +
                                  " out of order");
    }
    std::set<std::string, std::less<>> seen;
    for (const auto& f : flat_) {
        if (f.id.empty()) throw ValidationError("field with empty id");
        if (!seen.insert(f.id).second) throw ValidationError("duplicate field id", f.id);
        if ((f.kind == FieldKind::Numeric) != f.unit.has_value())
            throw ValidationError("numeric fields carry a unit, others do not", f.id);
    }
}

Schema parse_schema(std::string_view json_text) {
    Json j;
    try {
        j = Json::parse(json_text);
    } catch (const Json::parse_error& e) {
        throw ParseError(std::string("schema: ") + e.what(), "schema");
    }
    std::vector<SectionSpec> sections;
    try {
        for (std::size_t si = 0; si < j.at("sections").size(); ++si) {
            const auto& s = j.at("sections")[si];
            auto kind = section_from_string(s.at("kind").get<std::string>());
            if (!kind) throw ParseError("unknown section kind", "sections[" + std::to_string(si) + "].kind");
            SectionSpec sec{*kind, s.value("label", std::string(display_name(*kind))),
                            s.value("extensible", false), {}};
            for (std::size_t fi = 0; fi < s.at("fields").size(); ++fi) {
                const auto& f = s.at("fields")[fi];
                auto path = "sections[" + std::to_string(si) + "].fields[" + std::to_string(fi) + "]";
                FieldSpec spec;
                spec.id = f.at("id").get<std::string>();
                spec.section = *kind;
                spec.label = f.at("label").get<std::string>();
                spec.group = f.value("group", std::string());
                auto k = kind_from_string(f.at("kind").get<std::string>());
                if (!k) throw ParseError("unknown field kind", path + ".kind");
                spec.kind = *k;
                if (f.contains("unit")) {
                    auto u = unit_from_string(f.at("unit").get<std::string>());
                    if (!u) throw ParseError("unit outside the closed set", path + ".unit");
                    spec.unit = *u;
                }
                spec.required_for_flagging = f.value("required_for_flagging", false);
                spec.clinically_critical = f.value("clinically_critical", false);
                sec.fields.push_back(std::move(spec));
            }
            sections.push_back(std::move(sec));
        }
        Schema schema(j.at("version").get<std::string>(), std::move(sections));
        schema.self_check();
        return schema;
    } catch (const Json::exception& e) {
        throw ParseError(std::string("schema: ") + e.what(), "schema");
    }
}

Schema load_schema(const std::string& path) {
    return parse_schema(text::read_file(path));
}

// ---------------------------------------------------------------------------
// Documents

const FieldValue& Document::value(const std::string& id) const {
    auto it = values.find(id);
    if (it == values.end()) throw NotFoundError("document has no field " + id);
    return it->second;
}

std::vector<std::string> validate_vitals(const VitalSigns& v) {
    std::vector<std::string> out;
    auto positive = [&](const std::optional<double>& x, const char* name) {
        if (x && !(*x > 0.0 && std::isfinite(*x))) out.push_back(std::string(name) + " must be positive");
    };
    positive(v.height_cm, "height_cm");
    positive(v.weight_kg, "weight_kg");
    positive(v.systolic_mmHg, "systolic_mmHg");
    positive(v.diastolic_mmHg, "diastolic_mmHg");
    positive(v.temperature_C, "temperature_C");
    positive(v.pulse_bpm, "pulse_bpm");
    if (v.systolic_mmHg && v.diastolic_mmHg && !(*v.systolic_mmHg > *v.diastolic_mmHg))
        out.push_back("systolic must exceed diastolic");
    return out;
}

bool matches_kind(const FieldValue& v, const FieldSpec& spec) noexcept {
    return std::visit(
        [&](const auto& x) -> bool {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, NoInformation>) return true;
            else if constexpr (std::is_same_v<T, Affirmed> || std::is_same_v<T, Denied>)
                return spec.kind == FieldKind::Boolean;
            else if constexpr (std::is_same_v<T, Text>) return spec.kind == FieldKind::Text;
            else if constexpr (std::is_same_v<T, Numeric>)
                return spec.kind == FieldKind::Numeric && spec.unit == x.unit;
            else if constexpr (std::is_same_v<T, Date>) return spec.kind == FieldKind::Date && x.date.ok();
            else return spec.kind == FieldKind::Ordinal;
        },
        v);
}

Document blank_document(const Schema& schema) {
    Document doc;
    doc.schema_version = schema.version();
    for (const auto& spec : schema.specs()) doc.values.emplace(spec.id, NoInformation{});
    for (auto s : kAllSections) doc.additional_info.emplace(s, std::string());
    return doc;
}

ValidationReport validate_document(const Document& doc, const Schema& schema) {
    ValidationReport report;
    auto add = [&](std::string id, std::string msg) {
        report.violations.push_back({std::move(id), std::move(msg)});
    };
    if (doc.schema_version != schema.version())
        add("", "schema version mismatch: document " + doc.schema_version + ", schema " + schema.version());
    for (const auto& spec : schema.specs()) {
        auto it = doc.values.find(spec.id);
        if (it == doc.values.end()) {
            add(spec.id, "missing field");
            continue;
        }
        if (!matches_kind(it->second, spec)) {
            add(spec.id, "value kind does not match " + std::string(to_string(spec.kind)));
        }
        if (!is_no_information(it->second) && !doc.provenance.contains(spec.id)) {
            add(spec.id, "missing provenance");
        }
    }
    for (const auto& [id, _] : doc.values) {
        if (!schema.find(id)) add(id, "field not in schema");
    }
    return report;
}

std::vector<FieldDiff> diff_documents(const Document& system, const Document& truth, const Schema& schema) {
    if (system.schema_version != truth.schema_version)
        throw ValidationError("cannot diff documents of schema versions " + system.schema_version +
                              " and " + truth.schema_version);
    std::vector<FieldDiff> out;
    out.reserve(schema.size());
    auto get = [](const Document& d, const std::string& id) -> FieldValue {
        auto it = d.values.find(id);
        return it == d.values.end() ? FieldValue{NoInformation{}} : it->second;
    };
    for (const auto& spec : schema.specs()) {
        FieldDiff d{spec.id, get(system, spec.id), get(truth, spec.id), false};
        d.equal = canonically_equal(d.system_value, d.truth_value);
        out.push_back(std::move(d));
    }
    return out;
}

Document apply_edits(const Document& doc, const std::vector<Edit>& edits, const Schema& schema) {
    Document out = doc;
    for (const auto& [id, value] : edits) {
        const auto* spec = schema.find(id);
        if (!spec) throw ValidationError("unknown field id " + id, id);
        if (!matches_kind(value, *spec))
            throw ValidationError("value kind does not match " + std::string(to_string(spec->kind)), id);
        out.values[id] = value;
        out.provenance[id] = Provenance::ClinicianEdited;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Wire form

Json value_to_json(const FieldValue& v) {
    return std::visit(
        [](const auto& x) -> Json {
            using T = std::decay_t<decltype(x)>;
            Json j;
            if constexpr (std::is_same_v<T, NoInformation>) {
                j["type"] = "no_info";
            } else if constexpr (std::is_same_v<T, Affirmed>) {
                j["type"] = "affirmed";
                if (x.detail) j["detail"] = *x.detail;
            } else if constexpr (std::is_same_v<T, Denied>) {
                j["type"] = "denied";
            } else if constexpr (std::is_same_v<T, Text>) {
                j["type"] = "text";
                j["text"] = x.text;
            } else if constexpr (std::is_same_v<T, Numeric>) {
                j["type"] = "numeric";
                j["value"] = x.value;
                j["unit"] = std::string(to_string(x.unit));
            } else if constexpr (std::is_same_v<T, Date>) {
                j["type"] = "date";
                j["date"] = format_date(x.date);
            } else {
                j["type"] = "ordinal";
                j["grade"] = std::string(to_string(x.grade));
            }
            return j;
        },
        v);
}

FieldValue value_from_json(const Json& j, const std::string& path) {
    if (!j.is_object()) throw ParseError("value must be an object", path);
    auto str = [&](const char* key) -> std::string {
        auto it = j.find(key);
        if (it == j.end() || !it->is_string()) throw ParseError("expected string", path + "." + key);
        return it->get<std::string>();
    };
    const auto type = str("type");
    if (type == "no_info") return NoInformation{};
    if (type == "denied") return Denied{};
    if (type == "affirmed") {
        Affirmed a;
        if (j.contains("detail")) a.detail = str("detail");
        return a;
    }
    if (type == "text") return Text{str("text")};
    if (type == "numeric") {
        auto it = j.find("value");
        if (it == j.end() || !it->is_number()) throw ParseError("expected number", path + ".value");
        auto unit = unit_from_string(str("unit"));
        if (!unit) throw ParseError("unit outside the closed set", path + ".unit");
        return Numeric{it->get<double>(), *unit};
    }
    if (type == "date") {
        auto d = parse_date(str("date"));
        if (!d) throw ParseError("invalid calendar date", path + ".date");
        return Date{*d};
    }
    if (type == "ordinal") {
        auto g = grade_from_string(str("grade"));
        if (!g) throw ParseError("unknown dipstick grade", path + ".grade");
        return Ordinal{*g};
    }
    throw ParseError("unknown value type '" + type + "'", path + ".type");
}

Json vitals_to_json(const VitalSigns& v) {
    Json j = Json::object();
    auto put = [&](const char* k, const std::optional<double>& x) {
        if (x) j[k] = *x;
    };
    put("height_cm", v.height_cm);
    put("weight_kg", v.weight_kg);
    put("systolic_mmHg", v.systolic_mmHg);
    put("diastolic_mmHg", v.diastolic_mmHg);
    put("temperature_C", v.temperature_C);
    put("pulse_bpm", v.pulse_bpm);
    return j;
}

VitalSigns vitals_from_json(const Json& j) {
    if (!j.is_object()) throw ParseError("vitals must be an object", "vitals");
    VitalSigns v;
    auto get = [&](const char* k, std::optional<double>& out) {
        auto it = j.find(k);
        if (it == j.end() || it->is_null()) return;
        if (!it->is_number()) throw ParseError("expected number", std::string("vitals.") + k);
        out = it->get<double>();
    };
    get("height_cm", v.height_cm);
    get("weight_kg", v.weight_kg);
    get("systolic_mmHg", v.systolic_mmHg);
    get("diastolic_mmHg", v.diastolic_mmHg);
    get("temperature_C", v.temperature_C);
    get("pulse_bpm", v.pulse_bpm);
    return v;
}

Json document_to_json(const Document& doc, const Schema& schema) {
    Json j;
    j["schema_version"] = doc.schema_version;
    Json sections = Json::array();
    for (const auto& sec : schema.sections()) {
        Json s;
        s["section"] = std::string(to_string(sec.kind));
        Json fields = Json::array();
        for (const auto& spec : sec.fields) {
            auto it = doc.values.find(spec.id);
            if (it == doc.values.end()) continue;
            Json f;
            f["id"] = spec.id;
            f["value"] = value_to_json(it->second);
            if (auto p = doc.provenance.find(spec.id); p != doc.provenance.end())
                f["provenance"] = std::string(to_string(p->second));
            fields.push_back(std::move(f));
        }
        s["fields"] = std::move(fields);
        auto ai = doc.additional_info.find(sec.kind);
        s["additional_information"] = ai == doc.additional_info.end() ? std::string() : ai->second;
        sections.push_back(std::move(s));
    }
    j["sections"] = std::move(sections);
    return j;
}

Document document_from_json(const Json& j, const Schema& schema) {
    if (!j.is_object()) throw ParseError("document must be an object", "document");
    Document doc;
    auto sv = j.find("schema_version");
    if (sv == j.end() || !sv->is_string()) throw ParseError("missing schema_version", "schema_version");
    doc.schema_version = sv->get<std::string>();
    auto secs = j.find("sections");
    if (secs == j.end() || !secs->is_array()) throw ParseError("missing sections", "sections");
    for (std::size_t si = 0; si < secs->size(); ++si) {
        const auto& s = (*secs)[si];
        const auto base = "sections[" + std::to_string(si) + "]";
        if (!s.is_object() || !s.contains("section") || !s["section"].is_string())
            throw ParseError("section entry lacks a name", base + ".section");
        auto kind = section_from_string(s["section"].get<std::string>());
        if (!kind) throw ParseError("unknown section", base + ".section");
        auto fields = s.find("fields");
        if (fields == s.end() || !fields->is_array()) throw ParseError("missing fields", base + ".fields");
        for (std::size_t fi = 0; fi < fields->size(); ++fi) {
            const auto& f = (*fields)[fi];
            const auto fpath = base + ".fields[" + std::to_string(fi) + "]";
            if (!f.is_object() || !f.contains("id") || !f["id"].is_string())
                throw ParseError("field entry lacks an id", fpath + ".id");
            auto id = f["id"].get<std::string>();
            const auto* spec = schema.find(id);
            if (!spec || spec->section != *kind) throw ParseError("field '" + id + "' not in section", fpath + ".id");
            if (!f.contains("value")) throw ParseError("missing value", fpath + ".value");
            doc.values[id] = value_from_json(f["value"], fpath + ".value");
            if (f.contains("provenance")) {
                auto p = f["provenance"].is_string() ? provenance_from_string(f["provenance"].get<std::string>())
                                                     : std::nullopt;
                if (!p) throw ParseError("unknown provenance", fpath + ".provenance");
                doc.provenance[id] = *p;
            }
        }
        auto ai = s.find("additional_information");
        if (ai == s.end() || !ai->is_string())
            throw ParseError("missing additional_information", base + ".additional_information");
        doc.additional_info[*kind] = ai->get<std::string>();
    }
    return doc;
}

std::string serialize(const Document& doc, const Schema& schema) {
    return document_to_json(doc, schema).dump(2) + "\n";
}

Document parse(std::string_view text, const Schema& schema) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        // Name the section whose body was being read when input ran out.
        std::string_view head = text.substr(0, std::min<std::size_t>(e.byte, text.size()));
        static constexpr std::string_view marker = "\"section\": \"";
        auto pos = head.rfind(marker);
        std::string where = "document";
        if (pos != std::string_view::npos) {
            auto start = pos + marker.size();
            auto end = head.find('"', start);
            if (end != std::string_view::npos) where = "section " + std::string(head.substr(start, end - start));
        }
        throw ParseError("malformed or incomplete document", where);
    }
    return document_from_json(j, schema);
}

} // namespace vemr::emr
