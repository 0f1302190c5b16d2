#include "vemr/rules.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "vemr/digest.hpp"
#include "vemr/error.hpp"
#include "vemr/text.hpp"

namespace vemr::rules {

using namespace std::chrono;

double compute_bmi(double weight_kg, double height_cm) {
    if (!(weight_kg > 0.0)) throw ValidationError("weight must be positive", "weight_kg");
    if (!(height_cm >= 50.0 && height_cm <= 250.0))
        throw ValidationError("implausible height " + std::to_string(height_cm) + " cm (expected 50-250)",
                              "height_cm");
    const double m = height_cm / 100.0;
    return std::floor(weight_kg / (m * m) * 10.0 + 0.5) / 10.0;
}

GestationResult gestation(year_month_day lmp, year_month_day on) {
    if (!lmp.ok() || !on.ok()) throw ValidationError("invalid calendar date", "lmp");
    const auto d = (sys_days(on) - sys_days(lmp)).count();
    if (d < 0) throw ValidationError("LMP " + emr::format_date(lmp) + " is after " + emr::format_date(on), "lmp");
    GestationResult g;
    g.weeks = static_cast<int>(d / 7);
    g.days = static_cast<int>(d % 7);
    g.edd = year_month_day(sys_days(lmp) + days(280));
    g.implausible = d > 320;
    return g;
}

std::string format_gestation(const GestationResult& g) {
    return std::to_string(g.weeks) + (g.weeks == 1 ? " week " : " weeks ") + std::to_string(g.days) +
           (g.days == 1 ? " day" : " days");
}

// ---------------------------------------------------------------------------

std::string_view to_string(Comparator c) noexcept {
    switch (c) {
    case Comparator::Greater: return ">";
    case Comparator::GreaterEqual: return ">=";
    case Comparator::Less: return "<";
    case Comparator::LessEqual: return "<=";
    }
    return "?";
}

std::optional<Comparator> comparator_from_string(std::string_view s) noexcept {
    if (s == ">") return Comparator::Greater;
    if (s == ">=") return Comparator::GreaterEqual;
    if (s == "<") return Comparator::Less;
    if (s == "<=") return Comparator::LessEqual;
    return std::nullopt;
}

bool compare(double v, Comparator c, double t) noexcept {
    switch (c) {
    case Comparator::Greater: return v > t;
    case Comparator::GreaterEqual: return v >= t;
    case Comparator::Less: return v < t;
    case Comparator::LessEqual: return v <= t;
    }
    return false;
}

const Rule* ThresholdRuleSet::find(std::string_view id) const noexcept {
    for (const auto& r : rules)
        if (r.id == id) return &r;
    return nullptr;
}

void ThresholdRuleSet::validate() const {
    if (version.empty()) throw ValidationError("rule set has no version", "version");
    std::set<std::string> seen;
    for (const auto& r : rules) {
        if (r.id.empty()) throw ValidationError("rule without id", "rules");
        if (!seen.insert(r.id).second) throw ValidationError("duplicate rule id " + r.id, r.id);
        if (r.conditions.empty()) throw ValidationError("rule " + r.id + " has no conditions", r.id);
        for (const auto& c : r.conditions)
            if (!(c.threshold > 0.0))
                throw ValidationError("rule " + r.id + ": threshold for " + c.parameter + " must be positive", r.id);
    }
}

namespace {

double grade_value(emr::DipstickGrade g) { return static_cast<double>(g); }

} // namespace

ThresholdRuleSet default_rules() {
    using emr::DipstickGrade;
    return {"antenatal-thresholds/1",
            {
                {"hypertension",
                 "Hypertension",
                 {{"bp_systolic", Comparator::Greater, 140.0}, {"bp_diastolic", Comparator::Greater, 90.0}},
                 Combine::Any},
                {"obesity", "Obesity", {{"bmi", Comparator::Greater, 30.0}}, Combine::Any},
                {"anemia", "Anemia", {{"hemoglobin", Comparator::Less, 11.0}}, Combine::Any},
                {"hyperglycemia", "Raised random blood glucose",
                 {{"random_blood_glucose", Comparator::GreaterEqual, 160.0}}, Combine::Any},
                {"elevated_hba1c", "Raised HbA1c", {{"hba1c", Comparator::GreaterEqual, 7.0}}, Combine::Any},
                {"proteinuria", "Proteinuria",
                 {{"urine_albumin", Comparator::GreaterEqual, grade_value(DipstickGrade::Plus1)}}, Combine::Any},
                {"glycosuria", "Glycosuria",
                 {{"urine_glucose", Comparator::GreaterEqual, grade_value(DipstickGrade::Plus2)}}, Combine::Any},
            }};
}

ThresholdRuleSet parse_rules(std::string_view json_text) {
    Json j;
    try {
        j = Json::parse(json_text);
    } catch (const Json::parse_error& e) {
        throw ParseError(std::string("rule set: ") + e.what(), "");
    }
    ThresholdRuleSet rs;
    try {
        rs.version = j.at("version").get<std::string>();
        std::size_t ri = 0;
        for (const auto& r : j.at("rules")) {
            const std::string path = "rules[" + std::to_string(ri++) + "]";
            Rule rule;
            rule.id = r.at("id").get<std::string>();
            rule.title = r.value("title", rule.id);
            const auto combine = r.value("combine", std::string("any"));
            if (combine == "any") rule.combine = Combine::Any;
            else if (combine == "all") rule.combine = Combine::All;
            else throw ParseError("unknown combine '" + combine + "'", path + ".combine");
            std::size_t ci = 0;
            for (const auto& c : r.at("conditions")) {
                const std::string cpath = path + ".conditions[" + std::to_string(ci++) + "]";
                Condition cond;
                cond.parameter = c.at("parameter").get<std::string>();
                auto cmp = comparator_from_string(c.at("comparator").get<std::string>());
                if (!cmp) throw ParseError("unknown comparator", cpath + ".comparator");
                cond.comparator = *cmp;
                if (c.contains("grade")) {
                    auto g = emr::grade_from_string(c["grade"].get<std::string>());
                    if (!g) throw ParseError("unknown dipstick grade", cpath + ".grade");
                    cond.threshold = grade_value(*g);
                } else {
                    cond.threshold = c.at("threshold").get<double>();
                }
                rule.conditions.push_back(std::move(cond));
            }
            rs.rules.push_back(std::move(rule));
        }
    } catch (const Json::exception& e) {
        throw ParseError(std::string("rule set: ") + e.what(), "");
    }
    rs.validate();
    return rs;
}

ThresholdRuleSet load_rules(const std::string& path) { return parse_rules(text::read_file(path)); }

Json rules_to_json(const ThresholdRuleSet& rs) {
    Json rules = Json::array();
    for (const auto& r : rs.rules) {
        Json conds = Json::array();
        for (const auto& c : r.conditions) {
            Json cj{{"parameter", c.parameter}, {"comparator", to_string(c.comparator)}};
            if (c.parameter == "urine_albumin" || c.parameter == "urine_glucose")
                cj["grade"] = emr::to_string(static_cast<emr::DipstickGrade>(static_cast<int>(c.threshold)));
            else
                cj["threshold"] = c.threshold;
            conds.push_back(std::move(cj));
        }
        rules.push_back({{"id", r.id},
                         {"title", r.title},
                         {"combine", r.combine == Combine::Any ? "any" : "all"},
                         {"conditions", std::move(conds)}});
    }
    return {{"version", rs.version}, {"rules", std::move(rules)}};
}

Measurements collect_measurements(const emr::Document& doc, const emr::VitalSigns& vitals) {
    Measurements m;
    for (const auto& [id, v] : doc.values) {
        if (const auto* n = std::get_if<emr::Numeric>(&v)) m[id] = n->value;
        else if (const auto* o = std::get_if<emr::Ordinal>(&v)) m[id] = grade_value(o->grade);
    }
    if (!m.count("bp_systolic") && vitals.systolic_mmHg) m["bp_systolic"] = *vitals.systolic_mmHg;
    if (!m.count("bp_diastolic") && vitals.diastolic_mmHg) m["bp_diastolic"] = *vitals.diastolic_mmHg;
    if (!m.count("bmi")) {
        auto w = m.count("weight") ? std::optional<double>(m["weight"]) : vitals.weight_kg;
        auto h = m.count("height") ? std::optional<double>(m["height"]) : vitals.height_cm;
        if (w && h && *w > 0 && *h >= 50.0 && *h <= 250.0) m["bmi"] = compute_bmi(*w, *h);
    }
    return m;
}

// ---------------------------------------------------------------------------

std::string_view to_string(FlagCategory c) noexcept { return c == FlagCategory::Critical ? "critical" : "missing"; }

std::string_view to_string(FlagSource s) noexcept {
    switch (s) {
    case FlagSource::Deterministic: return "deterministic";
    case FlagSource::Llm: return "llm";
    case FlagSource::Merged: return "merged";
    }
    return "?";
}

std::string_view to_string(Severity s) noexcept { return s == Severity::Red ? "red" : "yellow"; }

std::optional<FlagCategory> flag_category_from_string(std::string_view s) noexcept {
    if (s == "critical") return FlagCategory::Critical;
    if (s == "missing") return FlagCategory::Missing;
    return std::nullopt;
}

std::optional<FlagSource> flag_source_from_string(std::string_view s) noexcept {
    if (s == "deterministic") return FlagSource::Deterministic;
    if (s == "llm") return FlagSource::Llm;
    if (s == "merged") return FlagSource::Merged;
    return std::nullopt;
}

std::vector<std::string> RedFlagReport::critical_ids() const {
    std::vector<std::string> out;
    for (const auto& f : flags)
        if (f.category == FlagCategory::Critical) out.push_back(f.id);
    return out;
}

namespace {

std::string format_measure(const std::string& parameter, double v) {
    if (parameter == "urine_albumin" || parameter == "urine_glucose")
        return std::string(emr::to_string(static_cast<emr::DipstickGrade>(static_cast<int>(v))));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

} // namespace

std::vector<RedFlag> evaluate_thresholds(const Measurements& m, const ThresholdRuleSet& rules) {
    std::vector<RedFlag> out;
    for (const auto& r : rules.rules) {
        std::vector<std::string> hits;
        std::size_t present = 0;
        for (const auto& c : r.conditions) {
            auto it = m.find(c.parameter);
            if (it == m.end()) continue;
            ++present;
            if (compare(it->second, c.comparator, c.threshold))
                hits.push_back(c.parameter + " " + format_measure(c.parameter, it->second) + " " +
                               std::string(to_string(c.comparator)) + " " + format_measure(c.parameter, c.threshold));
        }
        const bool fired = r.combine == Combine::Any ? !hits.empty()
                                                     : present == r.conditions.size() && hits.size() == present;
        if (!fired) continue;
        RedFlag f;
        f.id = "rule." + r.id;
        f.category = FlagCategory::Critical;
        f.rule_id = r.id;
        f.title = r.title;
        f.detail = text::join(hits, "; ");
        out.push_back(std::move(f));
    }
    return out;
}

std::vector<RedFlag> evaluate_thresholds(const emr::VitalSigns& vitals, const Measurements& labs,
                                         std::optional<double> bmi, const ThresholdRuleSet& rules) {
    Measurements m = labs;
    if (vitals.systolic_mmHg) m["bp_systolic"] = *vitals.systolic_mmHg;
    if (vitals.diastolic_mmHg) m["bp_diastolic"] = *vitals.diastolic_mmHg;
    if (bmi) m["bmi"] = *bmi;
    return evaluate_thresholds(m, rules);
}

std::vector<RedFlag> detect_missing(const emr::Document& doc, const emr::Schema& schema,
                                    const emr::VitalSigns& vitals) {
    std::vector<RedFlag> out;
    for (const auto& spec : schema.specs()) {
        if (!spec.required_for_flagging) continue;
        auto it = doc.values.find(spec.id);
        if (it != doc.values.end() && !emr::is_no_information(it->second)) continue;
        RedFlag f;
        f.id = "missing." + spec.id;
        f.category = FlagCategory::Missing;
        f.rule_id = "missing." + spec.id;
        f.title = spec.label + " not recorded";
        f.detail = "No value recorded for " + spec.label + " in " + std::string(emr::display_name(spec.section)) + ".";
        out.push_back(std::move(f));
    }
    const std::pair<const std::optional<double>*, std::string_view> vit[] = {
        {&vitals.height_cm, "height"},          {&vitals.weight_kg, "weight"},
        {&vitals.systolic_mmHg, "systolic"},    {&vitals.diastolic_mmHg, "diastolic"},
        {&vitals.temperature_C, "temperature"}, {&vitals.pulse_bpm, "pulse"},
    };
    for (const auto& [value, name] : vit) {
        if (value->has_value()) continue;
        RedFlag f;
        f.id = "missing.vital." + std::string(name);
        f.category = FlagCategory::Missing;
        f.rule_id = f.id;
        f.title = "Vital sign " + std::string(name) + " not recorded";
        f.detail = "The " + std::string(name) + " measurement was not entered at registration.";
        out.push_back(std::move(f));
    }
    return out;
}

RedFlagReport merge_reports(const std::vector<RedFlag>& deterministic, const std::vector<NarrativeFlag>& narrative) {
    RedFlagReport r;
    r.flags = deterministic;
    std::size_t llm = 0;
    for (const auto& n : narrative) {
        RedFlag* target = nullptr;
        if (n.rule_id)
            for (std::size_t i = 0; i < deterministic.size(); ++i)
                if (r.flags[i].rule_id == *n.rule_id) target = &r.flags[i];
        if (target) {
            if (!n.body.empty()) target->detail += target->detail.empty() ? n.body : " " + n.body;
            target->source = FlagSource::Merged;
            for (const auto& c : n.citations)
                if (std::find(target->citations.begin(), target->citations.end(), c) == target->citations.end())
                    target->citations.push_back(c);
            continue;
        }
        RedFlag f;
        f.id = "llm." + std::to_string(++llm);
        f.category = n.category;
        f.rule_id = n.rule_id.value_or("");
        f.title = n.title;
        f.detail = n.body;
        f.source = FlagSource::Llm;
        f.citations = n.citations;
        r.flags.push_back(std::move(f));
    }
    return r;
}

// ---------------------------------------------------------------------------

Json flag_to_json(const RedFlag& f) {
    return {{"id", f.id},
            {"category", to_string(f.category)},
            {"severity", to_string(f.severity())},
            {"rule_id", f.rule_id},
            {"title", f.title},
            {"detail", f.detail},
            {"source", to_string(f.source)},
            {"citations", f.citations}};
}

RedFlag flag_from_json(const Json& j) {
    try {
        RedFlag f;
        f.id = j.at("id").get<std::string>();
        auto cat = flag_category_from_string(j.at("category").get<std::string>());
        if (!cat) throw ParseError("unknown flag category", "category");
        f.category = *cat;
        f.rule_id = j.value("rule_id", std::string());
        f.title = j.at("title").get<std::string>();
        f.detail = j.value("detail", std::string());
        auto src = flag_source_from_string(j.value("source", std::string("deterministic")));
        if (!src) throw ParseError("unknown flag source", "source");
        f.source = *src;
        f.citations = j.value("citations", std::vector<std::string>{});
        return f;
    } catch (const Json::exception& e) {
        throw ParseError(std::string("red flag: ") + e.what(), "");
    }
}

Json narrative_to_json(const NarrativeFlag& f) {
    Json j{{"category", to_string(f.category)}, {"title", f.title}, {"body", f.body}};
    if (f.rule_id) j["rule_id"] = *f.rule_id;
    j["citations"] = f.citations;
    return j;
}

NarrativeFlag narrative_from_json(const Json& j) {
    NarrativeFlag f;
    auto cat = flag_category_from_string(j.at("category").get<std::string>());
    if (!cat) throw ParseError("unknown flag category", "category");
    f.category = *cat;
    f.title = j.at("title").get<std::string>();
    f.body = j.at("body").get<std::string>();
    if (j.contains("rule_id") && j["rule_id"].is_string()) f.rule_id = j["rule_id"].get<std::string>();
    f.citations = j.value("citations", std::vector<std::string>{});
    return f;
}

Json report_to_json(const RedFlagReport& r) {
    Json flags = Json::array();
    for (const auto& f : r.flags) flags.push_back(flag_to_json(f));
    return {{"doc_ref", r.doc_ref}, {"rules_version", r.rules_version}, {"flags", std::move(flags)}};
}

RedFlagReport report_from_json(const Json& j) {
    RedFlagReport r;
    r.doc_ref = j.value("doc_ref", std::string());
    r.rules_version = j.value("rules_version", std::string());
    for (const auto& f : j.at("flags")) r.flags.push_back(flag_from_json(f));
    return r;
}

} // namespace vemr::rules
