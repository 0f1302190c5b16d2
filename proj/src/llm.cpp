#include "vemr/llm.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>

#include "vemr/emr_json.hpp"
#include "vemr/http_client.hpp"
#include "vemr/text.hpp"

namespace vemr::llm {

namespace {

constexpr std::array<std::pair<Task, std::string_view>, 5> kTasks = {{
    {Task::Clarify, "clarify"},
    {Task::FillEmr, "fill_emr"},
    {Task::MedicalQuestions, "medical_questions"},
    {Task::RedFlags, "red_flags"},
    {Task::SummarizeAnswers, "summarize_answers"},
}};

std::string join_path(const std::string& base, const std::string& key) {
    return base.empty() ? key : base + "." + key;
}

} // namespace

std::string_view to_string(Task t) noexcept {
    for (const auto& [k, v] : kTasks)
        if (k == t) return v;
    return "?";
}

std::optional<Task> task_from_string(std::string_view s) noexcept {
    for (const auto& [k, v] : kTasks)
        if (v == s) return k;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Shapes

Shape Shape::string(bool non_empty) {
    Shape s;
    s.type = Type::String;
    s.non_empty = non_empty;
    return s;
}

Shape Shape::one_of(std::vector<std::string> values) {
    Shape s;
    s.type = Type::String;
    s.enum_values = std::move(values);
    return s;
}

Shape Shape::integer() {
    Shape s;
    s.type = Type::Integer;
    return s;
}

Shape Shape::number() {
    Shape s;
    s.type = Type::Number;
    return s;
}

Shape Shape::boolean() {
    Shape s;
    s.type = Type::Boolean;
    return s;
}

Shape Shape::array(Shape items) {
    Shape s;
    s.type = Type::Array;
    s.items = std::make_shared<const Shape>(std::move(items));
    return s;
}

Shape Shape::object(std::vector<Property> props, bool additional) {
    Shape s;
    s.type = Type::Object;
    s.properties = std::move(props);
    s.additional_properties = additional;
    return s;
}

namespace {

void check(const Json& v, const Shape& s, const std::string& path) {
    const std::string where = path.empty() ? "$" : path;
    switch (s.type) {
    case Shape::Type::Object: {
        if (!v.is_object()) throw ContractError("expected an object", where);
        for (const auto& p : s.properties) {
            auto it = v.find(p.name);
            if (it == v.end()) {
                if (p.required) throw ContractError("missing required key", join_path(path, p.name));
                continue;
            }
            check(*it, p.shape, join_path(path, p.name));
        }
        if (!s.additional_properties)
            for (auto it = v.begin(); it != v.end(); ++it)
                if (std::none_of(s.properties.begin(), s.properties.end(),
                                 [&](const Property& p) { return p.name == it.key(); }))
                    throw ContractError("unexpected key", join_path(path, it.key()));
        return;
    }
    case Shape::Type::Array:
        if (!v.is_array()) throw ContractError("expected an array", where);
        for (std::size_t i = 0; i < v.size(); ++i) check(v[i], *s.items, path + "[" + std::to_string(i) + "]");
        return;
    case Shape::Type::String: {
        if (!v.is_string()) throw ContractError("expected a string", where);
        const auto& str = v.get_ref<const std::string&>();
        if (s.non_empty && text::trim(str).empty()) throw ContractError("empty string", where);
        if (!s.enum_values.empty() && std::find(s.enum_values.begin(), s.enum_values.end(), str) == s.enum_values.end())
            throw ContractError("value '" + str + "' not allowed", where);
        return;
    }
    case Shape::Type::Integer:
        if (!v.is_number_integer()) throw ContractError("expected an integer", where);
        return;
    case Shape::Type::Number:
        if (!v.is_number()) throw ContractError("expected a number", where);
        return;
    case Shape::Type::Boolean:
        if (!v.is_boolean()) throw ContractError("expected a boolean", where);
        return;
    }
}

Json describe_shape(const Shape& s) {
    switch (s.type) {
    case Shape::Type::Object: {
        Json props = Json::object();
        Json required = Json::array();
        for (const auto& p : s.properties) {
            props[p.name] = describe_shape(p.shape);
            if (p.required) required.push_back(p.name);
        }
        return {{"type", "object"}, {"properties", props}, {"required", required},
                {"additionalProperties", s.additional_properties}};
    }
    case Shape::Type::Array: return {{"type", "array"}, {"items", describe_shape(*s.items)}};
    case Shape::Type::String: {
        Json j{{"type", "string"}};
        if (!s.enum_values.empty()) j["enum"] = s.enum_values;
        if (s.non_empty) j["minLength"] = 1;
        return j;
    }
    case Shape::Type::Integer: return {{"type", "integer"}};
    case Shape::Type::Number: return {{"type", "number"}};
    case Shape::Type::Boolean: return {{"type", "boolean"}};
    }
    return {};
}

Shape value_shape(const emr::FieldSpec& spec) {
    using emr::FieldKind;
    switch (spec.kind) {
    case FieldKind::Boolean:
        return Shape::object({{"type", Shape::one_of({"affirmed", "denied", "no_info"})},
                              {"detail", Shape::string(), false}});
    case FieldKind::Text:
        return Shape::object({{"type", Shape::one_of({"text", "no_info"})}, {"text", Shape::string(true), false}});
    case FieldKind::Numeric:
        return Shape::object({{"type", Shape::one_of({"numeric", "no_info"})},
                              {"value", Shape::number(), false},
                              {"unit", Shape::one_of({std::string(emr::to_string(*spec.unit))}), false}});
    case FieldKind::Date:
        return Shape::object({{"type", Shape::one_of({"date", "no_info"})}, {"date", Shape::string(true), false}});
    case FieldKind::Ordinal:
        return Shape::object({{"type", Shape::one_of({"ordinal", "no_info"})},
                              {"grade", Shape::one_of({"negative", "trace", "plus1", "plus2", "plus3", "plus4"}),
                               false}});
    }
    return {};
}

} // namespace

Json StructuredOutputSchema::describe() const { return describe_shape(root); }

void StructuredOutputSchema::validate(const Json& value) const { check(value, root, ""); }

StructuredOutputSchema clarify_contract() {
    auto q = Shape::object({{"id", Shape::integer()},
                            {"question", Shape::string(true)},
                            {"target_fields", Shape::array(Shape::string(true))},
                            {"kind", Shape::one_of({"misspelling", "confirmation", "missing"})}});
    return {Task::Clarify, "clarification_questions", Shape::object({{"questions", Shape::array(std::move(q))}})};
}

StructuredOutputSchema fill_emr_contract(const emr::Schema& schema, const std::vector<emr::SectionKind>& required) {
    std::vector<Property> sections;
    for (const auto& sec : schema.sections()) {
        std::vector<Property> fields;
        for (const auto& f : sec.fields) fields.push_back({f.id, value_shape(f), false});
        const bool req = std::find(required.begin(), required.end(), sec.kind) != required.end();
        sections.push_back({std::string(emr::to_string(sec.kind)),
                            Shape::object({{"fields", Shape::object(std::move(fields))},
                                           {"additional_information", Shape::string()}}),
                            req});
    }
    return {Task::FillEmr, "emr_sections", Shape::object({{"sections", Shape::object(std::move(sections))}})};
}

StructuredOutputSchema medical_questions_contract() {
    auto q = Shape::object({{"id", Shape::string(true)},
                            {"question", Shape::string(true)},
                            {"rationale_fields", Shape::array(Shape::string(true))}});
    return {Task::MedicalQuestions, "medical_questions", Shape::object({{"questions", Shape::array(std::move(q))}})};
}

StructuredOutputSchema summary_contract() {
    std::vector<std::string> names;
    for (auto k : emr::kAllSections) names.emplace_back(emr::to_string(k));
    auto s = Shape::object({{"section", Shape::one_of(names)}, {"summary", Shape::string(true)}});
    return {Task::SummarizeAnswers, "answer_summaries", Shape::object({{"summaries", Shape::array(std::move(s))}})};
}

StructuredOutputSchema red_flags_contract() {
    auto f = Shape::object({{"category", Shape::one_of({"critical", "missing"})},
                            {"title", Shape::string(true)},
                            {"body", Shape::string(true)},
                            {"rule_id", Shape::string(), false},
                            {"citations", Shape::array(Shape::string(true))}});
    return {Task::RedFlags, "red_flags", Shape::object({{"flags", Shape::array(std::move(f))}})};
}

// ---------------------------------------------------------------------------
// Prompts

const PromptTemplate& PromptLibrary::get(Task t) const {
    auto it = templates_.find(t);
    if (it == templates_.end()) throw NotFoundError("no prompt template for task " + std::string(to_string(t)));
    return it->second;
}

PromptTemplate parse_prompt_template(Task task, std::string_view src) {
    PromptTemplate t;
    t.task = task;
    enum { Header, System, User } mode = Header;
    std::string* target = nullptr;
    std::istringstream in{std::string(src)};
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        const auto trimmed = text::trim(line);
        if (trimmed == "=== system ===") {
            mode = System;
            target = &t.system;
            continue;
        }
        if (trimmed == "=== user ===") {
            mode = User;
            target = &t.user;
            continue;
        }
        if (mode == Header) {
            if (trimmed.empty() || trimmed.front() == '#') continue;
            if (text::starts_with_ci(trimmed, "version:")) {
                t.version = std::string(text::trim(trimmed.substr(8)));
                continue;
            }
            throw ParseError("unexpected text before the system section", "line " + std::to_string(n));
        }
        *target += line;
        *target += '\n';
    }
    if (t.version.empty()) throw ParseError("prompt template lacks a version", std::string(to_string(task)));
    if (mode != User) throw ParseError("prompt template needs system and user sections", std::string(to_string(task)));
    while (!t.system.empty() && t.system.back() == '\n') t.system.pop_back();
    while (!t.user.empty() && t.user.back() == '\n') t.user.pop_back();
    return t;
}

PromptLibrary load_prompt_library(const std::string& dir) {
    std::map<Task, PromptTemplate> out;
    for (const auto& [task, name] : kTasks) {
        const auto path = std::filesystem::path(dir) / (std::string(name) + ".txt");
        out[task] = parse_prompt_template(task, text::read_file(path.string()));
    }
    return PromptLibrary(std::move(out));
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    std::size_t pos = 0;
    while (true) {
        auto open = tmpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(pos));
            break;
        }
        auto close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) throw ValidationError("unterminated placeholder in prompt template");
        out.append(tmpl.substr(pos, open - pos));
        const auto name = std::string(text::trim(tmpl.substr(open + 2, close - open - 2)));
        auto it = values.find(name);
        if (it == values.end()) throw ValidationError("no value for placeholder {{" + name + "}}", name);
        out += it->second;
        pos = close + 2;
    }
    return out;
}

const Attachment* PromptBundle::attachment(std::string_view name) const noexcept {
    for (const auto& a : attachments)
        if (a.name == name) return &a;
    return nullptr;
}

std::string PromptBundle::render() const {
    return "### task: " + std::string(to_string(task)) + " (" + template_version + ")\n### system\n" + system_text +
           "\n### user\n" + user_text + "\n";
}

// ---------------------------------------------------------------------------
// Task types

std::string_view to_string(QuestionKind k) noexcept {
    switch (k) {
    case QuestionKind::Misspelling: return "misspelling";
    case QuestionKind::Confirmation: return "confirmation";
    case QuestionKind::Missing: return "missing";
    }
    return "?";
}

namespace {

QuestionKind question_kind(std::string_view s) {
    if (s == "misspelling") return QuestionKind::Misspelling;
    if (s == "missing") return QuestionKind::Missing;
    return QuestionKind::Confirmation;
}

} // namespace

Json question_to_json(const ClarificationQuestion& q) {
    return {{"id", q.id}, {"question", q.question}, {"target_fields", q.target_fields}, {"kind", to_string(q.kind)}};
}

ClarificationQuestion question_from_json(const Json& j) {
    return {j.at("id").get<int>(), j.at("question").get<std::string>(),
            j.value("target_fields", std::vector<std::string>{}), question_kind(j.value("kind", std::string()))};
}

Json medical_question_to_json(const MedicalQuestion& q) {
    return {{"id", q.id}, {"question", q.question}, {"rationale_fields", q.rationale_fields}};
}

MedicalQuestion medical_question_from_json(const Json& j) {
    return {j.at("id").get<std::string>(), j.at("question").get<std::string>(),
            j.value("rationale_fields", std::vector<std::string>{})};
}

std::size_t sentence_count(std::string_view t) {
    std::size_t count = 0;
    bool pending = false;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const char c = t[i];
        const bool term = c == '.' || c == '!' || c == '?';
        if (term && (i + 1 == t.size() || std::isspace(static_cast<unsigned char>(t[i + 1])))) {
            if (pending) ++count;
            pending = false;
        } else if (!std::isspace(static_cast<unsigned char>(c)) && !term) {
            pending = true;
        }
    }
    return count + (pending ? 1 : 0);
}

namespace {

Json parse_response(std::string_view text, const StructuredOutputSchema& contract) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ContractError(std::string("response is not valid structured text: ") + e.what(), "$");
    }
    contract.validate(j);
    return j;
}

} // namespace

std::vector<ClarificationQuestion> parse_clarifications(std::string_view response, const StructuredOutputSchema& contract,
                                                        const emr::Schema& schema) {
    const auto j = parse_response(response, contract);
    std::vector<ClarificationQuestion> out;
    const auto& qs = j.at("questions");
    for (std::size_t i = 0; i < qs.size(); ++i) {
        const auto path = "questions[" + std::to_string(i) + "]";
        auto q = question_from_json(qs[i]);
        if (q.id != static_cast<int>(i) + 1)
            throw ContractError("ordinals must run 1.." + std::to_string(qs.size()), path + ".id");
        for (std::size_t t = 0; t < q.target_fields.size(); ++t)
            if (!schema.find(q.target_fields[t]))
                throw ContractError("unknown field '" + q.target_fields[t] + "'",
                                    path + ".target_fields[" + std::to_string(t) + "]");
        out.push_back(std::move(q));
    }
    return out;
}

emr::Document apply_summary(const emr::Document& doc, const SummaryDelta& delta) {
    auto out = doc;
    for (const auto& [sec, text] : delta) {
        if (text.empty()) continue;
        auto& slot = out.additional_info[sec];
        slot += slot.empty() ? text : " " + text;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Orchestrator

namespace {

std::string schema_excerpt(const emr::SectionSpec& sec) {
    std::string out;
    for (const auto& f : sec.fields) {
        out += "- " + f.id + " (" + f.label + "): " + std::string(emr::to_string(f.kind));
        if (f.unit) out += " [" + std::string(emr::to_string(*f.unit)) + "]";
        out += '\n';
    }
    out += "- additional_information: free text\n";
    return out;
}

std::string dictionary_excerpt(std::string_view text, const lexicon::Lexicon& lex) {
    std::string out;
    for (const auto* e : lexicon::relevant_entries(text, lex)) {
        out += "- " + e->canonical + " (" + std::string(lexicon::to_string(e->category)) + ")";
        if (!e->variants.empty()) out += ": " + text::join(e->variants, ", ");
        out += '\n';
    }
    return out.empty() ? "(no dictionary terms found)\n" : out;
}

Json fields_context(const emr::SectionSpec& sec) {
    Json fields = Json::array();
    for (const auto& f : sec.fields) {
        Json j{{"id", f.id}, {"label", f.label}, {"kind", emr::to_string(f.kind)}};
        if (f.unit) j["unit"] = emr::to_string(*f.unit);
        fields.push_back(std::move(j));
    }
    return fields;
}

Json values_context(const emr::Document& doc, const emr::Schema& schema) {
    Json values = Json::object();
    for (const auto& spec : schema.specs()) {
        auto it = doc.values.find(spec.id);
        values[spec.id] = emr::value_to_json(it == doc.values.end() ? emr::FieldValue{} : it->second);
    }
    return values;
}

std::string emr_listing(const emr::Document& doc, const emr::Schema& schema) {
    std::string out;
    for (const auto& sec : schema.sections()) {
        out += "## " + std::string(emr::display_name(sec.kind)) + "\n";
        for (const auto& f : sec.fields) {
            auto it = doc.values.find(f.id);
            out += "- " + f.label + " [" + f.id + "]: " +
                   (it == doc.values.end() ? std::string("No Info") : emr::display(it->second)) + "\n";
        }
        auto ai = doc.additional_info.find(sec.kind);
        out += "- Additional Information: " + (ai == doc.additional_info.end() || ai->second.empty() ? "-" : ai->second) + "\n";
    }
    return out;
}

std::string rules_listing(const rules::ThresholdRuleSet& rs) {
    std::string out;
    for (const auto& r : rs.rules) {
        out += "- " + r.title + " [" + r.id + "]: ";
        std::vector<std::string> conds;
        for (const auto& c : r.conditions) {
            std::string t = c.parameter + " " + std::string(rules::to_string(c.comparator)) + " ";
            if (c.parameter == "urine_albumin" || c.parameter == "urine_glucose")
                t += emr::to_string(static_cast<emr::DipstickGrade>(static_cast<int>(c.threshold)));
            else {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%g", c.threshold);
                t += buf;
            }
            conds.push_back(std::move(t));
        }
        out += text::join(conds, r.combine == rules::Combine::Any ? " or " : " and ") + "\n";
    }
    return out;
}

} // namespace

template <typename F>
auto Orchestrator::call(const PromptBundle& bundle, F&& post) const {
    LlmRequest req;
    req.bundle = &bundle;
    std::string last_message, last_path;
    for (int attempt = 1; attempt <= 1 + kMaxReasks; ++attempt) {
        req.attempt = attempt;
        req.prompt = bundle.render();
        if (attempt > 1)
            req.prompt += "### correction\nThe previous output was rejected: " + req.previous_error +
                          "\nReturn output that satisfies the output contract exactly.\n";
        auto resp = backend_.complete(req);
        try {
            return post(resp.text);
        } catch (const ContractError& e) {
            last_message = e.what();
            last_path = e.path();
            req.previous_error = last_message;
        }
    }
    throw GenerationError(std::string(to_string(bundle.task)) + " output rejected after " +
                              std::to_string(1 + kMaxReasks) + " attempts: " + last_message,
                          last_path);
}

PromptBundle Orchestrator::build_clarification_prompt(const transcript::SectionTranscript& t) const {
    if (text::trim(t.collapsed_text).empty()) throw ValidationError("empty transcript", "transcript");
    const auto& tmpl = prompts_.get(Task::Clarify);
    const auto& sec = schema_.section(t.section);
    const auto normalized = lexicon::normalize_text(t.collapsed_text, lexicon_).text;

    PromptBundle b;
    b.task = Task::Clarify;
    b.template_version = tmpl.version;
    b.attachments = {{"schema_excerpt", schema_excerpt(sec)},
                     {"lexicon_excerpt", dictionary_excerpt(t.collapsed_text, lexicon_)},
                     {"transcript", t.collapsed_text}};
    std::map<std::string, std::string> vals{{"section_label", std::string(emr::display_name(t.section))},
                                            {"schema_excerpt", b.attachments[0].content},
                                            {"dictionary", b.attachments[1].content},
                                            {"transcript", t.collapsed_text}};
    b.system_text = render_template(tmpl.system, vals);
    b.user_text = render_template(tmpl.user, vals);
    b.contract = clarify_contract();
    b.context = {{"section", emr::to_string(t.section)},
                 {"transcript", t.collapsed_text},
                 {"normalized_transcript", normalized},
                 {"fields", fields_context(sec)}};
    return b;
}

std::vector<ClarificationQuestion> Orchestrator::clarify(const transcript::SectionTranscript& t) const {
    const auto bundle = build_clarification_prompt(t);
    return call(bundle, [&](const std::string& text) { return parse_clarifications(text, bundle.contract, schema_); });
}

PromptBundle Orchestrator::build_fill_prompt(const SectionInput& in) const {
    const auto& t = in.transcript;
    if (text::trim(t.collapsed_text).empty()) throw ValidationError("empty transcript", "transcript");
    std::map<int, const ClarificationAnswer*> by_id;
    for (const auto& a : in.answers) {
        if (a.question_id < 1 || a.question_id > static_cast<int>(in.questions.size()))
            throw ValidationError("answer references unknown question " + std::to_string(a.question_id), "answers");
        if (!by_id.emplace(a.question_id, &a).second)
            throw ValidationError("question " + std::to_string(a.question_id) + " answered twice", "answers");
    }
    if (by_id.size() != in.questions.size())
        throw ValidationError("all clarification questions must be answered before generation", "answers");

    const auto& tmpl = prompts_.get(Task::FillEmr);
    const auto& sec = schema_.section(t.section);
    std::string qa;
    Json answers = Json::array();
    for (const auto& q : in.questions) {
        const auto& a = *by_id.at(q.id);
        qa += "Q" + std::to_string(q.id) + ": " + q.question + "\nA" + std::to_string(q.id) + ": " + a.answer + "\n";
        answers.push_back({{"question_id", q.id},
                           {"question", q.question},
                           {"target_fields", q.target_fields},
                           {"answer", a.answer},
                           {"normalized_answer", lexicon::normalize_text(a.answer, lexicon_).text}});
    }
    if (qa.empty()) qa = "(no clarification questions)\n";

    PromptBundle b;
    b.task = Task::FillEmr;
    b.template_version = tmpl.version;
    b.attachments = {{"schema_excerpt", schema_excerpt(sec)},
                     {"lexicon_excerpt", dictionary_excerpt(t.collapsed_text, lexicon_)},
                     {"transcript", t.collapsed_text},
                     {"answers", qa}};
    std::map<std::string, std::string> vals{{"section_label", std::string(emr::display_name(t.section))},
                                            {"section_id", std::string(emr::to_string(t.section))},
                                            {"schema_excerpt", b.attachments[0].content},
                                            {"dictionary", b.attachments[1].content},
                                            {"transcript", t.collapsed_text},
                                            {"answers", qa}};
    b.system_text = render_template(tmpl.system, vals);
    b.user_text = render_template(tmpl.user, vals);
    b.contract = fill_emr_contract(schema_, {t.section});
    b.context = {{"section", emr::to_string(t.section)},
                 {"transcript", t.collapsed_text},
                 {"normalized_transcript", lexicon::normalize_text(t.collapsed_text, lexicon_).text},
                 {"answers", std::move(answers)},
                 {"fields", fields_context(sec)}};
    return b;
}

emr::Document Orchestrator::generate_emr(const std::vector<SectionInput>& inputs, const emr::Document* base) const {
    auto doc = base ? *base : emr::blank_document(schema_);
    std::set<emr::SectionKind> seen;
    for (const auto& in : inputs) {
        const auto kind = in.transcript.section;
        if (!seen.insert(kind).second)
            throw ValidationError("section " + std::string(emr::to_string(kind)) + " given twice", "inputs");
        const auto bundle = build_fill_prompt(in);
        const auto& sec = schema_.section(kind);
        const std::string key(emr::to_string(kind));

        struct Filled {
            std::map<std::string, emr::FieldValue> values;
            std::string additional;
        };
        auto filled = call(bundle, [&](const std::string& text) {
            const auto j = parse_response(text, bundle.contract);
            const auto& s = j.at("sections").at(key);
            const auto& fields = s.at("fields");
            Filled out;
            for (const auto& spec : sec.fields) {
                const auto path = "sections." + key + ".fields." + spec.id;
                auto it = fields.find(spec.id);
                if (it == fields.end()) {
                    // Silence defaults booleans to "No"; other kinds stay unknown.
                    out.values[spec.id] = spec.kind == emr::FieldKind::Boolean ? emr::FieldValue{emr::Denied{}}
                                                                               : emr::FieldValue{emr::NoInformation{}};
                    continue;
                }
                emr::FieldValue v;
                try {
                    v = emr::value_from_json(*it, path);
                } catch (const ParseError& e) {
                    throw ContractError(e.what(), e.path());
                }
                if (!emr::matches_kind(v, spec)) throw ContractError("value kind does not match field", path);
                out.values[spec.id] = std::move(v);
            }
            out.additional = std::string(text::trim(s.at("additional_information").get<std::string>()));
            return out;
        });
        for (auto& [id, v] : filled.values) {
            if (emr::is_no_information(v)) doc.provenance.erase(id);
            else doc.provenance[id] = emr::Provenance::LlmGenerated;
            doc.values[id] = std::move(v);
        }
        doc.additional_info[kind] = filled.additional;
    }
    return doc;
}

PromptBundle Orchestrator::build_medical_questions_prompt(const emr::Document& doc) const {
    const auto& tmpl = prompts_.get(Task::MedicalQuestions);
    PromptBundle b;
    b.task = Task::MedicalQuestions;
    b.template_version = tmpl.version;
    b.attachments = {{"emr", emr_listing(doc, schema_)}};
    std::map<std::string, std::string> vals{{"emr", b.attachments[0].content}};
    b.system_text = render_template(tmpl.system, vals);
    b.user_text = render_template(tmpl.user, vals);
    b.contract = medical_questions_contract();
    b.context = {{"values", values_context(doc, schema_)}};
    return b;
}

std::vector<MedicalQuestion> Orchestrator::generate_medical_questions(const emr::Document& doc) const {
    const auto bundle = build_medical_questions_prompt(doc);
    return call(bundle, [&](const std::string& text) {
        const auto j = parse_response(text, bundle.contract);
        std::vector<MedicalQuestion> out;
        std::set<std::string> ids;
        const auto& qs = j.at("questions");
        for (std::size_t i = 0; i < qs.size(); ++i) {
            const auto path = "questions[" + std::to_string(i) + "]";
            auto q = medical_question_from_json(qs[i]);
            if (!ids.insert(q.id).second) throw ContractError("duplicate question id", path + ".id");
            bool all_populated = !q.rationale_fields.empty();
            for (std::size_t r = 0; r < q.rationale_fields.size(); ++r) {
                if (!schema_.find(q.rationale_fields[r]))
                    throw ContractError("unknown field", path + ".rationale_fields[" + std::to_string(r) + "]");
                auto it = doc.values.find(q.rationale_fields[r]);
                if (it == doc.values.end() || emr::is_no_information(it->second)) all_populated = false;
            }
            if (all_populated) continue; // already answered by the record
            out.push_back(std::move(q));
        }
        if (out.size() > 7) out.resize(7);
        if (out.size() < 3) throw ContractError("fewer than 3 usable questions", "questions");
        return out;
    });
}

namespace {

std::vector<std::pair<const MedicalQuestion*, std::string>> answered(const std::vector<MedicalQuestion>& questions,
                                                                     const std::vector<MedicalAnswer>& answers) {
    std::vector<std::pair<const MedicalQuestion*, std::string>> out;
    std::set<std::string> seen;
    for (const auto& a : answers) {
        auto q = std::find_if(questions.begin(), questions.end(), [&](const auto& x) { return x.id == a.question_id; });
        if (q == questions.end()) throw ValidationError("answer references unknown question " + a.question_id, "answers");
        if (!seen.insert(a.question_id).second)
            throw ValidationError("question " + a.question_id + " answered twice", "answers");
        if (!a.answer || text::trim(*a.answer).empty()) continue;
        out.emplace_back(&*q, std::string(text::trim(*a.answer)));
    }
    return out;
}

} // namespace

PromptBundle Orchestrator::build_summary_prompt(const emr::Document& doc, const std::vector<MedicalQuestion>& questions,
                                                const std::vector<MedicalAnswer>& answers) const {
    const auto& tmpl = prompts_.get(Task::SummarizeAnswers);
    const auto qa = answered(questions, answers);
    std::string listing;
    Json ctx_qa = Json::array();
    for (const auto& [q, a] : qa) {
        listing += "Q: " + q->question + "\nA: " + a + "\n";
        auto section = emr::SectionKind::PresentPregnancy;
        if (!q->rationale_fields.empty())
            if (const auto* spec = schema_.find(q->rationale_fields.front())) section = spec->section;
        ctx_qa.push_back({{"id", q->id},
                          {"question", q->question},
                          {"answer", a},
                          {"rationale_fields", q->rationale_fields},
                          {"section", emr::to_string(section)}});
    }
    PromptBundle b;
    b.task = Task::SummarizeAnswers;
    b.template_version = tmpl.version;
    b.attachments = {{"emr", emr_listing(doc, schema_)}, {"answers", listing}};
    std::map<std::string, std::string> vals{{"emr", b.attachments[0].content}, {"answers", listing}};
    b.system_text = render_template(tmpl.system, vals);
    b.user_text = render_template(tmpl.user, vals);
    b.contract = summary_contract();
    b.context = {{"qa", std::move(ctx_qa)}};
    return b;
}

SummaryDelta Orchestrator::summarize_question_answers(const emr::Document& doc,
                                                      const std::vector<MedicalQuestion>& questions,
                                                      const std::vector<MedicalAnswer>& answers) const {
    if (answered(questions, answers).empty()) return {};
    const auto bundle = build_summary_prompt(doc, questions, answers);
    return call(bundle, [&](const std::string& text) {
        const auto j = parse_response(text, bundle.contract);
        SummaryDelta delta;
        for (const auto& s : j.at("summaries")) {
            auto kind = *emr::section_from_string(s.at("section").get<std::string>());
            auto& slot = delta[kind];
            const auto summary = std::string(text::trim(s.at("summary").get<std::string>()));
            slot += slot.empty() ? summary : " " + summary;
        }
        return delta;
    });
}

PromptBundle Orchestrator::build_red_flag_prompt(const emr::Document& doc, const rules::ThresholdRuleSet& rs,
                                                 const std::vector<retrieval::Snippet>& snippets) const {
    const auto& tmpl = prompts_.get(Task::RedFlags);
    std::string snippet_text;
    Json ctx_snippets = Json::array();
    for (const auto& s : snippets) {
        snippet_text += "[" + s.id() + "] " + s.text + "\n";
        ctx_snippets.push_back({{"id", s.id()}, {"text", s.text}});
    }
    if (snippet_text.empty()) snippet_text = "(no guideline snippets)\n";
    PromptBundle b;
    b.task = Task::RedFlags;
    b.template_version = tmpl.version;
    b.attachments = {{"emr", emr_listing(doc, schema_)}, {"thresholds", rules_listing(rs)}};
    if (!snippets.empty()) b.attachments.push_back({"snippets", snippet_text});
    std::map<std::string, std::string> vals{
        {"emr", b.attachments[0].content}, {"thresholds", b.attachments[1].content}, {"snippets", snippet_text}};
    b.system_text = render_template(tmpl.system, vals);
    b.user_text = render_template(tmpl.user, vals);
    b.contract = red_flags_contract();
    b.context = {{"values", values_context(doc, schema_)},
                 {"rules", rules::rules_to_json(rs)},
                 {"snippets", std::move(ctx_snippets)}};
    return b;
}

std::vector<rules::NarrativeFlag> Orchestrator::generate_redflag_narrative(
    const emr::Document& doc, const rules::ThresholdRuleSet& rs, const std::vector<retrieval::Snippet>& snippets) const {
    const auto bundle = build_red_flag_prompt(doc, rs, snippets);
    std::set<std::string> snippet_ids;
    for (const auto& s : snippets) snippet_ids.insert(s.id());
    return call(bundle, [&](const std::string& text) {
        const auto j = parse_response(text, bundle.contract);
        std::vector<rules::NarrativeFlag> out;
        const auto& fs = j.at("flags");
        for (std::size_t i = 0; i < fs.size(); ++i) {
            const auto path = "flags[" + std::to_string(i) + "]";
            auto f = rules::narrative_from_json(fs[i]);
            if (sentence_count(f.body) > 3) throw ContractError("body longer than three sentences", path + ".body");
            for (std::size_t c = 0; c < f.citations.size(); ++c)
                if (!snippet_ids.count(f.citations[c]))
                    throw ContractError("citation of an unknown snippet", path + ".citations[" + std::to_string(c) + "]");
            if (f.rule_id && f.rule_id->empty()) f.rule_id.reset();
            out.push_back(std::move(f));
        }
        return out;
    });
}

// ---------------------------------------------------------------------------
// Mock backend

namespace {

std::size_t task_index(Task t) { return static_cast<std::size_t>(t); }

/// Sentences split on terminal punctuation followed by whitespace (decimals
/// such as 37.9 stay intact) and on newlines.
std::vector<std::string> split_sentences(std::string_view t) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        auto s = std::string(text::trim(cur));
        if (!s.empty()) out.push_back(std::move(s));
        cur.clear();
    };
    for (std::size_t i = 0; i < t.size(); ++i) {
        const char c = t[i];
        if (c == '\n') {
            flush();
            continue;
        }
        if ((c == '.' || c == '!' || c == '?') &&
            (i + 1 == t.size() || std::isspace(static_cast<unsigned char>(t[i + 1])))) {
            flush();
            continue;
        }
        cur.push_back(c);
    }
    flush();
    return out;
}

/// Lower-case tokens with list punctuation and sentence-final marks removed;
/// keeps '.', '/', '+', '-' inside tokens so values like 37.9, 150/95 and 2+
/// survive.
std::vector<std::string> match_tokens(std::string_view s) {
    std::string cleaned = text::casefold(s);
    for (auto& c : cleaned)
        if (c == ',' || c == ';' || c == ':' || c == '(' || c == ')' || c == '"' || c == '\'') c = ' ';
    auto tokens = text::split_whitespace(cleaned);
    for (auto& t : tokens)
        while (t.size() > 1 && (t.back() == '.' || t.back() == '!' || t.back() == '?')) t.pop_back();
    return tokens;
}

/// Index just past the first occurrence of `phrase` in `tokens`, or npos.
std::size_t find_phrase(const std::vector<std::string>& tokens, const std::vector<std::string>& phrase) {
    if (phrase.empty() || phrase.size() > tokens.size()) return std::string::npos;
    for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i)
        if (std::equal(phrase.begin(), phrase.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i)))
            return i + phrase.size();
    return std::string::npos;
}

bool contains(std::string_view haystack, std::string_view phrase) {
    return find_phrase(match_tokens(haystack), match_tokens(phrase)) != std::string::npos;
}

const std::set<std::string>& filler() {
    static const std::set<std::string> words = {"is", "was", "are", "were", "of", "at", "about", "=", "-", "the"};
    return words;
}

std::optional<double> leading_number(const std::string& tok) {
    const char* b = tok.c_str();
    char* e = nullptr;
    double v = std::strtod(b, &e);
    if (e == b) return std::nullopt;
    return v;
}

/// "10 january 2024".
std::optional<std::chrono::year_month_day> spoken_date(const std::string& d, const std::string& m, const std::string& y) {
    static const std::array<std::string_view, 12> months = {"january", "february", "march",     "april",
                                                            "may",     "june",     "july",      "august",
                                                            "september", "october", "november", "december"};
    auto day = leading_number(d);
    auto year = leading_number(y);
    auto it = std::find(months.begin(), months.end(), m);
    if (!day || !year || it == months.end()) return std::nullopt;
    const std::chrono::year_month_day ymd{std::chrono::year(static_cast<int>(*year)),
                                          std::chrono::month(static_cast<unsigned>(it - months.begin() + 1)),
                                          std::chrono::day(static_cast<unsigned>(*day))};
    if (!ymd.ok()) return std::nullopt;
    return ymd;
}

/// Applies one capture directive at token position `pos`. Returns false
/// when nothing usable follows the phrase.
bool capture(const Json& cap, const std::vector<std::string>& toks, std::size_t pos, const Json& field_units,
             Json& fields) {
    const auto kind = cap.value("kind", std::string("rest"));
    std::set<std::string> skip = filler();
    for (const auto& s : cap.value("skip", std::vector<std::string>{})) skip.insert(s);
    std::size_t i = pos;
    while (i < toks.size() && skip.count(toks[i])) ++i;
    if (i >= toks.size()) return false;

    if (kind == "rest") {
        std::vector<std::string> rest(toks.begin() + static_cast<std::ptrdiff_t>(i), toks.end());
        fields[cap.at("field").get<std::string>()] = {{"type", "text"}, {"text", text::join(rest, " ")}};
        return true;
    }
    const std::size_t window = std::min(toks.size(), i + 3);
    for (; i < window; ++i) {
        const auto& tok = toks[i];
        if (kind == "number") {
            auto v = leading_number(tok);
            if (!v) continue;
            const auto field = cap.at("field").get<std::string>();
            fields[field] = {{"type", "numeric"}, {"value", *v}, {"unit", field_units.value(field, std::string("kg"))}};
            return true;
        }
        if (kind == "grade") {
            auto g = emr::grade_from_string(tok);
            if (!g) continue;
            fields[cap.at("field").get<std::string>()] = {{"type", "ordinal"}, {"grade", emr::to_string(*g)}};
            return true;
        }
        if (kind == "token") {
            fields[cap.at("field").get<std::string>()] = {{"type", "text"}, {"text", tok}};
            return true;
        }
        if (kind == "date") {
            auto d = emr::parse_date(tok);
            if (!d && i + 2 < toks.size()) d = spoken_date(toks[i], toks[i + 1], toks[i + 2]);
            if (!d) continue;
            fields[cap.at("field").get<std::string>()] = {{"type", "date"}, {"date", emr::format_date(*d)}};
            return true;
        }
        if (kind == "ratio") {
            auto slash = tok.find('/');
            if (slash == std::string::npos) continue;
            auto a = leading_number(tok.substr(0, slash));
            auto b = leading_number(tok.substr(slash + 1));
            if (!a || !b) continue;
            const auto names = cap.at("fields").get<std::vector<std::string>>();
            fields[names.at(0)] = {{"type", "numeric"}, {"value", *a}, {"unit", field_units.value(names[0], std::string("mmHg"))}};
            fields[names.at(1)] = {{"type", "numeric"}, {"value", *b}, {"unit", field_units.value(names[1], std::string("mmHg"))}};
            return true;
        }
    }
    return false;
}

bool condition_holds(const Json& when, const Json& values) {
    if (when.value("always", false)) return true;
    const auto field = when.at("field").get<std::string>();
    auto it = values.find(field);
    if (it == values.end()) return false;
    const auto& v = *it;
    const auto type = v.at("type").get<std::string>();
    if (when.contains("is")) return type == when["is"].get<std::string>();
    if (when.contains("is_not")) return type != when["is_not"].get<std::string>();
    if (type != "numeric") return false;
    const double x = v.at("value").get<double>();
    if (when.contains("gt")) return x > when["gt"].get<double>();
    if (when.contains("ge")) return x >= when["ge"].get<double>();
    if (when.contains("lt")) return x < when["lt"].get<double>();
    if (when.contains("le")) return x <= when["le"].get<double>();
    return true;
}

std::string substitute_value(std::string s, const Json& when, const Json& values) {
    auto pos = s.find("{value}");
    if (pos == std::string::npos || !when.contains("field")) return s;
    auto it = values.find(when["field"].get<std::string>());
    std::string shown = "?";
    if (it != values.end() && it->value("type", std::string()) == "numeric") {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", it->at("value").get<double>());
        shown = buf;
    }
    while (pos != std::string::npos) {
        s.replace(pos, 7, shown);
        pos = s.find("{value}", pos + shown.size());
    }
    return s;
}

} // namespace

MockLlmBackend::MockLlmBackend(Json config)
    : config_(std::move(config)), faults_(std::make_shared<std::array<Fault, 5>>()) {
    caps_.id = config_.value("backend_id", std::string("mock-llm"));
    caps_.supports_structured_output = true;
    caps_.deterministic = true;
}

MockLlmBackend MockLlmBackend::from_file(const std::string& path) {
    try {
        return MockLlmBackend(Json::parse(text::read_file(path)));
    } catch (const Json::parse_error& e) {
        throw ParseError(std::string("mock language-model rules: ") + e.what(), path);
    }
}

void MockLlmBackend::inject_faults(Task task, int count, std::string bad_output) {
    auto& f = (*faults_)[task_index(task)];
    f.bad_output = std::move(bad_output);
    f.bad = count;
}

void MockLlmBackend::inject_outage(Task task, int count) { (*faults_)[task_index(task)].outage = count; }

int MockLlmBackend::calls(Task task) const { return (*faults_)[task_index(task)].calls; }

LlmResponse MockLlmBackend::complete(const LlmRequest& request) const {
    if (!request.bundle) throw BackendError("request carries no prompt bundle", false);
    const auto task = request.bundle->task;
    auto& fault = (*faults_)[task_index(task)];
    ++fault.calls;
    if (fault.outage.load() > 0 && fault.outage.fetch_sub(1) > 0)
        throw BackendError("mock language model unavailable", true);
    if (fault.bad.load() > 0 && fault.bad.fetch_sub(1) > 0) return {fault.bad_output};

    const auto& ctx = request.bundle->context;
    Json out;
    switch (task) {
    case Task::Clarify: out = clarify(ctx); break;
    case Task::FillEmr: out = fill(ctx); break;
    case Task::MedicalQuestions: out = questions(ctx); break;
    case Task::SummarizeAnswers: out = summarize(ctx); break;
    case Task::RedFlags: out = flags(ctx); break;
    }
    return {out.dump()};
}

Json MockLlmBackend::clarify(const Json& ctx) const {
    const auto section = ctx.at("section").get<std::string>();
    const auto raw = ctx.at("transcript").get<std::string>();
    const auto norm = ctx.at("normalized_transcript").get<std::string>();
    Json qs = Json::array();
    for (const auto& r : config_.value("clarify", Json::array())) {
        if (r.value("section", section) != section) continue;
        const auto when = r.at("when").get<std::string>();
        if (!contains(raw, when) && !contains(norm, when)) continue;
        qs.push_back({{"id", static_cast<int>(qs.size()) + 1},
                      {"question", r.at("question")},
                      {"target_fields", r.value("target_fields", Json::array())},
                      {"kind", r.value("kind", std::string("confirmation"))}});
    }
    return {{"questions", std::move(qs)}};
}

Json MockLlmBackend::fill(const Json& ctx) const {
    const auto section = ctx.at("section").get<std::string>();
    Json units = Json::object();
    std::vector<std::pair<std::string, std::string>> labels; // id, case-folded label
    for (const auto& f : ctx.at("fields")) {
        if (f.contains("unit")) units[f.at("id").get<std::string>()] = f["unit"];
        labels.emplace_back(f.at("id").get<std::string>(), text::casefold(f.at("label").get<std::string>()));
    }
    Json fields = Json::object();
    std::vector<std::string> unmatched;

    auto apply_rules = [&](const std::string& sentence) {
        const auto toks = match_tokens(sentence);
        bool matched = false;
        if (find_phrase(toks, {"no", "information"}) != std::string::npos) {
            for (const auto& [id, label] : labels)
                if (find_phrase(toks, match_tokens(label)) != std::string::npos) {
                    fields[id] = {{"type", "no_info"}};
                    matched = true;
                }
            if (matched) return true;
        }
        for (const auto& r : config_.value("fill", Json::array())) {
            if (r.value("section", section) != section) continue;
            // "when" is a phrase or a list of phrases that must all occur;
            // captures start after the first.
            const auto& when = r.at("when");
            std::size_t end = std::string::npos;
            bool all = true;
            for (const auto& w : when.is_array() ? when : Json::array({when})) {
                const auto e = find_phrase(toks, match_tokens(w.get<std::string>()));
                if (e == std::string::npos) all = false;
                else if (end == std::string::npos) end = e;
            }
            if (!all) continue;
            bool used = true;
            if (r.contains("set"))
                for (auto it = r["set"].begin(); it != r["set"].end(); ++it) fields[it.key()] = it.value();
            if (r.contains("capture")) {
                used = false;
                for (const auto& cap : r["capture"]) used = capture(cap, toks, end, units, fields) || used;
                used = used || r.contains("set");
            }
            matched = matched || used;
        }
        return matched;
    };

    for (const auto& s : split_sentences(ctx.at("normalized_transcript").get<std::string>()))
        if (!apply_rules(s)) unmatched.push_back(s);
    // Answers refine fields; unmatched answers are confirmations and add nothing.
    for (const auto& a : ctx.value("answers", Json::array()))
        for (const auto& s : split_sentences(a.at("normalized_answer").get<std::string>())) apply_rules(s);

    std::string additional;
    for (const auto& s : unmatched) {
        std::string sentence = s;
        sentence[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(sentence[0])));
        additional += (additional.empty() ? "" : " ") + sentence + ".";
    }
    Json sec{{"fields", std::move(fields)}, {"additional_information", additional}};
    return {{"sections", {{section, std::move(sec)}}}};
}

Json MockLlmBackend::questions(const Json& ctx) const {
    const auto& values = ctx.at("values");
    Json qs = Json::array();
    for (const auto& r : config_.value("questions", Json::array()))
        if (condition_holds(r.value("when", Json{{"always", true}}), values))
            qs.push_back({{"id", r.at("id")}, {"question", r.at("question")},
                          {"rationale_fields", r.value("rationale_fields", Json::array())}});
    for (const auto& r : config_.value("fallback_questions", Json::array()))
        qs.push_back({{"id", r.at("id")}, {"question", r.at("question")},
                      {"rationale_fields", r.value("rationale_fields", Json::array())}});
    return {{"questions", std::move(qs)}};
}

Json MockLlmBackend::summarize(const Json& ctx) const {
    Json out = Json::array();
    const auto prefix = config_.value("summary_prefix", std::string("Follow-up"));
    for (const auto& qa : ctx.at("qa")) {
        std::string answer = qa.at("answer").get<std::string>();
        if (!answer.empty() && answer.back() != '.') answer += '.';
        out.push_back({{"section", qa.at("section")},
                       {"summary", prefix + " (" + qa.at("question").get<std::string>() + "): " + answer}});
    }
    return {{"summaries", std::move(out)}};
}

Json MockLlmBackend::flags(const Json& ctx) const {
    const auto& values = ctx.at("values");
    const auto& snippets = ctx.at("snippets");
    Json out = Json::array();
    for (const auto& r : config_.value("flags", Json::array())) {
        const auto when = r.at("when");
        if (!condition_holds(when, values)) continue;
        Json citations = Json::array();
        if (r.contains("cite")) {
            const auto term = text::casefold(r["cite"].get<std::string>());
            for (const auto& s : snippets)
                if (text::casefold(s.at("text").get<std::string>()).find(term) != std::string::npos) {
                    citations.push_back(s.at("id"));
                    break;
                }
        }
        if (r.value("requires_citation", false) && citations.empty()) continue;
        Json f{{"category", r.value("category", std::string("critical"))},
               {"title", substitute_value(r.at("title").get<std::string>(), when, values)},
               {"body", substitute_value(r.at("body").get<std::string>(), when, values)}};
        if (r.contains("rule_id")) f["rule_id"] = r["rule_id"];
        f["citations"] = std::move(citations);
        out.push_back(std::move(f));
    }
    return {{"flags", std::move(out)}};
}

// ---------------------------------------------------------------------------
// Remote backend

namespace {

class HttpLlmBackend : public LlmBackend {
public:
    explicit HttpLlmBackend(HttpLlmConfig cfg) : cfg_(std::move(cfg)) {
        caps_.id = cfg_.id;
        caps_.supports_structured_output = true;
        caps_.deterministic = false;
    }

    const LlmCapabilities& capabilities() const override { return caps_; }

    LlmResponse complete(const LlmRequest& req) const override {
        const auto& b = *req.bundle;
        std::string user = b.user_text;
        if (req.attempt > 1)
            user += "\n\nThe previous output was rejected: " + req.previous_error +
                    "\nReturn output that satisfies the output contract exactly.";
        Json body{{"model", cfg_.model},
                  {"temperature", 0},
                  {"messages", Json::array({{{"role", "system"}, {"content", b.system_text}},
                                            {{"role", "user"}, {"content", user}}})},
                  {"response_format",
                   {{"type", "json_schema"}, {"json_schema", {{"name", b.contract.name}, {"schema", b.contract.describe()}}}}}};
        std::map<std::string, std::string> headers;
        if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
            headers["Authorization"] = std::string("Bearer ") + key;
        auto res = net::post(cfg_.endpoint, body.dump(), "application/json", headers, cfg_.timeout_s);
        if (res.status >= 500 || res.status == 429)
            throw BackendError("language model endpoint returned " + std::to_string(res.status), true);
        if (res.status != 200)
            throw BackendError("language model endpoint rejected request: HTTP " + std::to_string(res.status), false);
        try {
            auto j = Json::parse(res.body);
            return {j.at("choices").at(0).at("message").at("content").get<std::string>()};
        } catch (const Json::exception& e) {
            throw BackendError(std::string("malformed completion envelope: ") + e.what(), true);
        }
    }

private:
    HttpLlmConfig cfg_;
    LlmCapabilities caps_;
};

} // namespace

std::unique_ptr<LlmBackend> make_http_llm_backend(const HttpLlmConfig& config) {
    if (config.endpoint.empty()) throw ValidationError("language model endpoint not configured", "endpoint");
    return std::make_unique<HttpLlmBackend>(config);
}

} // namespace vemr::llm
