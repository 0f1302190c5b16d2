#include "vemr/workflow.hpp"

#include <algorithm>
#include <atomic>
#include <ctime>
#include <memory>

#include "vemr/digest.hpp"
#include "vemr/emr_json.hpp"
#include "vemr/text.hpp"

namespace vemr::workflow {

namespace {

constexpr std::pair<VisitState, std::string_view> kStates[] = {
    {VisitState::Registered, "registered"},
    {VisitState::Recording, "recording"},
    {VisitState::Clarifying, "clarifying"},
    {VisitState::EmrReview, "emr_review"},
    {VisitState::MedicalQuestions, "medical_questions"},
    {VisitState::RedFlagReview, "red_flag_review"},
    {VisitState::UltrasoundAttach, "ultrasound_attach"},
    {VisitState::Finalized, "finalized"},
};

constexpr std::pair<SectionStatus, std::string_view> kStatuses[] = {
    {SectionStatus::Pending, "pending"},
    {SectionStatus::Recorded, "recorded"},
    {SectionStatus::Transcribed, "transcribed"},
    {SectionStatus::Clarified, "clarified"},
};

std::optional<SectionStatus> status_from_string(std::string_view s) {
    for (const auto& [k, v] : kStatuses)
        if (v == s) return k;
    return std::nullopt;
}

emr::SectionKind section_of(const Json& j, const char* key) {
    auto s = emr::section_from_string(j.at(key).get<std::string>());
    if (!s) throw ValidationError("unknown section '" + j.at(key).get<std::string>() + "'", key);
    return *s;
}

std::string format_timestamp(std::chrono::system_clock::time_point tp) {
    const auto t = std::chrono::system_clock::to_time_t(tp);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

bool is_locked(const VisitSession& s, emr::SectionKind k) { return s.locked.count(k) > 0; }

std::optional<Cursor> compute_cursor(const VisitSession& s) {
    for (auto k : emr::kAllSections) {
        if (is_locked(s, k)) continue;
        auto q = s.clarifications.find(k);
        if (q == s.clarifications.end()) continue;
        auto a = s.clarification_answers.find(k);
        const std::size_t answered = a == s.clarification_answers.end() ? 0 : a->second.size();
        if (answered < q->second.size()) return Cursor{k, static_cast<int>(answered) + 1};
    }
    return std::nullopt;
}

Json edits_to_json(const std::vector<emr::Edit>& edits) {
    Json out = Json::array();
    for (const auto& [id, v] : edits) out.push_back({{"field", id}, {"value", emr::value_to_json(v)}});
    return out;
}

Json medical_answers_to_json(const std::vector<llm::MedicalAnswer>& answers) {
    Json out = Json::array();
    for (const auto& a : answers)
        out.push_back({{"question_id", a.question_id}, {"answer", a.answer ? Json(*a.answer) : Json(nullptr)}});
    return out;
}

std::vector<llm::MedicalAnswer> medical_answers_from_json(const Json& j) {
    std::vector<llm::MedicalAnswer> out;
    for (const auto& a : j) {
        llm::MedicalAnswer m;
        m.question_id = a.at("question_id").get<std::string>();
        if (a.contains("answer") && !a["answer"].is_null()) m.answer = a["answer"].get<std::string>();
        out.push_back(std::move(m));
    }
    return out;
}

Json summary_to_json(const llm::SummaryDelta& d) {
    Json out = Json::object();
    for (const auto& [k, v] : d) out[std::string(emr::to_string(k))] = v;
    return out;
}

} // namespace

std::string_view to_string(VisitState s) noexcept {
    for (const auto& [k, v] : kStates)
        if (k == s) return v;
    return "?";
}

std::optional<VisitState> state_from_string(std::string_view s) noexcept {
    for (const auto& [k, v] : kStates)
        if (v == s) return k;
    return std::nullopt;
}

bool transition_allowed(VisitState from, VisitState to) noexcept {
    using S = VisitState;
    if (from == S::Finalized) return false;
    if (from == to) return true;
    switch (from) {
    case S::Registered: return to == S::Recording;
    case S::Recording: return to == S::Clarifying;
    case S::Clarifying: return to == S::EmrReview;
    case S::EmrReview: return to == S::MedicalQuestions;
    case S::MedicalQuestions: return to == S::RedFlagReview;
    case S::RedFlagReview: return to == S::UltrasoundAttach || to == S::Finalized;
    case S::UltrasoundAttach: return to == S::Finalized;
    case S::Finalized: return false;
    }
    return false;
}

std::string_view to_string(VisitKind k) noexcept { return k == VisitKind::New ? "new" : "returning"; }

std::optional<VisitKind> visit_kind_from_string(std::string_view s) noexcept {
    if (s == "new") return VisitKind::New;
    if (s == "returning") return VisitKind::Returning;
    return std::nullopt;
}

std::string_view to_string(SectionStatus s) noexcept {
    for (const auto& [k, v] : kStatuses)
        if (k == s) return v;
    return "?";
}

std::string event_digest(const TransitionEvent& e) {
    const Json j{{"seq", e.seq},         {"timestamp", e.timestamp}, {"actor", e.actor},
                 {"from", to_string(e.from)}, {"to", to_string(e.to)}, {"kind", e.kind},
                 {"payload", e.payload}, {"prev", e.prev_digest}};
    return sha256_hex(j.dump());
}

std::vector<emr::SectionKind> open_sections(const VisitSession& s) {
    std::vector<emr::SectionKind> out;
    for (auto k : emr::kAllSections)
        if (!is_locked(s, k)) out.push_back(k);
    return out;
}

std::vector<std::string> outstanding_critical(const VisitSession& s) {
    std::vector<std::string> out;
    if (!s.report) return out;
    for (const auto& id : s.report->critical_ids())
        if (!s.acknowledgements.count(id)) out.push_back(id);
    return out;
}

SaveBlockedError::SaveBlockedError(std::vector<std::string> outstanding)
    : StateError("save blocked: unacknowledged critical flags: " + text::join(outstanding, ", ")),
      outstanding_(std::move(outstanding)) {}

Clock stepping_clock(std::chrono::system_clock::time_point start, std::chrono::seconds step) {
    auto n = std::make_shared<std::atomic<std::int64_t>>(0);
    return [start, step, n] { return start + step * n->fetch_add(1); };
}

// ---------------------------------------------------------------------------
// Event application

void apply_event(VisitSession& s, const TransitionEvent& e, const emr::Schema& schema) {
    if (e.seq != s.events.size() + 1) throw ValidationError("event out of sequence", "seq");
    if (!s.events.empty() && s.state != e.from) throw ValidationError("event does not start from the current state", "from");
    if (!transition_allowed(e.from, e.to))
        throw ValidationError("transition " + std::string(to_string(e.from)) + " -> " + std::string(to_string(e.to)) +
                                  " is not allowed",
                              "to");
    const auto& p = e.payload;
    try {
        if (e.kind == "visit_started") {
            if (!s.events.empty()) throw ValidationError("visit already started", "kind");
            s.visit_id = p.at("visit_id").get<std::string>();
            s.mr_number = p.at("mr_number").get<std::string>();
            s.kind = *visit_kind_from_string(p.at("kind").get<std::string>());
            s.visit_date = e.timestamp.substr(0, 10);
            for (auto k : emr::kAllSections) s.section_status[k] = SectionStatus::Pending;
            if (!p.at("prior").is_null()) s.prior = emr::document_from_json(p["prior"], schema);
            if (s.kind == VisitKind::Returning)
                for (auto k : {emr::SectionKind::PersonalMedicalHistory, emr::SectionKind::FamilyHistory,
                               emr::SectionKind::SocioEconomicHistory, emr::SectionKind::PastPregnancy}) {
                    s.locked.insert(k);
                    s.section_status[k] = SectionStatus::Clarified;
                }
        } else if (s.events.empty()) {
            throw ValidationError("first event must start the visit", "kind");
        } else if (e.kind == "vitals_entered") {
            s.vitals = emr::vitals_from_json(p.at("vitals"));
        } else if (e.kind == "audio_recorded") {
            const auto k = section_of(p, "section");
            if (is_locked(s, k)) throw ValidationError("section is locked", "section");
            s.audio[k].push_back(p.at("digest").get<std::string>());
            if (s.section_status[k] == SectionStatus::Pending) s.section_status[k] = SectionStatus::Recorded;
        } else if (e.kind == "transcript_attached") {
            const auto k = section_of(p, "section");
            if (is_locked(s, k)) throw ValidationError("section is locked", "section");
            s.transcripts[k] = transcript::transcript_from_json(p.at("transcript"));
            auto& qs = s.clarifications[k];
            qs.clear();
            for (const auto& q : p.at("questions")) qs.push_back(llm::question_from_json(q));
            s.clarification_answers[k].clear();
            s.section_status[k] = qs.empty() ? SectionStatus::Clarified : SectionStatus::Transcribed;
        } else if (e.kind == "clarification_answered") {
            const auto k = section_of(p, "section");
            const auto cur = compute_cursor(s);
            const int id = p.at("question_id").get<int>();
            if (!cur || cur->section != k || cur->ordinal != id)
                throw ValidationError("answer does not match the clarification cursor", "question_id");
            s.clarification_answers[k].push_back({id, p.at("answer").get<std::string>()});
            if (s.clarification_answers[k].size() == s.clarifications[k].size())
                s.section_status[k] = SectionStatus::Clarified;
        } else if (e.kind == "emr_generated") {
            s.emr = emr::document_from_json(p.at("document"), schema);
            s.generated_report = rules::report_from_json(p.at("report"));
            s.report = s.generated_report;
        } else if (e.kind == "emr_finalized") {
            s.emr = emr::document_from_json(p.at("document"), schema);
            s.report = rules::report_from_json(p.at("report"));
            s.medical_questions.clear();
            for (const auto& q : p.at("medical_questions")) s.medical_questions.push_back(llm::medical_question_from_json(q));
        } else if (e.kind == "medical_questions_completed") {
            s.medical_answers = medical_answers_from_json(p.at("answers"));
            s.emr = emr::document_from_json(p.at("document"), schema);
            s.report = rules::report_from_json(p.at("report"));
        } else if (e.kind == "flags_acknowledged") {
            for (const auto& id : p.at("flag_ids")) s.acknowledgements.insert(id.get<std::string>());
        } else if (e.kind == "visit_saved") {
            // state change only
        } else if (e.kind == "ultrasound_attached") {
            UltrasoundStage u;
            u.image_digest = p.at("image_digest").get<std::string>();
            for (auto it = p.at("staged").begin(); it != p.at("staged").end(); ++it)
                u.staged[it.key()] = it.value().get<std::string>();
            if (!p.at("warning").is_null()) u.warning = p["warning"].get<std::string>();
            s.ultrasound = std::move(u);
        } else if (e.kind == "visit_completed") {
            s.emr = emr::document_from_json(p.at("document"), schema);
        } else if (e.kind == "survey_submitted") {
            s.surveys.push_back({{"survey", p.at("survey")}, {"state", to_string(e.from)}, {"responses", p.at("responses")}});
        } else {
            throw ValidationError("unknown event kind '" + e.kind + "'", "kind");
        }
        if (p.contains("warning") && p["warning"].is_string() && e.kind != "ultrasound_attached")
            s.warnings.push_back(p["warning"].get<std::string>());
    } catch (const Json::exception& ex) {
        throw ValidationError("malformed " + e.kind + " payload: " + ex.what(), "payload");
    }
    s.state = e.to;
    s.cursor = s.state == VisitState::Clarifying ? compute_cursor(s) : std::nullopt;
    s.events.push_back(e);
}

VisitSession replay(const std::vector<TransitionEvent>& events, const emr::Schema& schema) {
    VisitSession s;
    std::string prev;
    for (const auto& e : events) {
        if (e.prev_digest != prev) throw ValidationError("event chain broken at seq " + std::to_string(e.seq), "prev_digest");
        if (event_digest(e) != e.digest) throw ValidationError("event digest mismatch at seq " + std::to_string(e.seq), "digest");
        apply_event(s, e, schema);
        prev = e.digest;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Wire form

Json event_to_json(const TransitionEvent& e) {
    return {{"seq", e.seq},
            {"timestamp", e.timestamp},
            {"actor", e.actor},
            {"from", to_string(e.from)},
            {"to", to_string(e.to)},
            {"kind", e.kind},
            {"payload", e.payload},
            {"prev_digest", e.prev_digest},
            {"digest", e.digest}};
}

TransitionEvent event_from_json(const Json& j) {
    try {
        TransitionEvent e;
        e.seq = j.at("seq").get<std::uint64_t>();
        e.timestamp = j.at("timestamp").get<std::string>();
        e.actor = j.at("actor").get<std::string>();
        auto from = state_from_string(j.at("from").get<std::string>());
        auto to = state_from_string(j.at("to").get<std::string>());
        if (!from || !to) throw ParseError("unknown visit state", "event");
        e.from = *from;
        e.to = *to;
        e.kind = j.at("kind").get<std::string>();
        e.payload = j.at("payload");
        e.prev_digest = j.at("prev_digest").get<std::string>();
        e.digest = j.at("digest").get<std::string>();
        return e;
    } catch (const Json::exception& ex) {
        throw ParseError(std::string("event: ") + ex.what(), "event");
    }
}

Json session_to_json(const VisitSession& s, const emr::Schema& schema) {
    Json status = Json::object();
    for (const auto& [k, v] : s.section_status) status[std::string(emr::to_string(k))] = to_string(v);
    Json locked = Json::array();
    for (auto k : s.locked) locked.push_back(emr::to_string(k));
    Json audio = Json::object();
    for (const auto& [k, v] : s.audio) audio[std::string(emr::to_string(k))] = v;
    Json transcripts = Json::object();
    for (const auto& [k, v] : s.transcripts) transcripts[std::string(emr::to_string(k))] = transcript::transcript_to_json(v);
    Json clar = Json::object();
    for (const auto& [k, qs] : s.clarifications) {
        Json arr = Json::array();
        for (const auto& q : qs) arr.push_back(llm::question_to_json(q));
        clar[std::string(emr::to_string(k))] = std::move(arr);
    }
    Json answers = Json::object();
    for (const auto& [k, as] : s.clarification_answers) {
        Json arr = Json::array();
        for (const auto& a : as) arr.push_back({{"question_id", a.question_id}, {"answer", a.answer}});
        answers[std::string(emr::to_string(k))] = std::move(arr);
    }
    Json mq = Json::array();
    for (const auto& q : s.medical_questions) mq.push_back(llm::medical_question_to_json(q));
    Json ultrasound = nullptr;
    if (s.ultrasound)
        ultrasound = {{"image_digest", s.ultrasound->image_digest},
                      {"staged", s.ultrasound->staged},
                      {"warning", s.ultrasound->warning ? Json(*s.ultrasound->warning) : Json(nullptr)}};
    Json events = Json::array();
    for (const auto& e : s.events) events.push_back(event_to_json(e));
    return {{"visit_id", s.visit_id},
            {"mr_number", s.mr_number},
            {"kind", to_string(s.kind)},
            {"state", to_string(s.state)},
            {"version", s.version()},
            {"visit_date", s.visit_date},
            {"vitals", s.vitals ? emr::vitals_to_json(*s.vitals) : Json(nullptr)},
            {"section_status", std::move(status)},
            {"locked_sections", std::move(locked)},
            {"audio", std::move(audio)},
            {"transcripts", std::move(transcripts)},
            {"clarifications", std::move(clar)},
            {"clarification_answers", std::move(answers)},
            {"cursor", s.cursor ? Json{{"section", emr::to_string(s.cursor->section)}, {"question_id", s.cursor->ordinal}}
                                : Json(nullptr)},
            {"prior", s.prior ? emr::document_to_json(*s.prior, schema) : Json(nullptr)},
            {"emr", s.emr ? emr::document_to_json(*s.emr, schema) : Json(nullptr)},
            {"generated_report", s.generated_report ? rules::report_to_json(*s.generated_report) : Json(nullptr)},
            {"report", s.report ? rules::report_to_json(*s.report) : Json(nullptr)},
            {"medical_questions", std::move(mq)},
            {"medical_answers", medical_answers_to_json(s.medical_answers)},
            {"acknowledgements", s.acknowledgements},
            {"outstanding_critical", outstanding_critical(s)},
            {"ultrasound", std::move(ultrasound)},
            {"surveys", s.surveys},
            {"warnings", s.warnings},
            {"events", std::move(events)}};
}

VisitSession session_from_json(const Json& j, const emr::Schema& schema) {
    try {
        VisitSession s;
        s.visit_id = j.at("visit_id").get<std::string>();
        s.mr_number = j.at("mr_number").get<std::string>();
        s.kind = *visit_kind_from_string(j.at("kind").get<std::string>());
        auto st = state_from_string(j.at("state").get<std::string>());
        if (!st) throw ParseError("unknown visit state", "state");
        s.state = *st;
        s.visit_date = j.at("visit_date").get<std::string>();
        if (!j.at("vitals").is_null()) s.vitals = emr::vitals_from_json(j["vitals"]);
        for (auto it = j.at("section_status").begin(); it != j["section_status"].end(); ++it) {
            auto k = emr::section_from_string(it.key());
            auto v = status_from_string(it.value().get<std::string>());
            if (!k || !v) throw ParseError("bad section status", "section_status." + it.key());
            s.section_status[*k] = *v;
        }
        for (const auto& k : j.at("locked_sections")) s.locked.insert(*emr::section_from_string(k.get<std::string>()));
        for (auto it = j.at("audio").begin(); it != j["audio"].end(); ++it)
            s.audio[*emr::section_from_string(it.key())] = it.value().get<std::vector<std::string>>();
        for (auto it = j.at("transcripts").begin(); it != j["transcripts"].end(); ++it)
            s.transcripts[*emr::section_from_string(it.key())] = transcript::transcript_from_json(it.value());
        for (auto it = j.at("clarifications").begin(); it != j["clarifications"].end(); ++it) {
            auto& v = s.clarifications[*emr::section_from_string(it.key())];
            for (const auto& q : it.value()) v.push_back(llm::question_from_json(q));
        }
        for (auto it = j.at("clarification_answers").begin(); it != j["clarification_answers"].end(); ++it) {
            auto& v = s.clarification_answers[*emr::section_from_string(it.key())];
            for (const auto& a : it.value()) v.push_back({a.at("question_id").get<int>(), a.at("answer").get<std::string>()});
        }
        if (!j.at("cursor").is_null())
            s.cursor = Cursor{section_of(j["cursor"], "section"), j["cursor"].at("question_id").get<int>()};
        if (!j.at("prior").is_null()) s.prior = emr::document_from_json(j["prior"], schema);
        if (!j.at("emr").is_null()) s.emr = emr::document_from_json(j["emr"], schema);
        if (!j.at("generated_report").is_null()) s.generated_report = rules::report_from_json(j["generated_report"]);
        if (!j.at("report").is_null()) s.report = rules::report_from_json(j["report"]);
        for (const auto& q : j.at("medical_questions")) s.medical_questions.push_back(llm::medical_question_from_json(q));
        s.medical_answers = medical_answers_from_json(j.at("medical_answers"));
        for (const auto& a : j.at("acknowledgements")) s.acknowledgements.insert(a.get<std::string>());
        if (!j.at("ultrasound").is_null()) {
            UltrasoundStage u;
            u.image_digest = j["ultrasound"].at("image_digest").get<std::string>();
            u.staged = j["ultrasound"].at("staged").get<ultrasound::Findings>();
            if (!j["ultrasound"].at("warning").is_null()) u.warning = j["ultrasound"]["warning"].get<std::string>();
            s.ultrasound = std::move(u);
        }
        for (const auto& v : j.at("surveys")) s.surveys.push_back(v);
        s.warnings = j.at("warnings").get<std::vector<std::string>>();
        for (const auto& e : j.at("events")) s.events.push_back(event_from_json(e));
        return s;
    } catch (const Json::exception& ex) {
        throw ParseError(std::string("visit session: ") + ex.what(), "session");
    }
}

// ---------------------------------------------------------------------------
// Engine

VisitEngine::VisitEngine(const emr::Schema& schema, const lexicon::Lexicon& lexicon,
                         const llm::Orchestrator& orchestrator, const rules::ThresholdRuleSet& rules,
                         const retrieval::Index* guidelines, Clock clock, WorkflowConfig config)
    : schema_(schema), lexicon_(lexicon), orchestrator_(orchestrator), rules_(rules), guidelines_(guidelines),
      clock_(std::move(clock)), config_(config) {}

void VisitEngine::append(VisitSession& s, const Caller& by, VisitState to, std::string kind, Json payload) const {
    TransitionEvent e;
    e.seq = s.events.size() + 1;
    e.timestamp = format_timestamp(clock_());
    e.actor = by.actor;
    e.from = s.events.empty() ? VisitState::Registered : s.state;
    e.to = to;
    e.kind = std::move(kind);
    e.payload = std::move(payload);
    e.prev_digest = s.events.empty() ? std::string() : s.events.back().digest;
    e.digest = event_digest(e);
    apply_event(s, e, schema_);
}

void VisitEngine::check_caller(const VisitSession& s, const Caller& by) const {
    if (s.state == VisitState::Finalized) throw StateError("visit " + s.visit_id + " is finalized");
    if (by.expected_version && *by.expected_version != s.version())
        throw ConflictError("visit " + s.visit_id + " is at version " + std::to_string(s.version()) + ", not " +
                            std::to_string(*by.expected_version));
}

namespace {

void require_state(const VisitSession& s, VisitState expected, std::string_view op) {
    if (s.state != expected)
        throw StateError(std::string(op) + " requires state " + std::string(to_string(expected)) + ", visit is " +
                         std::string(to_string(s.state)));
}

void set_derived(emr::Document& doc, const std::string& id, emr::FieldValue v) {
    auto p = doc.provenance.find(id);
    if (p != doc.provenance.end() && p->second == emr::Provenance::ClinicianEdited) return;
    doc.values[id] = std::move(v);
    doc.provenance[id] = emr::Provenance::Deterministic;
}

} // namespace

emr::Document VisitEngine::derive(emr::Document doc, const VisitSession& s) const {
    using emr::Numeric;
    using emr::Unit;
    const auto vit = s.vitals.value_or(emr::VitalSigns{});
    if (vit.height_cm) set_derived(doc, "height", Numeric{*vit.height_cm, Unit::Cm});
    if (vit.weight_kg) set_derived(doc, "weight", Numeric{*vit.weight_kg, Unit::Kg});
    if (vit.systolic_mmHg) set_derived(doc, "bp_systolic", Numeric{*vit.systolic_mmHg, Unit::MmHg});
    if (vit.diastolic_mmHg) set_derived(doc, "bp_diastolic", Numeric{*vit.diastolic_mmHg, Unit::MmHg});
    if (vit.height_cm && vit.weight_kg) {
        try {
            set_derived(doc, "bmi", Numeric{rules::compute_bmi(*vit.weight_kg, *vit.height_cm), Unit::KgPerM2});
        } catch (const ValidationError&) {
        }
    }
    auto lmp = doc.values.find("lmp");
    const auto on = emr::parse_date(s.visit_date);
    if (lmp != doc.values.end() && on)
        if (const auto* d = std::get_if<emr::Date>(&lmp->second)) {
            try {
                const auto g = rules::gestation(d->date, *on);
                if (!g.implausible) {
                    set_derived(doc, "gestational_age", emr::Text{rules::format_gestation(g)});
                    set_derived(doc, "edd", emr::Date{g.edd});
                }
            } catch (const ValidationError&) {
            }
        }
    return doc;
}

rules::RedFlagReport VisitEngine::deterministic_report(const emr::Document& doc, const emr::VitalSigns& vitals) const {
    rules::RedFlagReport r;
    r.flags = rules::evaluate_thresholds(rules::collect_measurements(doc, vitals), rules_);
    for (auto& f : rules::detect_missing(doc, schema_, vitals)) r.flags.push_back(std::move(f));
    r.doc_ref = sha256_hex(emr::serialize(doc, schema_));
    r.rules_version = rules_.version;
    return r;
}

VisitSession VisitEngine::start_visit(const std::string& visit_id, const std::string& mr_number, VisitKind kind,
                                      const emr::Document* prior, const Caller& by) const {
    if (text::trim(visit_id).empty()) throw ValidationError("visit id is empty", "visit_id");
    if (text::trim(mr_number).empty()) throw ValidationError("MR number is empty", "mr_number");
    if (kind == VisitKind::Returning && !prior) throw ValidationError("a returning visit needs the prior record", "prior");
    Json prior_json = nullptr;
    if (prior) {
        if (prior->schema_version != schema_.version())
            throw ValidationError("prior record uses schema " + prior->schema_version, "prior");
        const auto report = emr::validate_document(*prior, schema_);
        if (!report.ok())
            throw ValidationError("prior record is invalid: " + report.violations.front().message,
                                  report.violations.front().field_id);
        prior_json = emr::document_to_json(*prior, schema_);
    }
    VisitSession s;
    append(s, by, VisitState::Registered, "visit_started",
           {{"visit_id", visit_id}, {"mr_number", mr_number}, {"kind", to_string(kind)}, {"prior", std::move(prior_json)}});
    return s;
}

void VisitEngine::enter_vitals(VisitSession& s, const emr::VitalSigns& vitals, const Caller& by) const {
    check_caller(s, by);
    require_state(s, VisitState::Registered, "enter_vitals");
    const auto problems = emr::validate_vitals(vitals);
    if (!problems.empty()) throw ValidationError("invalid vital signs: " + text::join(problems, "; "), "vitals");
    append(s, by, VisitState::Recording, "vitals_entered", {{"vitals", emr::vitals_to_json(vitals)}});
}

void VisitEngine::record_audio(VisitSession& s, emr::SectionKind section, const std::string& digest,
                               const Caller& by) const {
    check_caller(s, by);
    require_state(s, VisitState::Recording, "record_audio");
    if (is_locked(s, section))
        throw ValidationError("section " + std::string(emr::to_string(section)) + " is locked for returning visits",
                              std::string(emr::to_string(section)));
    if (digest.empty()) throw ValidationError("recording digest is empty", "digest");
    append(s, by, VisitState::Recording, "audio_recorded", {{"section", emr::to_string(section)}, {"digest", digest}});
}

void VisitEngine::generate(VisitSession& s, const Caller& by) const {
    std::vector<llm::SectionInput> inputs;
    for (auto k : open_sections(s)) inputs.push_back({s.transcripts.at(k), s.clarifications[k], s.clarification_answers[k]});
    auto doc = orchestrator_.generate_emr(inputs, s.prior ? &*s.prior : nullptr);
    doc = derive(std::move(doc), s);
    const auto report = deterministic_report(doc, s.vitals.value_or(emr::VitalSigns{}));
    append(s, by, VisitState::EmrReview, "emr_generated",
           {{"document", emr::document_to_json(doc, schema_)}, {"report", rules::report_to_json(report)}});
}

void VisitEngine::attach_transcript(VisitSession& s, const transcript::SectionTranscript& t, const Caller& by) const {
    check_caller(s, by);
    require_state(s, VisitState::Recording, "attach_transcript");
    if (is_locked(s, t.section))
        throw ValidationError("section " + std::string(emr::to_string(t.section)) + " is locked for returning visits",
                              std::string(emr::to_string(t.section)));
    if (text::trim(t.collapsed_text).empty()) throw ValidationError("transcript is empty", "transcript");
    const auto questions = orchestrator_.clarify(t);

    auto next = s;
    bool complete = true;
    for (auto k : open_sections(next))
        if (k != t.section && next.section_status[k] != SectionStatus::Transcribed &&
            next.section_status[k] != SectionStatus::Clarified)
            complete = false;
    Json qs = Json::array();
    for (const auto& q : questions) qs.push_back(llm::question_to_json(q));
    append(next, by, complete ? VisitState::Clarifying : VisitState::Recording, "transcript_attached",
           {{"section", emr::to_string(t.section)}, {"transcript", transcript::transcript_to_json(t)}, {"questions", qs}});
    if (complete && !next.cursor) generate(next, by);
    s = std::move(next);
}

void VisitEngine::answer_clarification(VisitSession& s, const llm::ClarificationAnswer& answer,
                                       std::optional<emr::SectionKind> section, const Caller& by) const {
    check_caller(s, by);
    require_state(s, VisitState::Clarifying, "answer_clarification");
    if (!s.cursor) throw StateError("no clarification question is pending");
    if (section && *section != s.cursor->section)
        throw StateError("clarifications for " + std::string(emr::to_string(s.cursor->section)) + " come first");
    if (answer.question_id != s.cursor->ordinal)
        throw StateError("question " + std::to_string(s.cursor->ordinal) + " of " +
                         std::string(emr::to_string(s.cursor->section)) + " must be answered next");
    if (text::trim(answer.answer).empty()) throw ValidationError("answer is empty", "answer");
    auto next = s;
    append(next, by, VisitState::Clarifying, "clarification_answered",
           {{"section", emr::to_string(s.cursor->section)}, {"question_id", answer.question_id}, {"answer", answer.answer}});
    if (!next.cursor) generate(next, by);
    s = std::move(next);
}

void VisitEngine::finalize_emr(VisitSession& s, const std::vector<emr::Edit>& edits, const Caller& by) const {
    check_caller(s, by);
    require_state(s, VisitState::EmrReview, "finalize_emr");
    for (const auto& [id, _] : edits) {
        const auto* spec = schema_.find(id);
        if (!spec) throw ValidationError("unknown field '" + id + "'", id);
        if (is_locked(s, spec->section)) throw ValidationError("field " + id + " belongs to a locked section", id);
    }
    auto doc = emr::apply_edits(*s.emr, edits, schema_);
    doc = derive(std::move(doc), s);
    const auto report = deterministic_report(doc, s.vitals.value_or(emr::VitalSigns{}));
    Json questions = Json::array();
    Json warning = nullptr;
    try {
        for (const auto& q : orchestrator_.generate_medical_questions(doc)) questions.push_back(llm::medical_question_to_json(q));
    } catch (const BackendError& e) {
        warning = std::string("medical questions unavailable: ") + e.what();
    }
    append(s, by, VisitState::MedicalQuestions, "emr_finalized",
           {{"edits", edits_to_json(edits)},
            {"document", emr::document_to_json(doc, schema_)},
            {"report", rules::report_to_json(report)},
            {"medical_questions", std::move(questions)},
            {"warning", std::move(warning)}});
}

void VisitEngine::complete_medical_questions(VisitSession& s, const std::vector<llm::MedicalAnswer>& answers,
                                             bool allow_skip, const Caller& by) const {
    check_caller(s, by);
    require_state(s, VisitState::MedicalQuestions, "complete_medical_questions");
    std::set<std::string> answered;
    for (const auto& a : answers) {
        if (std::none_of(s.medical_questions.begin(), s.medical_questions.end(),
                         [&](const auto& q) { return q.id == a.question_id; }))
            throw ValidationError("unknown medical question '" + a.question_id + "'", "answers");
        if (a.answer && !text::trim(*a.answer).empty()) answered.insert(a.question_id);
    }
    if (!allow_skip)
        for (const auto& q : s.medical_questions)
            if (!answered.count(q.id)) throw ValidationError("medical question '" + q.id + "' is unanswered", "answers");

    auto delta = orchestrator_.summarize_question_answers(*s.emr, s.medical_questions, answers);
    if (s.kind == VisitKind::Returning) {
        llm::SummaryDelta moved;
        for (auto& [k, text] : delta) {
            auto& slot = moved[is_locked(s, k) ? emr::SectionKind::PresentPregnancy : k];
            slot += slot.empty() ? text : " " + text;
        }
        delta = std::move(moved);
    }
    const auto doc = llm::apply_summary(*s.emr, delta);
    const auto vitals = s.vitals.value_or(emr::VitalSigns{});
    const auto det = deterministic_report(doc, vitals);

    std::vector<retrieval::Snippet> snippets;
    std::vector<rules::NarrativeFlag> narrative;
    Json warning = nullptr;
    if (config_.narrative_flags) {
        try {
            if (guidelines_) {
                const auto query = retrieval::flags_to_query(det.flags, lexicon_);
                if (!query.empty()) snippets = retrieval::retrieve(query, *guidelines_, config_.snippets_k);
            }
            narrative = orchestrator_.generate_redflag_narrative(doc, rules_, snippets);
        } catch (const BackendError& e) {
            narrative.clear();
            warning = std::string("red-flag narrative unavailable: ") + e.what();
        }
    }
    auto report = rules::merge_reports(det.flags, narrative);
    report.doc_ref = det.doc_ref;
    report.rules_version = det.rules_version;
    Json snippet_ids = Json::array();
    for (const auto& sn : snippets) snippet_ids.push_back(sn.id());
    append(s, by, VisitState::RedFlagReview, "medical_questions_completed",
           {{"answers", medical_answers_to_json(answers)},
            {"summary", summary_to_json(delta)},
            {"snippets", std::move(snippet_ids)},
            {"document", emr::document_to_json(doc, schema_)},
            {"report", rules::report_to_json(report)},
            {"warning", std::move(warning)}});
}

void VisitEngine::acknowledge_flags(VisitSession& s, const std::vector<std::string>& ids, const Caller& by) const {
    check_caller(s, by);
    require_state(s, VisitState::RedFlagReview, "acknowledge_flags");
    if (ids.empty()) throw ValidationError("no flags to acknowledge", "flag_ids");
    for (const auto& id : ids)
        if (std::none_of(s.report->flags.begin(), s.report->flags.end(), [&](const auto& f) { return f.id == id; }))
            throw ValidationError("unknown flag '" + id + "'", "flag_ids");
    append(s, by, VisitState::RedFlagReview, "flags_acknowledged", {{"flag_ids", ids}});
}

void VisitEngine::save_visit(VisitSession& s, const Caller& by) const {
    check_caller(s, by);
    require_state(s, VisitState::RedFlagReview, "save_visit");
    auto outstanding = outstanding_critical(s);
    if (!outstanding.empty()) throw SaveBlockedError(std::move(outstanding));
    append(s, by, config_.ultrasound_step ? VisitState::UltrasoundAttach : VisitState::Finalized, "visit_saved",
           Json::object());
}

void VisitEngine::attach_ultrasound(VisitSession& s, std::string_view image, const ultrasound::Extractor& extractor,
                                    const Caller& by) const {
    check_caller(s, by);
    require_state(s, VisitState::UltrasoundAttach, "attach_ultrasound");
    if (image.empty()) throw ValidationError("ultrasound image is empty", "image");
    ultrasound::Findings staged;
    Json warning = nullptr;
    try {
        staged = extractor.extract(image);
    } catch (const BackendError& e) {
        warning = std::string("ultrasound extraction failed: ") + e.what();
    }
    append(s, by, VisitState::UltrasoundAttach, "ultrasound_attached",
           {{"image_digest", sha256_hex(image)}, {"extractor", extractor.id()}, {"staged", staged}, {"warning", warning}});
}

void VisitEngine::complete_visit(VisitSession& s, bool confirm, const Caller& by) const {
    check_caller(s, by);
    require_state(s, VisitState::UltrasoundAttach, "complete_visit");
    auto doc = *s.emr;
    if (confirm && s.ultrasound && !s.ultrasound->staged.empty()) {
        const auto& st = s.ultrasound->staged;
        if (auto it = st.find("fetal_movement"); it != st.end()) {
            doc.values["fetal_movement"] = emr::Text{it->second};
            doc.provenance["fetal_movement"] = emr::Provenance::ClinicianEdited;
        }
        std::vector<std::string> parts;
        for (const auto& [key, label] : {std::pair{"placenta_presence", "placenta"}, std::pair{"scan_date", "scan date"},
                                         std::pair{"anomalies", "anomalies"}})
            if (auto it = st.find(key); it != st.end()) parts.push_back(std::string(label) + ": " + it->second);
        if (!parts.empty()) {
            auto& info = doc.additional_info[emr::SectionKind::PresentPregnancy];
            const auto note = "Ultrasound findings (" + text::join(parts, "; ") + ").";
            info += info.empty() ? note : " " + note;
        }
    }
    append(s, by, VisitState::Finalized, "visit_completed",
           {{"confirmed", confirm}, {"document", emr::document_to_json(doc, schema_)}});
}

void VisitEngine::submit_survey(VisitSession& s, const std::string& survey, const Json& responses,
                                const Caller& by) const {
    check_caller(s, by);
    if (text::trim(survey).empty()) throw ValidationError("survey name is empty", "survey");
    if (!responses.is_object()) throw ValidationError("survey responses must be an object", "responses");
    append(s, by, s.state, "survey_submitted", {{"survey", survey}, {"responses", responses}});
}

} // namespace vemr::workflow
