#include <doctest.h>

#include "model_check.hpp"
#include "vemr/error.hpp"
#include "vemr/text.hpp"
#include "vemr/workflow.hpp"

using namespace vemr;
using namespace vemr::workflow;
using emr::SectionKind;

namespace {

struct Rig {
    std::string data = VEMR_DATA_DIR;
    emr::Schema schema = emr::load_schema(data + "/schema/emr_schema.json");
    lexicon::Lexicon lex = lexicon::load_lexicon_file(data + "/lexicon/medical_dictionary.txt");
    rules::ThresholdRuleSet rules = rules::load_rules(data + "/rules/thresholds.json");
    llm::PromptLibrary prompts = llm::load_prompt_library(data + "/prompts");
    retrieval::Index index = retrieval::index_corpus(retrieval::load_corpus_dir(data + "/guidelines"));
    llm::MockLlmBackend backend = llm::MockLlmBackend::from_file(data + "/mock/llm_rules.json");
    ultrasound::MockExtractor extractor = ultrasound::MockExtractor::from_file(data + "/mock/ultrasound.json");
    transcript::MockSpeechBackend speech = transcript::MockSpeechBackend::from_fixture_file(data + "/mock/speech_fixtures.json");
    llm::Orchestrator orch{schema, lex, prompts, backend};
    VisitEngine engine{schema, lex, orch, rules, &index,
                       stepping_clock(std::chrono::sys_days(std::chrono::year(2024) / 9 / 3))};

    transcript::SectionTranscript heard(const std::string& fixture, SectionKind k) const {
        return transcript::transcribe_section(transcript::make_recording(speech.fixture_audio(fixture)), speech, k);
    }

    VisitSession through_recording() const {
        auto s = engine.start_visit("V-1", "MR-1", VisitKind::New, nullptr);
        engine.enter_vitals(s, {154, 90, 150, 95, 37, 88});
        const std::pair<const char*, SectionKind> plan[] = {
            {"new_plan", SectionKind::ProposedPlan},        {"new_pmh", SectionKind::PersonalMedicalHistory},
            {"new_family", SectionKind::FamilyHistory},     {"new_socio", SectionKind::SocioEconomicHistory},
            {"new_past", SectionKind::PastPregnancy},       {"new_present", SectionKind::PresentPregnancy}};
        for (const auto& [id, k] : plan) engine.attach_transcript(s, heard(id, k));
        return s;
    }
};

} // namespace

TEST_CASE("transition graph") {
    CHECK(transition_allowed(VisitState::Registered, VisitState::Recording));
    CHECK(transition_allowed(VisitState::RedFlagReview, VisitState::UltrasoundAttach));
    CHECK_FALSE(transition_allowed(VisitState::Registered, VisitState::EmrReview));
    CHECK_FALSE(transition_allowed(VisitState::EmrReview, VisitState::Clarifying));
    for (int to = 0; to < 8; ++to) CHECK_FALSE(transition_allowed(VisitState::Finalized, static_cast<VisitState>(to)));
}

TEST_CASE("clarifications follow schema order regardless of recording order") {
    Rig r;
    auto s = r.through_recording();
    REQUIRE(s.state == VisitState::Clarifying);
    REQUIRE(s.cursor.has_value());
    CHECK(s.cursor->section == SectionKind::PersonalMedicalHistory);
    CHECK(s.cursor->ordinal == 1);
    CHECK_THROWS_AS(r.engine.answer_clarification(s, {1, "Yes."}, SectionKind::ProposedPlan), StateError);
    CHECK_THROWS_AS(r.engine.answer_clarification(s, {2, "Yes."}), StateError);
    CHECK_THROWS_AS(r.engine.answer_clarification(s, {1, "  "}), ValidationError);
    r.engine.answer_clarification(s, {1, "Yes, record it as no information."});
    CHECK(s.cursor->section == SectionKind::ProposedPlan);
    r.engine.answer_clarification(s, {1, "Yes, the medicine is Duphaston."});
    CHECK(s.state == VisitState::EmrReview);
    CHECK(emr::display(s.emr->value("prescriptions")) == "duphaston twice daily");
    CHECK(emr::display(s.emr->value("gestational_age")) == "33 weeks 6 days");
    CHECK(emr::display(s.emr->value("edd")) == "2024-10-16");
    CHECK(emr::display(s.emr->value("bmi")) == "37.9 kg/m2");
}

TEST_CASE("save is blocked until every critical flag is acknowledged") {
    Rig r;
    auto s = r.through_recording();
    while (s.cursor) r.engine.answer_clarification(s, {s.cursor->ordinal, "Yes."});
    r.engine.finalize_emr(s, {{"differential_diagnosis", emr::Text{"Anemia in pregnancy"}}});
    CHECK(s.emr->provenance.at("differential_diagnosis") == emr::Provenance::ClinicianEdited);
    r.engine.complete_medical_questions(s, {});
    const auto critical = s.report->critical_ids();
    CHECK(critical == std::vector<std::string>{"rule.hypertension", "rule.obesity", "rule.anemia"});
    try {
        r.engine.save_visit(s);
        FAIL("save should be blocked");
    } catch (const SaveBlockedError& e) {
        CHECK(e.outstanding() == critical);
    }
    r.engine.acknowledge_flags(s, {critical[0], critical[1]});
    CHECK(outstanding_critical(s) == std::vector<std::string>{"rule.anemia"});
    CHECK_THROWS_AS(r.engine.save_visit(s), SaveBlockedError);
    CHECK_THROWS_AS(r.engine.acknowledge_flags(s, {"rule.nope"}), ValidationError);
    r.engine.acknowledge_flags(s, {critical[2]});
    r.engine.save_visit(s);
    CHECK(s.state == VisitState::UltrasoundAttach);
    r.engine.attach_ultrasound(s, "scan-bytes", r.extractor);
    r.engine.complete_visit(s, true);
    CHECK(s.state == VisitState::Finalized);
    CHECK(emr::display(s.emr->value("fetal_movement")) == "Present");
    CHECK_THROWS_AS(r.engine.submit_survey(s, "late", Json::object()), StateError);
    CHECK(replay(s.events, r.schema) == s);
}

TEST_CASE("optimistic version check") {
    Rig r;
    auto s = r.engine.start_visit("V-2", "MR-2", VisitKind::New, nullptr);
    CHECK_THROWS_AS(r.engine.enter_vitals(s, {154, 60, 120, 80, {}, {}}, {"dr", 0}), ConflictError);
    r.engine.enter_vitals(s, {154, 60, 120, 80, {}, {}}, {"dr", 1});
    CHECK(s.events.back().actor == "dr");
    CHECK(s.version() == 2);
}

TEST_CASE("backend failure leaves the session unchanged") {
    Rig r;
    auto s = r.engine.start_visit("V-3", "MR-3", VisitKind::New, nullptr);
    r.engine.enter_vitals(s, {154, 60, 120, 80, {}, {}});
    const auto before = s;
    r.backend.inject_outage(llm::Task::Clarify, 1);
    CHECK_THROWS_AS(r.engine.attach_transcript(s, r.heard("new_family", SectionKind::FamilyHistory)), BackendError);
    CHECK(s == before);
}

TEST_CASE("returning visits lock history sections") {
    Rig r;
    auto prior = emr::blank_document(r.schema);
    prior.values["smoking"] = emr::Denied{};
    prior.provenance["smoking"] = emr::Provenance::LlmGenerated;
    auto s = r.engine.start_visit("V-4", "MR-4", VisitKind::Returning, &prior);
    CHECK(open_sections(s) == std::vector<SectionKind>{SectionKind::PresentPregnancy, SectionKind::ProposedPlan});
    r.engine.enter_vitals(s, {154, 60, 120, 80, {}, {}});
    CHECK_THROWS_AS(r.engine.record_audio(s, SectionKind::FamilyHistory, "abc"), ValidationError);
    CHECK_THROWS_AS(r.engine.attach_transcript(s, r.heard("new_family", SectionKind::FamilyHistory)), ValidationError);
    r.engine.attach_transcript(s, r.heard("return_present", SectionKind::PresentPregnancy));
    r.engine.attach_transcript(s, r.heard("return_plan", SectionKind::ProposedPlan));
    while (s.cursor) r.engine.answer_clarification(s, {s.cursor->ordinal, "Yes."});
    REQUIRE(s.state == VisitState::EmrReview);
    CHECK(std::holds_alternative<emr::Denied>(s.emr->value("smoking")));
    CHECK_THROWS_AS(r.engine.finalize_emr(s, {{"smoking", emr::Affirmed{}}}), ValidationError);
    CHECK_THROWS_AS(r.engine.start_visit("V-5", "MR-4", VisitKind::Returning, nullptr), ValidationError);
}

TEST_CASE("events and sessions survive their wire forms; tampering is detected") {
    Rig r;
    auto s = r.through_recording();
    for (const auto& e : s.events) CHECK(event_from_json(event_to_json(e)) == e);
    CHECK(session_from_json(session_to_json(s, r.schema), r.schema) == s);
    auto events = s.events;
    events[2].actor = "mallory";
    CHECK_THROWS_AS(replay(events, r.schema), ValidationError);
    events = s.events;
    events.erase(events.begin() + 1);
    CHECK_THROWS_AS(replay(events, r.schema), ValidationError);
}

TEST_CASE("random operation sequences keep every workflow invariant") {
    testing::ModelCheckOptions opts;
    opts.sequences = 600;
    opts.seed = 42;
    const auto report = testing::run_model_check(opts);
    for (const auto& v : report.violations) MESSAGE(v);
    CHECK(report.ok());
    CHECK(report.finalized > 0);
    CHECK(report.states_reached.size() == 8);
}
