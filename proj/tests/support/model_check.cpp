#include "model_check.hpp"

#include <algorithm>
#include <optional>
#include <random>

#include "vemr/digest.hpp"
#include "vemr/error.hpp"
#include "vemr/text.hpp"
#include "vemr/workflow.hpp"

namespace vemr::testing {

namespace {

using emr::SectionKind;
using workflow::VisitEngine;
using workflow::VisitSession;
using workflow::VisitState;

struct World {
    emr::Schema schema;
    lexicon::Lexicon lexicon;
    rules::ThresholdRuleSet rules;
    llm::PromptLibrary prompts;
    retrieval::Index index;
    Json llm_config;
    Json ultrasound_config;
    std::map<SectionKind, transcript::SectionTranscript> new_transcripts;
    std::map<SectionKind, transcript::SectionTranscript> return_transcripts;
    emr::Document prior;

    World() {
        const std::string data = VEMR_DATA_DIR;
        schema = emr::load_schema(data + "/schema/emr_schema.json");
        lexicon = lexicon::load_lexicon_file(data + "/lexicon/medical_dictionary.txt");
        rules = rules::load_rules(data + "/rules/thresholds.json");
        prompts = llm::load_prompt_library(data + "/prompts");
        index = retrieval::index_corpus(retrieval::load_corpus_dir(data + "/guidelines"));
        llm_config = Json::parse(text::read_file(data + "/mock/llm_rules.json"));
        ultrasound_config = Json::parse(text::read_file(data + "/mock/ultrasound.json"));
        const auto speech = transcript::MockSpeechBackend::from_fixture_file(data + "/mock/speech_fixtures.json");
        const std::pair<const char*, SectionKind> fixtures[] = {
            {"new_pmh", SectionKind::PersonalMedicalHistory}, {"new_family", SectionKind::FamilyHistory},
            {"new_socio", SectionKind::SocioEconomicHistory}, {"new_past", SectionKind::PastPregnancy},
            {"new_present", SectionKind::PresentPregnancy},   {"new_plan", SectionKind::ProposedPlan},
            {"return_present", SectionKind::PresentPregnancy}, {"return_plan", SectionKind::ProposedPlan},
        };
        for (const auto& [id, k] : fixtures) {
            auto t = transcript::transcribe_section(transcript::make_recording(speech.fixture_audio(id)), speech, k);
            (std::string(id).rfind("new_", 0) == 0 ? new_transcripts : return_transcripts)[k] = std::move(t);
        }
        prior = scripted_prior();
    }

    // A completed new visit, used as the prior record of returning visits.
    emr::Document scripted_prior() const {
        llm::MockLlmBackend backend(llm_config);
        llm::Orchestrator orch(schema, lexicon, prompts, backend);
        VisitEngine engine(schema, lexicon, orch, rules, &index,
                           workflow::stepping_clock(std::chrono::sys_days(std::chrono::year(2024) / 3 / 1)));
        auto s = engine.start_visit("prior", "MR-PRIOR", workflow::VisitKind::New, nullptr);
        engine.enter_vitals(s, {154, 90, 150, 95, 37, 88});
        for (const auto& [k, t] : new_transcripts) engine.attach_transcript(s, t);
        while (s.cursor) engine.answer_clarification(s, {s.cursor->ordinal, "Yes."});
        engine.finalize_emr(s, {});
        engine.complete_medical_questions(s, {});
        const auto ids = workflow::outstanding_critical(s);
        if (!ids.empty()) engine.acknowledge_flags(s, ids);
        engine.save_visit(s);
        engine.complete_visit(s, false);
        return *s.emr;
    }
};

const World& world() {
    static const World w;
    return w;
}

// Cursor as the invariant defines it: first unanswered question in schema
// section order, locked sections excluded.
std::optional<workflow::Cursor> expected_cursor(const VisitSession& s) {
    if (s.state != VisitState::Clarifying) return std::nullopt;
    for (auto k : emr::kAllSections) {
        if (s.locked.count(k)) continue;
        auto q = s.clarifications.find(k);
        if (q == s.clarifications.end()) continue;
        auto a = s.clarification_answers.find(k);
        const std::size_t n = a == s.clarification_answers.end() ? 0 : a->second.size();
        if (n < q->second.size()) return workflow::Cursor{k, static_cast<int>(n) + 1};
    }
    return std::nullopt;
}

const SectionKind kLocked[] = {SectionKind::PersonalMedicalHistory, SectionKind::FamilyHistory,
                               SectionKind::SocioEconomicHistory, SectionKind::PastPregnancy};

class Sequence {
public:
    Sequence(const World& w, std::uint64_t seed)
        : w_(w), rng_(seed), backend_(w.llm_config), extractor_(w.ultrasound_config),
          orch_(w.schema, w.lexicon, w.prompts, backend_),
          engine_(w.schema, w.lexicon, orch_, w.rules, &w.index,
                  workflow::stepping_clock(std::chrono::sys_days(std::chrono::year(2024) / 9 / 3))) {}

    // Runs the sequence; returns the first violation or an empty string.
    std::string run(std::size_t max_events, ModelCheckReport& report) {
        returning_ = coin(0.3);
        s_ = engine_.start_visit("V-1", "MR-1", returning_ ? workflow::VisitKind::Returning : workflow::VisitKind::New,
                                 returning_ ? &w_.prior : nullptr);
        for (std::size_t i = 0; i < max_events; ++i) {
            const auto before = s_;
            const auto expected_answer_cursor = s_.cursor;
            bool accepted = true;
            std::string op;
            try {
                op = step();
            } catch (const Error&) {
                accepted = false;
            }
            ++report.operations;
            accepted ? ++report.accepted : ++report.rejected;
            ++report.states_reached[std::string(workflow::to_string(s_.state))];
            if (auto v = check(before, accepted, expected_answer_cursor); !v.empty()) return op + ": " + v;
        }
        if (s_.state == VisitState::Finalized) ++report.finalized;
        if (workflow::replay(s_.events, w_.schema) != s_) return "replay differs from the live session";
        if (workflow::session_from_json(workflow::session_to_json(s_, w_.schema), w_.schema) != s_)
            return "snapshot round-trip differs from the live session";
        return {};
    }

    const VisitSession& session() const { return s_; }

private:
    bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }
    SectionKind any_section() { return emr::kAllSections[std::uniform_int_distribution<std::size_t>(0, 5)(rng_)]; }

    const transcript::SectionTranscript& transcript_for(SectionKind k) {
        if (returning_) {
            auto it = w_.return_transcripts.find(k);
            if (it != w_.return_transcripts.end()) return it->second;
        }
        return w_.new_transcripts.at(k);
    }

    std::string step() {
        if (coin(0.03)) backend_.inject_outage(static_cast<llm::Task>(std::uniform_int_distribution<int>(0, 4)(rng_)), 1);
        const int r = std::uniform_int_distribution<int>(0, 99)(rng_);
        // Mostly the operation the current state expects, sometimes anything.
        const auto state = coin(0.8) ? s_.state : static_cast<VisitState>(std::uniform_int_distribution<int>(0, 7)(rng_));
        switch (state) {
        case VisitState::Registered:
            if (r < 10) {
                engine_.enter_vitals(s_, {150, 60, 80, 120, {}, {}});
                return "vitals(invalid)";
            }
            engine_.enter_vitals(s_, {154, r < 50 ? 90.0 : 60.0, r < 70 ? 150.0 : 120.0, 80, 37, 88});
            return "vitals";
        case VisitState::Recording: {
            const auto k = any_section();
            if (r < 40) {
                engine_.record_audio(s_, k, sha256_hex(std::to_string(r)));
                return "record_audio";
            }
            engine_.attach_transcript(s_, transcript_for(k));
            return "attach_transcript";
        }
        case VisitState::Clarifying: {
            if (s_.cursor && r < 75) {
                engine_.answer_clarification(s_, {s_.cursor->ordinal, "Yes, that is right."}, s_.cursor->section);
            } else {
                engine_.answer_clarification(s_, {std::uniform_int_distribution<int>(0, 3)(rng_), r < 90 ? "No." : " "},
                                             any_section());
            }
            return "answer_clarification";
        }
        case VisitState::EmrReview: {
            std::vector<emr::Edit> edits;
            if (r < 30) edits.push_back({"presentation", emr::Text{"breech"}});
            else if (r < 45) edits.push_back({"smoking", emr::Affirmed{}});
            else if (r < 50) edits.push_back({"bmi", emr::Denied{}});
            engine_.finalize_emr(s_, edits);
            return "finalize_emr";
        }
        case VisitState::MedicalQuestions: {
            std::vector<llm::MedicalAnswer> answers;
            for (const auto& q : s_.medical_questions)
                if (coin(0.6)) answers.push_back({q.id, coin(0.8) ? std::optional<std::string>("Nothing notable.") : std::nullopt});
            if (r < 5) answers.push_back({"not-a-question", std::string("x")});
            engine_.complete_medical_questions(s_, answers, r >= 20);
            return "medical_questions";
        }
        case VisitState::RedFlagReview: {
            if (r < 45) {
                std::vector<std::string> ids;
                if (s_.report)
                    for (const auto& f : s_.report->flags)
                        if (coin(0.5)) ids.push_back(f.id);
                if (r < 5) ids.push_back("rule.unknown");
                engine_.acknowledge_flags(s_, ids);
                return "acknowledge";
            }
            if (r < 90) {
                engine_.save_visit(s_);
                return "save";
            }
            engine_.submit_survey(s_, "red_flag_feedback", {{"accurate", true}});
            return "survey";
        }
        case VisitState::UltrasoundAttach:
            if (r < 50) {
                if (coin(0.2)) extractor_.inject_outage(1);
                engine_.attach_ultrasound(s_, r < 5 ? std::string() : "image-" + std::to_string(r), extractor_);
                return "ultrasound";
            }
            engine_.complete_visit(s_, coin(0.5));
            return "complete";
        case VisitState::Finalized:
            engine_.submit_survey(s_, "emr_feedback", {{"usefulness", 4}});
            return "survey";
        }
        return "none";
    }

    std::string check(const VisitSession& before, bool accepted, const std::optional<workflow::Cursor>& cursor) {
        if (!accepted) {
            if (s_ != before) return "rejected operation changed the session";
            return {};
        }
        if (before.state == VisitState::Finalized) return "operation accepted after finalization";
        if (s_.events.size() <= before.events.size()) return "accepted operation appended no event";
        for (std::size_t i = 0; i < before.events.size(); ++i)
            if (s_.events[i] != before.events[i]) return "stored event rewritten";
        for (std::size_t i = before.events.size(); i < s_.events.size(); ++i) {
            const auto& e = s_.events[i];
            if (!workflow::transition_allowed(e.from, e.to)) return "illegal transition " + e.kind;
            if (e.seq != i + 1) return "sequence gap";
            if (e.kind == "clarification_answered") {
                if (i != before.events.size()) return "answer was not the first event of its operation";
                if (!cursor) return "answer accepted with no cursor";
                if (e.payload.at("section") != emr::to_string(cursor->section) ||
                    e.payload.at("question_id") != cursor->ordinal)
                    return "answer accepted out of cursor order";
            }
            if (returning_ && (e.kind == "audio_recorded" || e.kind == "transcript_attached")) {
                const auto k = emr::section_from_string(e.payload.at("section").get<std::string>());
                if (std::find(std::begin(kLocked), std::end(kLocked), *k) != std::end(kLocked))
                    return "locked section recorded";
            }
        }
        if (s_.cursor != expected_cursor(s_)) return "cursor is not the first unanswered question";
        if (returning_ && s_.emr) {
            for (auto k : kLocked) {
                for (const auto& spec : w_.schema.section(k).fields)
                    if (s_.emr->value(spec.id) != w_.prior.value(spec.id)) return "locked field " + spec.id + " changed";
                auto a = s_.emr->additional_info.find(k);
                auto b = w_.prior.additional_info.find(k);
                if ((a == s_.emr->additional_info.end()) != (b == w_.prior.additional_info.end()) ||
                    (a != s_.emr->additional_info.end() && a->second != b->second))
                    return "locked section notes changed";
            }
        }
        if (s_.state == VisitState::UltrasoundAttach || s_.state == VisitState::Finalized) {
            if (!workflow::outstanding_critical(s_).empty()) return "saved with unacknowledged critical flags";
            if (!s_.report) return "saved without a red-flag report";
            for (const auto& f : s_.report->flags)
                if (f.category == rules::FlagCategory::Critical && !s_.acknowledgements.count(f.id))
                    return "critical flag " + f.id + " not acknowledged at save";
        }
        return {};
    }

    const World& w_;
    std::mt19937_64 rng_;
    llm::MockLlmBackend backend_;
    ultrasound::MockExtractor extractor_;
    llm::Orchestrator orch_;
    VisitEngine engine_;
    VisitSession s_;
    bool returning_ = false;
};

} // namespace

ModelCheckReport run_model_check(const ModelCheckOptions& options) {
    const auto& w = world();
    const auto n = static_cast<std::ptrdiff_t>(options.sequences);
    std::vector<ModelCheckReport> parts(options.sequences);
    std::vector<std::string> verdicts(options.sequences);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const auto seed = options.seed * 1000003 + idx;
        Sequence seq(w, seed);
        auto v = seq.run(options.max_events, parts[idx]);
        if (v.empty() && options.rerun_every && idx % options.rerun_every == 0) {
            ModelCheckReport scratch;
            Sequence again(w, seed);
            again.run(options.max_events, scratch);
            if (again.session().events != seq.session().events) v = "rerun from the same seed diverged";
        }
        verdicts[idx] = std::move(v);
    }

    ModelCheckReport report;
    for (std::size_t i = 0; i < options.sequences; ++i) {
        const auto& p = parts[i];
        ++report.sequences;
        report.operations += p.operations;
        report.accepted += p.accepted;
        report.rejected += p.rejected;
        report.finalized += p.finalized;
        for (const auto& [k, c] : p.states_reached) report.states_reached[k] += c;
        if (!verdicts[i].empty() && report.violations.size() < 10)
            report.violations.push_back("sequence " + std::to_string(i) + ": " + verdicts[i]);
    }
    return report;
}

} // namespace vemr::testing
