#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "vemr/emr.hpp"
#include "vemr/error.hpp"
#include "vemr/json.hpp"
#include "vemr/lexicon.hpp"
#include "vemr/llm.hpp"
#include "vemr/retrieval.hpp"
#include "vemr/rules.hpp"
#include "vemr/transcript.hpp"
#include "vemr/ultrasound.hpp"

namespace vemr::workflow {

enum class VisitState {
    Registered,
    Recording,
    Clarifying,
    EmrReview,
    MedicalQuestions,
    RedFlagReview,
    UltrasoundAttach,
    Finalized,
};

/// Wire names: "registered", "recording", "clarifying", "emr_review",
/// "medical_questions", "red_flag_review", "ultrasound_attach", "finalized".
std::string_view to_string(VisitState s) noexcept;
std::optional<VisitState> state_from_string(std::string_view s) noexcept;

/// Edges of the visit graph. Finalized has none.
bool transition_allowed(VisitState from, VisitState to) noexcept;

enum class VisitKind { New, Returning };
std::string_view to_string(VisitKind k) noexcept;
std::optional<VisitKind> visit_kind_from_string(std::string_view s) noexcept;

enum class SectionStatus { Pending, Recorded, Transcribed, Clarified };
std::string_view to_string(SectionStatus s) noexcept;

/// Next clarification to answer: `ordinal` is 1-based within `section`.
struct Cursor {
    emr::SectionKind section = emr::SectionKind::PersonalMedicalHistory;
    int ordinal = 1;
    bool operator==(const Cursor&) const = default;
};

struct TransitionEvent {
    std::uint64_t seq = 0; // 1-based
    std::string timestamp; // UTC, seconds precision
    std::string actor;
    VisitState from = VisitState::Registered;
    VisitState to = VisitState::Registered;
    std::string kind;
    Json payload;
    std::string prev_digest;
    std::string digest; // SHA-256 over the fields above
    bool operator==(const TransitionEvent&) const = default;
};

/// Digest an event should carry given its other fields.
std::string event_digest(const TransitionEvent& e);

struct UltrasoundStage {
    std::string image_digest;
    ultrasound::Findings staged;
    std::optional<std::string> warning;
    bool operator==(const UltrasoundStage&) const = default;
};

struct VisitSession {
    std::string visit_id;
    std::string mr_number;
    VisitKind kind = VisitKind::New;
    VisitState state = VisitState::Registered;
    std::string visit_date; // ISO date of the first event
    std::optional<emr::VitalSigns> vitals;
    std::map<emr::SectionKind, SectionStatus> section_status;
    std::set<emr::SectionKind> locked;
    std::map<emr::SectionKind, std::vector<std::string>> audio; // recording digests
    std::map<emr::SectionKind, transcript::SectionTranscript> transcripts;
    std::map<emr::SectionKind, std::vector<llm::ClarificationQuestion>> clarifications;
    std::map<emr::SectionKind, std::vector<llm::ClarificationAnswer>> clarification_answers;
    std::optional<Cursor> cursor;
    std::optional<emr::Document> prior;
    std::optional<emr::Document> emr;
    std::optional<rules::RedFlagReport> generated_report; // before clinician edits
    std::optional<rules::RedFlagReport> report;
    std::vector<llm::MedicalQuestion> medical_questions;
    std::vector<llm::MedicalAnswer> medical_answers;
    std::set<std::string> acknowledgements;
    std::optional<UltrasoundStage> ultrasound;
    std::vector<Json> surveys;
    std::vector<std::string> warnings;
    std::vector<TransitionEvent> events;

    std::uint64_t version() const noexcept { return events.size(); }
    bool operator==(const VisitSession&) const = default;
};

/// Sections the visit must record: all six for new visits, the unlocked
/// ones for returning visits.
std::vector<emr::SectionKind> open_sections(const VisitSession& s);

/// Critical flag ids of the current report not yet acknowledged.
std::vector<std::string> outstanding_critical(const VisitSession& s);

Json session_to_json(const VisitSession& s, const emr::Schema& schema);
VisitSession session_from_json(const Json& j, const emr::Schema& schema);
Json event_to_json(const TransitionEvent& e);
TransitionEvent event_from_json(const Json& j);

/// Save attempted while critical flags are unacknowledged.
class SaveBlockedError : public StateError {
public:
    explicit SaveBlockedError(std::vector<std::string> outstanding);
    const std::vector<std::string>& outstanding() const noexcept { return outstanding_; }

private:
    std::vector<std::string> outstanding_;
};

using Clock = std::function<std::chrono::system_clock::time_point()>;

/// Deterministic clock for tests and fixtures: `start`, then +`step` per call.
Clock stepping_clock(std::chrono::system_clock::time_point start, std::chrono::seconds step = std::chrono::seconds(1));

struct WorkflowConfig {
    bool ultrasound_step = true; // offer UltrasoundAttach after save, for every visit kind
    std::size_t snippets_k = 3;
    bool narrative_flags = true;
};

struct Caller {
    std::string actor = "system";
    std::optional<std::uint64_t> expected_version; // optimistic check when set
};

/// Executes visit operations. Every accepted operation appends one or more
/// events carrying everything needed to replay it; backend calls happen
/// before anything is appended, so a failed operation leaves the session
/// untouched.
class VisitEngine {
public:
    VisitEngine(const emr::Schema& schema, const lexicon::Lexicon& lexicon, const llm::Orchestrator& orchestrator,
                const rules::ThresholdRuleSet& rules, const retrieval::Index* guidelines, Clock clock,
                WorkflowConfig config = {});

    VisitSession start_visit(const std::string& visit_id, const std::string& mr_number, VisitKind kind,
                             const emr::Document* prior, const Caller& by = {}) const;
    void enter_vitals(VisitSession& s, const emr::VitalSigns& vitals, const Caller& by = {}) const;
    void record_audio(VisitSession& s, emr::SectionKind section, const std::string& digest,
                      const Caller& by = {}) const;
    void attach_transcript(VisitSession& s, const transcript::SectionTranscript& t, const Caller& by = {}) const;
    /// `section`, when given, must match the cursor's section.
    void answer_clarification(VisitSession& s, const llm::ClarificationAnswer& answer,
                              std::optional<emr::SectionKind> section = std::nullopt, const Caller& by = {}) const;
    void finalize_emr(VisitSession& s, const std::vector<emr::Edit>& edits, const Caller& by = {}) const;
    void complete_medical_questions(VisitSession& s, const std::vector<llm::MedicalAnswer>& answers,
                                    bool allow_skip = true, const Caller& by = {}) const;
    void acknowledge_flags(VisitSession& s, const std::vector<std::string>& flag_ids, const Caller& by = {}) const;
    void save_visit(VisitSession& s, const Caller& by = {}) const;
    void attach_ultrasound(VisitSession& s, std::string_view image, const ultrasound::Extractor& extractor,
                           const Caller& by = {}) const;
    /// Leaves UltrasoundAttach for Finalized, applying staged findings when
    /// `confirm` is set.
    void complete_visit(VisitSession& s, bool confirm, const Caller& by = {}) const;
    void submit_survey(VisitSession& s, const std::string& survey, const Json& responses,
                       const Caller& by = {}) const;

    /// Deterministic flags for a document: threshold rules, then missing
    /// information.
    rules::RedFlagReport deterministic_report(const emr::Document& doc, const emr::VitalSigns& vitals) const;

    const emr::Schema& schema() const noexcept { return schema_; }

private:
    void append(VisitSession& s, const Caller& by, VisitState to, std::string kind, Json payload) const;
    void check_caller(const VisitSession& s, const Caller& by) const;
    void generate(VisitSession& s, const Caller& by) const;
    emr::Document derive(emr::Document doc, const VisitSession& s) const;

    const emr::Schema& schema_;
    const lexicon::Lexicon& lexicon_;
    const llm::Orchestrator& orchestrator_;
    const rules::ThresholdRuleSet& rules_;
    const retrieval::Index* guidelines_;
    Clock clock_;
    WorkflowConfig config_;
};

/// Applies one event to a session; the only way session state changes.
/// Throws ValidationError when the event does not fit the session.
void apply_event(VisitSession& s, const TransitionEvent& e, const emr::Schema& schema);

/// Rebuilds a session from its log, verifying the digest chain.
VisitSession replay(const std::vector<TransitionEvent>& events, const emr::Schema& schema);

} // namespace vemr::workflow
