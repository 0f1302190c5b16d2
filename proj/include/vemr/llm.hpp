#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vemr/emr.hpp"
#include "vemr/error.hpp"
#include "vemr/json.hpp"
#include "vemr/lexicon.hpp"
#include "vemr/retrieval.hpp"
#include "vemr/rules.hpp"
#include "vemr/transcript.hpp"

namespace vemr::llm {

enum class Task { Clarify, FillEmr, MedicalQuestions, RedFlags, SummarizeAnswers };

std::string_view to_string(Task t) noexcept;
std::optional<Task> task_from_string(std::string_view s) noexcept;

// ---------------------------------------------------------------------------
// Structured output contracts

struct Property;

/// Minimal structural schema: enough to describe every task's output and to
/// report the first offending key path.
struct Shape {
    enum class Type { Object, Array, String, Integer, Number, Boolean };

    Type type = Type::String;
    std::vector<Property> properties;      // Object
    bool additional_properties = false;    // Object
    std::shared_ptr<const Shape> items;    // Array
    std::vector<std::string> enum_values;  // String; empty = any
    bool non_empty = false;                // String

    static Shape string(bool non_empty = false);
    static Shape one_of(std::vector<std::string> values);
    static Shape integer();
    static Shape number();
    static Shape boolean();
    static Shape array(Shape items);
    static Shape object(std::vector<Property> props, bool additional = false);
};

struct Property {
    std::string name;
    Shape shape;
    bool required = true;
};

/// Raised when a backend response breaks its contract. `path()` is a key
/// path such as `questions[1].question`.
class ContractError : public ParseError {
public:
    ContractError(const std::string& message, std::string path) : ParseError(message, std::move(path)) {}
};

struct StructuredOutputSchema {
    Task task = Task::Clarify;
    std::string name;
    Shape root;

    /// JSON Schema rendering, sent to remote backends.
    Json describe() const;
    /// Throws ContractError naming the first offending path.
    void validate(const Json& value) const;
};

StructuredOutputSchema clarify_contract();
/// One optional property per section of the schema; `required` sections
/// must be present. Field properties mirror the schema's field ids and kinds.
StructuredOutputSchema fill_emr_contract(const emr::Schema& schema, const std::vector<emr::SectionKind>& required);
StructuredOutputSchema medical_questions_contract();
StructuredOutputSchema summary_contract();
StructuredOutputSchema red_flags_contract();

// ---------------------------------------------------------------------------
// Prompts

struct PromptTemplate {
    Task task = Task::Clarify;
    std::string version;
    std::string system;
    std::string user;
};

/// Templates are `<task>.txt` files:
///
///     version: clarify/1
///     === system ===
///     ...
///     === user ===
///     ... {{placeholder}} ...
///
/// Lines starting with '#' before the first section are comments.
class PromptLibrary {
public:
    PromptLibrary() = default;
    explicit PromptLibrary(std::map<Task, PromptTemplate> templates) : templates_(std::move(templates)) {}
    const PromptTemplate& get(Task t) const;

private:
    std::map<Task, PromptTemplate> templates_;
};

PromptTemplate parse_prompt_template(Task task, std::string_view text);
PromptLibrary load_prompt_library(const std::string& dir);

/// Substitutes {{name}} placeholders. Throws ValidationError for a
/// placeholder without a value.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

struct Attachment {
    std::string name;
    std::string content;
    bool operator==(const Attachment&) const = default;
};

struct PromptBundle {
    Task task = Task::Clarify;
    std::string template_version;
    std::string system_text;
    std::string user_text;
    std::vector<Attachment> attachments;
    StructuredOutputSchema contract;
    Json context; // structured inputs, for backends that work on data rather than prose

    const Attachment* attachment(std::string_view name) const noexcept;
    /// Byte-stable text actually sent to a remote model.
    std::string render() const;
};

// ---------------------------------------------------------------------------
// Backends

struct LlmCapabilities {
    std::string id;
    bool supports_structured_output = true;
    bool deterministic = false;
};

struct LlmRequest {
    const PromptBundle* bundle = nullptr;
    std::string prompt;  // bundle->render(), plus re-ask feedback on retries
    int attempt = 1;
    std::string previous_error; // set on re-asks
};

struct LlmResponse {
    std::string text; // structured text (JSON)
};

/// Implementations must be safe for concurrent use. Transport failures raise
/// BackendError(retryable=true).
class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual const LlmCapabilities& capabilities() const = 0;
    virtual LlmResponse complete(const LlmRequest& request) const = 0;
};

/// Deterministic rule-table backend. Configuration (see data/mock/llm_rules.json):
/// clarify / fill rules keyed on lexicon-normalized phrases, conditional and
/// fallback medical questions, and narrative red-flag rules.
class MockLlmBackend : public LlmBackend {
public:
    explicit MockLlmBackend(Json config);
    static MockLlmBackend from_file(const std::string& path);

    const LlmCapabilities& capabilities() const override { return caps_; }
    LlmResponse complete(const LlmRequest& request) const override;

    /// The next `count` requests for `task` get `bad_output` instead of a
    /// real answer; used to exercise the re-ask path.
    void inject_faults(Task task, int count, std::string bad_output);
    /// The next `count` requests for `task` raise a retryable BackendError.
    void inject_outage(Task task, int count);
    int calls(Task task) const;

private:
    Json clarify(const Json& ctx) const;
    Json fill(const Json& ctx) const;
    Json questions(const Json& ctx) const;
    Json summarize(const Json& ctx) const;
    Json flags(const Json& ctx) const;

    Json config_;
    LlmCapabilities caps_;
    struct Fault {
        std::atomic<int> bad{0};
        std::atomic<int> outage{0};
        std::atomic<int> calls{0};
        std::string bad_output;
    };
    std::shared_ptr<std::array<Fault, 5>> faults_;
};

/// OpenAI-style chat-completions adapter. The bearer token is read from
/// `api_key_env` at call time.
struct HttpLlmConfig {
    std::string id = "remote-llm";
    std::string endpoint; // e.g. https://host/v1/chat/completions
    std::string model;
    std::string api_key_env = "VEMR_LLM_API_KEY";
    double timeout_s = 60.0;
};

std::unique_ptr<LlmBackend> make_http_llm_backend(const HttpLlmConfig& config);

// ---------------------------------------------------------------------------
// Task types

enum class QuestionKind { Misspelling, Confirmation, Missing };

std::string_view to_string(QuestionKind k) noexcept;

struct ClarificationQuestion {
    int id = 0; // 1-based ordinal within its section
    std::string question;
    std::vector<std::string> target_fields;
    QuestionKind kind = QuestionKind::Confirmation;
    bool operator==(const ClarificationQuestion&) const = default;
};

struct ClarificationAnswer {
    int question_id = 0;
    std::string answer;
    bool operator==(const ClarificationAnswer&) const = default;
};

struct MedicalQuestion {
    std::string id;
    std::string question;
    std::vector<std::string> rationale_fields;
    bool operator==(const MedicalQuestion&) const = default;
};

struct MedicalAnswer {
    std::string question_id;
    std::optional<std::string> answer; // nullopt = skipped
    bool operator==(const MedicalAnswer&) const = default;
};

/// Additional-information text to append, per section.
using SummaryDelta = std::map<emr::SectionKind, std::string>;

struct SectionInput {
    transcript::SectionTranscript transcript;
    std::vector<ClarificationQuestion> questions;
    std::vector<ClarificationAnswer> answers;
};

Json question_to_json(const ClarificationQuestion& q);
ClarificationQuestion question_from_json(const Json& j);
Json medical_question_to_json(const MedicalQuestion& q);
MedicalQuestion medical_question_from_json(const Json& j);

/// Raised when a backend keeps producing contract-violating output after
/// the permitted re-asks.
class GenerationError : public BackendError {
public:
    GenerationError(const std::string& message, std::string path)
        : BackendError(message, false), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

inline constexpr int kMaxReasks = 2;

// ---------------------------------------------------------------------------
// Operations

class Orchestrator {
public:
    Orchestrator(const emr::Schema& schema, const lexicon::Lexicon& lexicon, const PromptLibrary& prompts,
                 const LlmBackend& backend)
        : schema_(schema), lexicon_(lexicon), prompts_(prompts), backend_(backend) {}

    const LlmBackend& backend() const noexcept { return backend_; }

    PromptBundle build_clarification_prompt(const transcript::SectionTranscript& t) const;
    std::vector<ClarificationQuestion> clarify(const transcript::SectionTranscript& t) const;

    PromptBundle build_fill_prompt(const SectionInput& input) const;
    /// Fills the given sections on top of `base` (a blank document when
    /// null). Sections not in `inputs` are copied from `base` unchanged.
    emr::Document generate_emr(const std::vector<SectionInput>& inputs, const emr::Document* base = nullptr) const;

    PromptBundle build_medical_questions_prompt(const emr::Document& doc) const;
    std::vector<MedicalQuestion> generate_medical_questions(const emr::Document& doc) const;

    PromptBundle build_summary_prompt(const emr::Document& doc, const std::vector<MedicalQuestion>& questions,
                                      const std::vector<MedicalAnswer>& answers) const;
    SummaryDelta summarize_question_answers(const emr::Document& doc, const std::vector<MedicalQuestion>& questions,
                                            const std::vector<MedicalAnswer>& answers) const;

    PromptBundle build_red_flag_prompt(const emr::Document& doc, const rules::ThresholdRuleSet& rules,
                                       const std::vector<retrieval::Snippet>& snippets) const;
    std::vector<rules::NarrativeFlag> generate_redflag_narrative(const emr::Document& doc,
                                                                 const rules::ThresholdRuleSet& rules,
                                                                 const std::vector<retrieval::Snippet>& snippets) const;

private:
    /// Calls the backend, validates against the bundle's contract and runs
    /// `post`; re-asks up to kMaxReasks times on ContractError.
    template <typename F>
    auto call(const PromptBundle& bundle, F&& post) const;

    const emr::Schema& schema_;
    const lexicon::Lexicon& lexicon_;
    const PromptLibrary& prompts_;
    const LlmBackend& backend_;
};

/// Validation helpers shared by the orchestrator and its tests.
std::vector<ClarificationQuestion> parse_clarifications(std::string_view response, const StructuredOutputSchema& contract,
                                                        const emr::Schema& schema);

/// Appends each delta to the section's additional information.
emr::Document apply_summary(const emr::Document& doc, const SummaryDelta& delta);

/// Number of sentences, counted by terminal punctuation.
std::size_t sentence_count(std::string_view text);

} // namespace vemr::llm
