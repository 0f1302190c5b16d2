#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>

#include "vemr/emr.hpp"
#include "vemr/json.hpp"
#include "vemr/lexicon.hpp"
#include "vemr/llm.hpp"
#include "vemr/retrieval.hpp"
#include "vemr/rules.hpp"
#include "vemr/service.hpp"
#include "vemr/store.hpp"
#include "vemr/transcript.hpp"
#include "vemr/ultrasound.hpp"

namespace vemr::app {

struct Config {
    std::string resources_dir = VEMR_DATA_DIR; // schema, lexicon, prompts, rules, guidelines, mock/
    std::string data_dir = "vemr-data";        // store and blobs
    std::string listen = "127.0.0.1:8080";
    bool mock_backends = false;
    std::string speech_fixtures;     // default <resources>/mock/speech_fixtures.json
    std::string llm_rules;           // default <resources>/mock/llm_rules.json
    std::string ultrasound_fixtures; // default <resources>/mock/ultrasound.json
    std::optional<std::string> clock_start; // "YYYY-MM-DDTHH:MM:SSZ": deterministic one-second clock
    transcript::HttpSpeechConfig speech;
    llm::HttpLlmConfig llm;
    ultrasound::HttpExtractorConfig ultrasound;
    service::ServiceConfig service;
};

/// Defaults, then the JSON config file (when given), then environment
/// variables: VEMR_RESOURCES_DIR, VEMR_STORE_DIR, VEMR_LISTEN,
/// VEMR_MOCK_BACKENDS, VEMR_CLOCK_START, VEMR_ASR_ENDPOINT,
/// VEMR_LLM_ENDPOINT, VEMR_LLM_MODEL, VEMR_ULTRASOUND_ENDPOINT,
/// VEMR_MR_PATTERN. Unknown config keys raise ValidationError.
Config load_config(const std::optional<std::string>& path);
Json config_to_json(const Config& c);

std::optional<std::chrono::system_clock::time_point> parse_timestamp(std::string_view iso);

/// Resources every command needs: schema, lexicon, rules.
struct Resources {
    emr::Schema schema;
    lexicon::Lexicon lexicon;
    rules::ThresholdRuleSet rules;
};
Resources load_resources(const std::string& resources_dir);

/// Owns the full service graph for `serve` and end-to-end tests.
class Runtime {
public:
    explicit Runtime(Config config);
    ~Runtime();

    const Config& config() const noexcept { return config_; }
    const Resources& resources() const noexcept { return res_; }
    service::RecordService& service() { return *service_; }
    store::Store& store() { return *store_; }
    /// Set when running with mock backends.
    const transcript::MockSpeechBackend* mock_speech() const noexcept { return mock_speech_; }
    llm::MockLlmBackend* mock_llm() noexcept { return mock_llm_; }
    ultrasound::MockExtractor* mock_extractor() noexcept { return mock_extractor_; }

private:
    Config config_;
    Resources res_;
    llm::PromptLibrary prompts_;
    std::optional<retrieval::Index> index_;
    std::unique_ptr<transcript::SpeechBackend> speech_;
    std::unique_ptr<llm::LlmBackend> llm_;
    std::unique_ptr<ultrasound::Extractor> extractor_;
    const transcript::MockSpeechBackend* mock_speech_ = nullptr;
    llm::MockLlmBackend* mock_llm_ = nullptr;
    ultrasound::MockExtractor* mock_extractor_ = nullptr;
    std::unique_ptr<llm::Orchestrator> orchestrator_;
    std::unique_ptr<store::Store> store_;
    std::unique_ptr<service::RecordService> service_;
};

} // namespace vemr::app
