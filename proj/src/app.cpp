#include "vemr/app.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <set>

#include "vemr/error.hpp"
#include "vemr/text.hpp"

namespace vemr::app {

namespace fs = std::filesystem;

std::optional<std::chrono::system_clock::time_point> parse_timestamp(std::string_view iso) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    char z = 0;
    const std::string str(iso);
    if (std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &s, &z) != 7 || z != 'Z' ||
        str.size() != 20)
        return std::nullopt;
    const std::chrono::year_month_day ymd{std::chrono::year(y), std::chrono::month(static_cast<unsigned>(mo)),
                                          std::chrono::day(static_cast<unsigned>(d))};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 59) return std::nullopt;
    return std::chrono::sys_days(ymd) + std::chrono::hours(h) + std::chrono::minutes(mi) + std::chrono::seconds(s);
}

namespace {

void reject_unknown(const Json& j, std::initializer_list<const char*> known, const std::string& where) {
    std::set<std::string> ok(known.begin(), known.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key())) throw ValidationError("unknown config key " + where + it.key(), where + it.key());
}

template <class T>
void take(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j[key].get<T>();
}

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

bool truthy(const std::string& v) {
    const auto c = text::canonical(v);
    return c == "1" || c == "true" || c == "yes" || c == "on";
}

} // namespace

Config load_config(const std::optional<std::string>& path) {
    Config c;
    if (path) {
        Json j;
        try {
            j = Json::parse(text::read_file(*path));
        } catch (const Json::parse_error& e) {
            throw ParseError(std::string("config: ") + e.what(), *path);
        }
        try {
            reject_unknown(j,
                           {"resources_dir", "data_dir", "listen", "mock_backends", "speech_fixtures", "llm_rules",
                            "ultrasound_fixtures", "clock_start", "speech", "llm", "ultrasound", "service"},
                           "");
            take(j, "resources_dir", c.resources_dir);
            take(j, "data_dir", c.data_dir);
            take(j, "listen", c.listen);
            take(j, "mock_backends", c.mock_backends);
            take(j, "speech_fixtures", c.speech_fixtures);
            take(j, "llm_rules", c.llm_rules);
            take(j, "ultrasound_fixtures", c.ultrasound_fixtures);
            if (j.contains("clock_start")) c.clock_start = j["clock_start"].get<std::string>();
            if (j.contains("speech")) {
                const auto& s = j["speech"];
                reject_unknown(s, {"id", "endpoint", "api_key_env", "timeout_s", "language"}, "speech.");
                take(s, "id", c.speech.id);
                take(s, "endpoint", c.speech.endpoint);
                take(s, "api_key_env", c.speech.api_key_env);
                take(s, "timeout_s", c.speech.timeout_s);
                take(s, "language", c.speech.language);
            }
            if (j.contains("llm")) {
                const auto& s = j["llm"];
                reject_unknown(s, {"id", "endpoint", "model", "api_key_env", "timeout_s"}, "llm.");
                take(s, "id", c.llm.id);
                take(s, "endpoint", c.llm.endpoint);
                take(s, "model", c.llm.model);
                take(s, "api_key_env", c.llm.api_key_env);
                take(s, "timeout_s", c.llm.timeout_s);
            }
            if (j.contains("ultrasound")) {
                const auto& s = j["ultrasound"];
                reject_unknown(s, {"id", "endpoint", "api_key_env", "timeout_s"}, "ultrasound.");
                take(s, "id", c.ultrasound.id);
                take(s, "endpoint", c.ultrasound.endpoint);
                take(s, "api_key_env", c.ultrasound.api_key_env);
                take(s, "timeout_s", c.ultrasound.timeout_s);
            }
            if (j.contains("service")) {
                const auto& s = j["service"];
                reject_unknown(s,
                               {"mr_pattern", "max_audio_bytes", "max_image_bytes", "ultrasound_step", "snippets_k",
                                "narrative_flags", "parallel_transcription"},
                               "service.");
                take(s, "mr_pattern", c.service.mr_pattern);
                take(s, "max_audio_bytes", c.service.max_audio_bytes);
                take(s, "max_image_bytes", c.service.max_image_bytes);
                take(s, "ultrasound_step", c.service.workflow.ultrasound_step);
                take(s, "snippets_k", c.service.workflow.snippets_k);
                take(s, "narrative_flags", c.service.workflow.narrative_flags);
                take(s, "parallel_transcription", c.service.transcribe.parallel);
            }
        } catch (const Json::type_error& e) {
            throw ValidationError(std::string("config value has the wrong type: ") + e.what(), *path);
        }
    }
    if (auto v = env("VEMR_RESOURCES_DIR")) c.resources_dir = *v;
    if (auto v = env("VEMR_STORE_DIR")) c.data_dir = *v;
    if (auto v = env("VEMR_LISTEN")) c.listen = *v;
    if (auto v = env("VEMR_MOCK_BACKENDS")) c.mock_backends = truthy(*v);
    if (auto v = env("VEMR_CLOCK_START")) c.clock_start = *v;
    if (auto v = env("VEMR_ASR_ENDPOINT")) c.speech.endpoint = *v;
    if (auto v = env("VEMR_LLM_ENDPOINT")) c.llm.endpoint = *v;
    if (auto v = env("VEMR_LLM_MODEL")) c.llm.model = *v;
    if (auto v = env("VEMR_ULTRASOUND_ENDPOINT")) c.ultrasound.endpoint = *v;
    if (auto v = env("VEMR_MR_PATTERN")) c.service.mr_pattern = *v;
    if (c.clock_start && !parse_timestamp(*c.clock_start))
        throw ValidationError("clock_start must look like 2024-09-03T09:00:00Z", "clock_start");
    return c;
}

Json config_to_json(const Config& c) {
    return {{"resources_dir", c.resources_dir},
            {"data_dir", c.data_dir},
            {"listen", c.listen},
            {"mock_backends", c.mock_backends},
            {"speech_fixtures", c.speech_fixtures},
            {"llm_rules", c.llm_rules},
            {"ultrasound_fixtures", c.ultrasound_fixtures},
            {"clock_start", c.clock_start ? Json(*c.clock_start) : Json(nullptr)},
            {"speech",
             {{"id", c.speech.id},
              {"endpoint", c.speech.endpoint},
              {"api_key_env", c.speech.api_key_env},
              {"timeout_s", c.speech.timeout_s},
              {"language", c.speech.language}}},
            {"llm",
             {{"id", c.llm.id},
              {"endpoint", c.llm.endpoint},
              {"model", c.llm.model},
              {"api_key_env", c.llm.api_key_env},
              {"timeout_s", c.llm.timeout_s}}},
            {"ultrasound",
             {{"id", c.ultrasound.id},
              {"endpoint", c.ultrasound.endpoint},
              {"api_key_env", c.ultrasound.api_key_env},
              {"timeout_s", c.ultrasound.timeout_s}}},
            {"service",
             {{"mr_pattern", c.service.mr_pattern},
              {"max_audio_bytes", c.service.max_audio_bytes},
              {"max_image_bytes", c.service.max_image_bytes},
              {"ultrasound_step", c.service.workflow.ultrasound_step},
              {"snippets_k", c.service.workflow.snippets_k},
              {"narrative_flags", c.service.workflow.narrative_flags},
              {"parallel_transcription", c.service.transcribe.parallel}}}};
}

Resources load_resources(const std::string& dir) {
    const fs::path root(dir);
    return {emr::load_schema((root / "schema" / "emr_schema.json").string()),
            lexicon::load_lexicon_file((root / "lexicon" / "medical_dictionary.txt").string()),
            rules::load_rules((root / "rules" / "thresholds.json").string())};
}

Runtime::Runtime(Config config) : config_(std::move(config)), res_(load_resources(config_.resources_dir)) {
    const fs::path root(config_.resources_dir);
    prompts_ = llm::load_prompt_library((root / "prompts").string());
    const auto guidelines = root / "guidelines";
    if (fs::is_directory(guidelines)) index_ = retrieval::index_corpus(retrieval::load_corpus_dir(guidelines.string()));

    auto or_default = [&](const std::string& v, const char* file) {
        return v.empty() ? (root / "mock" / file).string() : v;
    };
    if (config_.mock_backends) {
        auto speech = std::make_unique<transcript::MockSpeechBackend>(
            transcript::MockSpeechBackend::from_fixture_file(or_default(config_.speech_fixtures, "speech_fixtures.json")));
        mock_speech_ = speech.get();
        speech_ = std::move(speech);
        auto model = std::make_unique<llm::MockLlmBackend>(
            llm::MockLlmBackend::from_file(or_default(config_.llm_rules, "llm_rules.json")));
        mock_llm_ = model.get();
        llm_ = std::move(model);
        auto extractor = std::make_unique<ultrasound::MockExtractor>(
            ultrasound::MockExtractor::from_file(or_default(config_.ultrasound_fixtures, "ultrasound.json")));
        mock_extractor_ = extractor.get();
        extractor_ = std::move(extractor);
    } else {
        speech_ = transcript::make_http_speech_backend(config_.speech);
        llm_ = llm::make_http_llm_backend(config_.llm);
        extractor_ = ultrasound::make_http_extractor(config_.ultrasound);
    }
    orchestrator_ = std::make_unique<llm::Orchestrator>(res_.schema, res_.lexicon, prompts_, *llm_);
    store_ = std::make_unique<store::Store>(config_.data_dir);

    service::Backends b;
    b.schema = &res_.schema;
    b.lexicon = &res_.lexicon;
    b.orchestrator = orchestrator_.get();
    b.rules = &res_.rules;
    b.guidelines = index_ ? &*index_ : nullptr;
    b.speech = speech_.get();
    b.extractor = extractor_.get();
    if (config_.clock_start) b.clock = workflow::stepping_clock(*parse_timestamp(*config_.clock_start));
    service_ = std::make_unique<service::RecordService>(*store_, std::move(b), config_.service);
}

Runtime::~Runtime() = default;

} // namespace vemr::app
