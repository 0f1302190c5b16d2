#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <regex>
#include <string>

#include "vemr/json.hpp"
#include "vemr/store.hpp"
#include "vemr/transcript.hpp"
#include "vemr/ultrasound.hpp"
#include "vemr/workflow.hpp"

namespace httplib {
class Server;
}

namespace vemr::service {

inline constexpr const char* kBasePath = "/api/v1";

struct ServiceConfig {
    std::string mr_pattern = "^[A-Za-z0-9][A-Za-z0-9-]{2,31}$";
    std::size_t max_audio_bytes = 32u << 20;
    std::size_t max_image_bytes = 16u << 20;
    workflow::WorkflowConfig workflow;
    transcript::TranscribeOptions transcribe;
};

struct Backends {
    const emr::Schema* schema = nullptr;
    const lexicon::Lexicon* lexicon = nullptr;
    const llm::Orchestrator* orchestrator = nullptr;
    const rules::ThresholdRuleSet* rules = nullptr;
    const retrieval::Index* guidelines = nullptr; // optional
    const transcript::SpeechBackend* speech = nullptr;
    const ultrasound::Extractor* extractor = nullptr;
    workflow::Clock clock;
};

/// Transport-neutral request; header names are lower case.
struct Request {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::map<std::string, std::string> headers;
    std::string body;
};

struct Response {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

/// Routes under /api/v1. Mutating calls carry the session version (JSON
/// field "version", or the query parameter for binary uploads) and the
/// X-Actor-Id header. Errors are {"error": {"code", "message", ...}} with
/// 404 not found, 409 conflict or wrong state, 413 too large, 422
/// validation, 503 retryable backend failure, 502 other backend failure.
class RecordService {
public:
    RecordService(store::Store& store, Backends backends, ServiceConfig config = {});

    Response handle(const Request& request) const;

    const ServiceConfig& config() const noexcept { return config_; }

private:
    Response dispatch(const Request& request) const;

    store::Store& store_;
    Backends b_;
    ServiceConfig config_;
    std::regex mr_re_;
    workflow::VisitEngine engine_;
};

/// httplib server forwarding every request to `service`.
std::unique_ptr<httplib::Server> make_http_server(const RecordService& service);

} // namespace vemr::service
