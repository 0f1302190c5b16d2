#include "vemr/ultrasound.hpp"

#include <algorithm>
#include <cstdlib>

#include "vemr/digest.hpp"
#include "vemr/error.hpp"
#include "vemr/http_client.hpp"
#include "vemr/text.hpp"

namespace vemr::ultrasound {

namespace {

Findings keep_known(const Json& j) {
    Findings out;
    if (!j.is_object()) throw BackendError("extractor returned a non-object", false);
    for (auto key : kFindingKeys) {
        auto it = j.find(std::string(key));
        if (it != j.end() && it->is_string() && !text::trim(it->get<std::string>()).empty())
            out[std::string(key)] = std::string(text::trim(it->get<std::string>()));
    }
    return out;
}

} // namespace

MockExtractor::MockExtractor(Json config)
    : id_(config.value("backend_id", std::string("mock-ultrasound"))), config_(std::move(config)),
      outage_(std::make_shared<std::atomic<int>>(0)) {}

MockExtractor MockExtractor::from_file(const std::string& path) {
    try {
        return MockExtractor(Json::parse(text::read_file(path)));
    } catch (const Json::parse_error& e) {
        throw ParseError(std::string("ultrasound fixture: ") + e.what(), path);
    }
}

Findings MockExtractor::extract(std::string_view image) const {
    if (outage_->load() > 0 && outage_->fetch_sub(1) > 0) throw BackendError("mock extractor unavailable", true);
    if (image.empty()) throw BackendError("empty image", false);
    const auto digest = sha256_hex(image);
    if (config_.contains("by_digest") && config_["by_digest"].contains(digest))
        return keep_known(config_["by_digest"][digest]);
    return keep_known(config_.value("default", Json::object()));
}

namespace {

class HttpExtractor : public Extractor {
public:
    explicit HttpExtractor(HttpExtractorConfig cfg) : cfg_(std::move(cfg)) {}
    const std::string& id() const override { return cfg_.id; }

    Findings extract(std::string_view image) const override {
        std::map<std::string, std::string> headers;
        if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
            headers["Authorization"] = std::string("Bearer ") + key;
        auto res = net::post(cfg_.endpoint, std::string(image), "application/octet-stream", headers, cfg_.timeout_s);
        if (res.status >= 500 || res.status == 429)
            throw BackendError("extractor returned " + std::to_string(res.status), true);
        if (res.status != 200) throw BackendError("extractor rejected image: HTTP " + std::to_string(res.status), false);
        try {
            return keep_known(Json::parse(res.body));
        } catch (const Json::parse_error& e) {
            throw BackendError(std::string("malformed extractor response: ") + e.what(), true);
        }
    }

private:
    HttpExtractorConfig cfg_;
};

} // namespace

std::unique_ptr<Extractor> make_http_extractor(const HttpExtractorConfig& config) {
    if (config.endpoint.empty()) throw ValidationError("ultrasound extractor endpoint not configured", "endpoint");
    return std::make_unique<HttpExtractor>(config);
}

} // namespace vemr::ultrasound
