#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "vemr/json.hpp"

namespace vemr::ultrasound {

/// Keys an extractor may report; anything else is dropped.
inline constexpr std::string_view kFindingKeys[] = {"fetal_movement", "placenta_presence", "scan_date", "anomalies"};

using Findings = std::map<std::string, std::string>;

/// Reads key findings off an ultrasound report image. Failures raise
/// BackendError.
class Extractor {
public:
    virtual ~Extractor() = default;
    virtual const std::string& id() const = 0;
    virtual Findings extract(std::string_view image_bytes) const = 0;
};

/// Fixture-driven extractor: {"backend_id", "default": {...}, "by_digest": {sha256: {...}}}.
class MockExtractor : public Extractor {
public:
    explicit MockExtractor(Json config);
    static MockExtractor from_file(const std::string& path);

    const std::string& id() const override { return id_; }
    Findings extract(std::string_view image_bytes) const override;

    /// The next `count` calls fail with a retryable BackendError.
    void inject_outage(int count) { outage_->store(count); }

private:
    std::string id_;
    Json config_;
    std::shared_ptr<std::atomic<int>> outage_;
};

struct HttpExtractorConfig {
    std::string id = "remote-ultrasound";
    std::string endpoint;
    std::string api_key_env = "VEMR_ULTRASOUND_API_KEY";
    double timeout_s = 60.0;
};

/// POSTs the image as application/octet-stream and expects a flat object of
/// findings.
std::unique_ptr<Extractor> make_http_extractor(const HttpExtractorConfig& config);

} // namespace vemr::ultrasound
