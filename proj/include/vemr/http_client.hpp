#pragma once

#include <map>
#include <string>

namespace vemr::net {

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Blocking POST. `url` is scheme://host[:port]/path; https is supported.
/// Throws BackendError(retryable=true) when the endpoint cannot be reached
/// or times out.
HttpResponse post(const std::string& url, const std::string& body, const std::string& content_type,
                  const std::map<std::string, std::string>& headers, double timeout_s);

} // namespace vemr::net
