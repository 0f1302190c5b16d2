#include "vemr/http_client.hpp"

#include <httplib.h>

#include <chrono>

#include "vemr/error.hpp"

namespace vemr::net {

HttpResponse post(const std::string& url, const std::string& body, const std::string& content_type,
                  const std::map<std::string, std::string>& headers, double timeout_s) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ValidationError("endpoint must include a scheme: " + url);
    auto path_begin = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_begin);
    const std::string path = path_begin == std::string::npos ? "/" : url.substr(path_begin);

    httplib::Client client(origin);
    const auto timeout = std::chrono::duration<double>(timeout_s);
    const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout).count();
    const auto sec = static_cast<time_t>(usec / 1000000);
    const auto rem = static_cast<time_t>(usec % 1000000);
    client.set_connection_timeout(sec, rem);
    client.set_read_timeout(sec, rem);
    client.set_write_timeout(sec, rem);

    httplib::Headers hdrs;
    for (const auto& [k, v] : headers) hdrs.emplace(k, v);
    auto res = client.Post(path, hdrs, body, content_type);
    if (!res) {
        throw BackendError("endpoint " + origin + " unreachable: " + httplib::to_string(res.error()), true);
    }
    return {res->status, res->body};
}

} // namespace vemr::net
