#include "walkthrough.hpp"

#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <stdexcept>
#include <thread>
#include <unistd.h>

#include "vemr/emr.hpp"

namespace vemr::testing {

namespace fs = std::filesystem;

Json ApiClient::json(const std::string& method, const std::string& path, const Json& body, int expect) {
    auto r = call(method, path, method == "GET" ? std::string() : body.dump());
    if (r.status != expect)
        throw std::runtime_error(method + " " + path + " -> " + std::to_string(r.status) + ": " + r.body);
    return Json::parse(r.body);
}

service::Response InProcessClient::call(const std::string& method, const std::string& path, const std::string& body,
                                        const std::string& content_type) {
    service::Request r;
    r.method = method;
    const auto q = path.find('?');
    r.path = path.substr(0, q);
    if (q != std::string::npos) {
        std::string rest = path.substr(q + 1);
        std::size_t i = 0;
        while (i <= rest.size()) {
            auto amp = rest.find('&', i);
            if (amp == std::string::npos) amp = rest.size();
            const auto kv = rest.substr(i, amp - i);
            const auto eq = kv.find('=');
            if (!kv.empty()) r.query[kv.substr(0, eq)] = eq == std::string::npos ? "" : kv.substr(eq + 1);
            i = amp + 1;
        }
    }
    r.headers["x-actor-id"] = actor_;
    r.headers["content-type"] = content_type;
    r.body = body;
    return s_.handle(r);
}

struct HttpClient::Impl {
    httplib::Client cli;
    Impl(const std::string& host, int port) : cli(host, port) {}
};

HttpClient::HttpClient(std::string host, int port, std::string actor)
    : impl_(std::make_unique<Impl>(host, port)), actor_(std::move(actor)) {
    impl_->cli.set_read_timeout(60, 0);
}

HttpClient::~HttpClient() = default;

service::Response HttpClient::call(const std::string& method, const std::string& path, const std::string& body,
                                   const std::string& content_type) {
    httplib::Headers h{{"X-Actor-Id", actor_}};
    httplib::Result res;
    if (method == "GET") res = impl_->cli.Get(path, h);
    else if (method == "POST") res = impl_->cli.Post(path, h, body, content_type);
    else if (method == "PUT") res = impl_->cli.Put(path, h, body, content_type);
    else throw std::runtime_error("unsupported method " + method);
    if (!res) throw std::runtime_error("HTTP " + method + " " + path + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->get_header_value("Content-Type"), res->body};
}

struct LocalServer::Impl {
    std::unique_ptr<httplib::Server> server;
    std::thread thread;
};

LocalServer::LocalServer(service::RecordService& service) : impl_(std::make_unique<Impl>()) {
    impl_->server = service::make_http_server(service);
    port_ = impl_->server->bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw std::runtime_error("cannot bind a local port");
    impl_->thread = std::thread([this] { impl_->server->listen_after_bind(); });
    impl_->server->wait_until_ready();
}

LocalServer::~LocalServer() {
    impl_->server->stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

app::Config mock_config(const std::string& data_dir) {
    app::Config c;
    c.data_dir = data_dir;
    c.mock_backends = true;
    c.clock_start = "2024-09-03T09:00:00Z";
    return c;
}

std::string temp_dir(const std::string& stem) {
    static std::atomic<int> counter{0};
    auto p = fs::temp_directory_path() /
             ("vemr-" + stem + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

namespace {

std::string answer_for(const Json& q) {
    const auto kind = q.value("kind", std::string());
    if (kind == "misspelling") return "Yes, the medicine is Duphaston.";
    if (kind == "missing") return "Yes, record it as no information.";
    return "Presentation is cephalic.";
}

std::string medical_answer_for(const std::string& id) {
    static const std::map<std::string, std::string> answers{
        {"inherited_diseases", "No inherited diseases are known in either family."},
        {"husband_blood_group", "Husband blood group is O positive."},
        {"diet_activity", "She walks for half an hour daily and eats home cooked food."},
        {"work", "She teaches seated for most of the day."},
    };
    auto it = answers.find(id);
    return it == answers.end() ? std::string() : it->second;
}

struct Script {
    ApiClient& api;
    std::string visit;
    std::uint64_t version = 0;
    WalkthroughResult out;

    Json track(Json session) {
        version = session.at("version").get<std::uint64_t>();
        out.states.push_back(session.at("state").get<std::string>());
        return session;
    }
    std::string base() const { return std::string(service::kBasePath) + "/visits/" + visit; }
    Json post(const std::string& path, Json body) {
        body["version"] = version;
        return track(api.json("POST", base() + path, body));
    }
    Json upload(const std::string& path, const std::string& bytes, const std::string& type) {
        auto r = api.call("POST", base() + path + "?version=" + std::to_string(version), bytes, type);
        if (r.status != 200) throw std::runtime_error("upload " + path + " -> " + std::to_string(r.status) + ": " + r.body);
        return track(Json::parse(r.body));
    }

    void record(const transcript::MockSpeechBackend& speech, const std::vector<std::pair<std::string, std::string>>& plan) {
        for (const auto& [section, fixture] : plan) upload("/sections/" + section + "/audio", speech.fixture_audio(fixture), "audio/wav");
    }

    void clarify() {
        for (;;) {
            auto c = api.json("GET", base() + "/clarifications");
            if (c.at("cursor").is_null()) break;
            const auto section = c["cursor"]["section"].get<std::string>();
            const int qid = c["cursor"]["question_id"].get<int>();
            const auto& q = c["clarifications"][section][qid - 1];
            post("/clarifications/answer", {{"section", section}, {"question_id", qid}, {"answer", answer_for(q)}});
        }
    }

    void questions_and_flags(const std::vector<Json>& edits) {
        api.json("GET", base() + "/emr");
        post("/emr/finalize", {{"edits", edits}});
        post("/surveys", {{"survey", "emr_feedback"}, {"responses", {{"usefulness", 5}, {"comment", "Fields were complete."}}}});
        auto mq = api.json("GET", base() + "/medical-questions");
        Json answers = Json::array();
        for (const auto& q : mq.at("questions")) {
            const auto id = q.at("id").get<std::string>();
            const auto a = medical_answer_for(id);
            answers.push_back({{"question_id", id}, {"answer", a.empty() ? Json(nullptr) : Json(a)}});
        }
        post("/medical-questions/answers", {{"answers", answers}, {"allow_skip", true}});
        auto report = api.json("GET", base() + "/report");
        post("/surveys", {{"survey", "red_flag_feedback"}, {"responses", {{"accurate", true}, {"relevant", true}}}});
        post("/flags/acknowledge", {{"flag_ids", report.at("outstanding_critical")}});
        post("/save", Json::object());
    }

    void finish() {
        const std::string image = "ULTRASOUND REPORT\nFetal movement: present\nPlacenta: posterior\n";
        upload("/ultrasound", image, "application/octet-stream");
        out.final_session = post("/complete", {{"confirm", true}});
        out.visit_id = visit;
        auto r = api.call("GET", base() + "/emr?format=canonical", "");
        if (r.status != 200) throw std::runtime_error("canonical EMR fetch failed: " + r.body);
        out.canonical_emr = r.body;
        auto snap = api.call("GET", base(), "");
        out.snapshot = snap.body;
    }
};

} // namespace

WalkthroughResult new_patient_walkthrough(ApiClient& api, const transcript::MockSpeechBackend& speech,
                                          const std::string& mr) {
    const std::string root = service::kBasePath;
    api.json("POST", root + "/patients",
             {{"mr_number", mr}, {"demographics", {{"name", "Ayesha Khan"}, {"age", 28}, {"care_type", "public"}}}}, 201);
    Script s{api, {}, 0, {}};
    auto started = s.track(api.json("POST", root + "/patients/" + mr + "/visits", {{"kind", "new"}}, 201));
    s.visit = started.at("visit_id").get<std::string>();
    s.post("/vitals", {{"vitals",
                        {{"height_cm", 154},
                         {"weight_kg", 90},
                         {"systolic_mmHg", 150},
                         {"diastolic_mmHg", 95},
                         {"temperature_C", 37.0},
                         {"pulse_bpm", 88}}}});
    // Sections in a non-schema order: recording order is free.
    s.record(speech, {{"proposed_plan", "new_plan"},
                      {"personal_medical_history", "new_pmh"},
                      {"present_pregnancy", "new_present"},
                      {"family_history", "new_family"},
                      {"socio_economic_history", "new_socio"},
                      {"past_pregnancy", "new_past"}});
    s.clarify();
    s.questions_and_flags({Json{{"field_id", "differential_diagnosis"},
                                {"value", {{"type", "text"}, {"text", "Anemia in pregnancy"}}}}});
    s.finish();
    return s.out;
}

WalkthroughResult returning_walkthrough(ApiClient& api, const transcript::MockSpeechBackend& speech,
                                        const std::string& mr) {
    const std::string root = service::kBasePath;
    Script s{api, {}, 0, {}};
    auto started = s.track(api.json("POST", root + "/patients/" + mr + "/visits", {{"kind", "returning"}}, 201));
    s.visit = started.at("visit_id").get<std::string>();
    s.post("/vitals", {{"vitals", {{"height_cm", 154}, {"weight_kg", 91}, {"systolic_mmHg", 130}, {"diastolic_mmHg", 85}}}});
    s.record(speech, {{"present_pregnancy", "return_present"}, {"proposed_plan", "return_plan"}});
    s.clarify();
    s.questions_and_flags({});
    s.finish();
    return s.out;
}

} // namespace vemr::testing
