#include "vemr/service.hpp"

#include <httplib.h>

#include "vemr/emr_json.hpp"
#include "vemr/error.hpp"
#include "vemr/rules.hpp"
#include "vemr/text.hpp"

namespace vemr::service {

namespace {

using workflow::VisitSession;

Response json_response(int status, const Json& body) { return {status, "application/json", body.dump()}; }

Response error_response(int status, std::string_view code, const std::string& message, Json extra = Json::object()) {
    Json e{{"code", code}, {"message", message}};
    for (auto it = extra.begin(); it != extra.end(); ++it) e[it.key()] = it.value();
    return json_response(status, Json{{"error", e}});
}

std::vector<std::string> split_path(std::string_view path) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < path.size()) {
        while (i < path.size() && path[i] == '/') ++i;
        std::size_t j = i;
        while (j < path.size() && path[j] != '/') ++j;
        if (j > i) out.emplace_back(path.substr(i, j - i));
        i = j;
    }
    return out;
}

Json parse_body(const Request& r) {
    if (text::trim(r.body).empty()) return Json::object();
    try {
        auto j = Json::parse(r.body);
        if (!j.is_object()) throw ValidationError("request body must be a JSON object", "$");
        return j;
    } catch (const Json::parse_error& e) {
        throw ParseError(std::string("request body is not JSON: ") + e.what(), "$");
    }
}

std::uint64_t version_of(const Request& r, const Json& body) {
    if (body.contains("version")) {
        if (!body["version"].is_number_unsigned()) throw ValidationError("version must be a non-negative integer", "version");
        return body["version"].get<std::uint64_t>();
    }
    if (auto it = r.query.find("version"); it != r.query.end()) {
        try {
            std::size_t used = 0;
            auto v = std::stoull(it->second, &used);
            if (used == it->second.size()) return v;
        } catch (const std::exception&) {
        }
        throw ValidationError("version must be a non-negative integer", "version");
    }
    throw ValidationError("mutating calls must carry the session version", "version");
}

std::string actor_of(const Request& r) {
    auto it = r.headers.find("x-actor-id");
    if (it == r.headers.end() || text::trim(it->second).empty()) return "anonymous";
    return std::string(text::trim(it->second));
}

emr::SectionKind section_of(const std::string& s) {
    auto k = emr::section_from_string(s);
    if (!k) throw ValidationError("unknown section " + s, "section");
    return *k;
}

template <class T>
T field(const Json& body, const char* name) {
    if (!body.contains(name)) throw ValidationError(std::string("missing field ") + name, name);
    try {
        return body[name].get<T>();
    } catch (const Json::exception&) {
        throw ValidationError(std::string("field ") + name + " has the wrong type", name);
    }
}

} // namespace

RecordService::RecordService(store::Store& store, Backends backends, ServiceConfig config)
    : store_(store), b_(std::move(backends)), config_(std::move(config)), mr_re_(config_.mr_pattern),
      engine_(*b_.schema, *b_.lexicon, *b_.orchestrator, *b_.rules, b_.guidelines,
              b_.clock ? b_.clock : workflow::Clock([] { return std::chrono::system_clock::now(); }),
              config_.workflow) {
    if (!b_.schema || !b_.lexicon || !b_.orchestrator || !b_.rules || !b_.speech || !b_.extractor)
        throw ValidationError("record service needs every backend wired", "backends");
}

Response RecordService::handle(const Request& request) const {
    try {
        return dispatch(request);
    } catch (const workflow::SaveBlockedError& e) {
        return error_response(409, "save_blocked", e.what(), {{"outstanding", e.outstanding()}});
    } catch (const ValidationError& e) {
        return error_response(422, "validation", e.what(), {{"field", e.field()}});
    } catch (const ParseError& e) {
        return error_response(422, "parse", e.what(), {{"field", e.path()}});
    } catch (const NotFoundError& e) {
        return error_response(404, "not_found", e.what());
    } catch (const ConflictError& e) {
        return error_response(409, "conflict", e.what(), {{"retry", true}});
    } catch (const StateError& e) {
        return error_response(409, "invalid_state", e.what());
    } catch (const PayloadTooLargeError& e) {
        return error_response(413, "payload_too_large", e.what(), {{"limit_bytes", e.limit()}});
    } catch (const BackendError& e) {
        return error_response(e.retryable() ? 503 : 502, "backend", e.what(), {{"retryable", e.retryable()}});
    } catch (const Error& e) {
        return error_response(500, to_string(e.code()), e.what());
    } catch (const std::exception& e) {
        return error_response(500, "internal", e.what());
    }
}

Response RecordService::dispatch(const Request& r) const {
    const auto& schema = *b_.schema;
    auto parts = split_path(r.path);
    const auto base = split_path(kBasePath);
    if (parts.size() < base.size() || !std::equal(base.begin(), base.end(), parts.begin()))
        throw NotFoundError("no route " + r.path);
    parts.erase(parts.begin(), parts.begin() + static_cast<std::ptrdiff_t>(base.size()));
    const bool get = r.method == "GET";
    const bool post = r.method == "POST";
    const bool put = r.method == "PUT";
    auto no_method = [&] { return error_response(405, "method_not_allowed", r.method + " not allowed on " + r.path); };

    if (parts.size() == 1 && parts[0] == "health") return json_response(200, {{"status", "ok"}});

    auto check_mr = [&](const std::string& mr) {
        if (!std::regex_match(mr, mr_re_)) throw ValidationError("malformed MR number " + mr, "mr_number");
    };

    // Patients
    if (!parts.empty() && parts[0] == "patients") {
        if (parts.size() == 1) {
            if (!post) return no_method();
            auto body = parse_body(r);
            auto p = store::patient_from_json(Json{{"mr_number", field<std::string>(body, "mr_number")},
                                                   {"demographics", body.value("demographics", Json::object())}});
            check_mr(p.mr_number);
            store_.create_patient(p);
            return json_response(201, store::patient_to_json(store_.get_patient(p.mr_number)));
        }
        const auto& mr = parts[1];
        check_mr(mr);
        if (parts.size() == 2) {
            if (get) return json_response(200, store::patient_to_json(store_.get_patient(mr)));
            if (put) {
                auto body = parse_body(r);
                auto p = store::patient_from_json(
                    Json{{"mr_number", mr}, {"demographics", body.value("demographics", Json::object())}});
                store_.update_demographics(mr, p.demographics);
                return json_response(200, store::patient_to_json(store_.get_patient(mr)));
            }
            return no_method();
        }
        if (parts.size() == 3 && parts[2] == "visits") {
            const auto patient = store_.get_patient(mr);
            if (get) return json_response(200, {{"mr_number", mr}, {"visits", patient.visits}});
            if (!post) return no_method();
            auto body = parse_body(r);
            auto kind = workflow::visit_kind_from_string(body.value("kind", std::string("new")));
            if (!kind) throw ValidationError("kind must be new or returning", "kind");
            auto visit_id = body.value("visit_id", mr + "-v" + std::to_string(patient.visits.size() + 1));
            std::optional<emr::Document> prior;
            if (*kind == workflow::VisitKind::Returning) {
                prior = store_.latest_finalized_emr(mr, schema);
                if (!prior) throw StateError("patient " + mr + " has no finalized visit to return to");
            }
            auto s = engine_.start_visit(visit_id, mr, *kind, prior ? &*prior : nullptr, {actor_of(r), std::nullopt});
            store_.create_visit(s, schema);
            return json_response(201, workflow::session_to_json(s, schema));
        }
        throw NotFoundError("no route " + r.path);
    }

    if (parts.size() < 2 || parts[0] != "visits") throw NotFoundError("no route " + r.path);
    const auto& visit_id = parts[1];
    const std::vector<std::string> rest(parts.begin() + 2, parts.end());
    auto is = [&](std::initializer_list<const char*> p) {
        if (rest.size() != p.size()) return false;
        std::size_t i = 0;
        for (const char* s : p) {
            if (std::string_view(s) != "*" && rest[i] != s) return false;
            ++i;
        }
        return true;
    };

    // Loads, applies `op`, commits against the version the caller saw.
    auto mutate = [&](std::uint64_t version, auto&& op) {
        auto s = store_.load_visit(visit_id, schema);
        const auto before = s.version();
        workflow::Caller by{actor_of(r), version};
        op(s, by);
        store_.commit(s, before, schema);
        return s;
    };
    auto session_json = [&](const VisitSession& s) { return workflow::session_to_json(s, schema); };

    // Transcribes the latest recording of a section and attaches it.
    auto transcribe_latest = [&](std::uint64_t version, emr::SectionKind section) {
        auto s = store_.load_visit(visit_id, schema);
        auto it = s.audio.find(section);
        if (it == s.audio.end() || it->second.empty())
            throw StateError(std::string("no recording for section ") + std::string(emr::to_string(section)));
        auto bytes = store_.blobs().get(it->second.back());
        if (!bytes) throw IoError("recording " + it->second.back() + " missing from blob store");
        const auto rec = transcript::make_recording(*bytes);
        if (version != s.version())
            throw ConflictError("visit " + visit_id + " is at version " + std::to_string(s.version()) + ", not " +
                                std::to_string(version));
        const auto t = transcript::transcribe_section(rec, *b_.speech, section, config_.transcribe);
        return mutate(version, [&](VisitSession& v, const workflow::Caller& by) { engine_.attach_transcript(v, t, by); });
    };

    if (rest.empty()) {
        if (!get) return no_method();
        return Response{200, "application/json", store_.snapshot_text(visit_id)};
    }
    if (is({"events"})) {
        if (!get) return no_method();
        Json arr = Json::array();
        for (const auto& e : store_.load_events(visit_id)) arr.push_back(workflow::event_to_json(e));
        return json_response(200, {{"visit_id", visit_id}, {"events", arr}});
    }
    if (is({"export"})) {
        if (!get) return no_method();
        store::ArchiveOptions opts;
        opts.anonymize = r.query.count("anonymize") && r.query.at("anonymize") != "false";
        return json_response(200, store::export_visit(store_, visit_id, schema, opts));
    }
    if (is({"vitals"})) {
        if (!post) return no_method();
        auto body = parse_body(r);
        if (!body.contains("vitals")) throw ValidationError("missing field vitals", "vitals");
        const auto v = emr::vitals_from_json(body["vitals"]);
        return json_response(200, session_json(mutate(version_of(r, body), [&](VisitSession& s, const workflow::Caller& by) {
                                 engine_.enter_vitals(s, v, by);
                             })));
    }
    if (is({"sections", "*", "audio"})) {
        if (!post) return no_method();
        const auto section = section_of(rest[1]);
        const auto version = version_of(r, Json::object());
        if (r.body.size() > config_.max_audio_bytes)
            throw PayloadTooLargeError("audio upload of " + std::to_string(r.body.size()) + " bytes exceeds the limit of " +
                                           std::to_string(config_.max_audio_bytes) + " bytes",
                                       config_.max_audio_bytes);
        const auto rec = transcript::make_recording(r.body);
        store_.blobs().put(r.body);
        auto s = mutate(version, [&](VisitSession& v, const workflow::Caller& by) {
            engine_.record_audio(v, section, rec.id, by);
        });
        try {
            return json_response(200, session_json(transcribe_latest(s.version(), section)));
        } catch (const BackendError& e) {
            return error_response(e.retryable() ? 503 : 502, "backend", e.what(),
                                  {{"retryable", e.retryable()}, {"recorded", true}, {"version", s.version()}});
        }
    }
    if (is({"sections", "*", "transcribe"})) {
        if (!post) return no_method();
        auto body = parse_body(r);
        return json_response(200, session_json(transcribe_latest(version_of(r, body), section_of(rest[1]))));
    }
    if (is({"sections", "*", "transcript"})) {
        if (!get) return no_method();
        const auto section = section_of(rest[1]);
        const auto s = store_.load_visit(visit_id, schema);
        auto t = s.transcripts.find(section);
        if (t == s.transcripts.end()) throw NotFoundError("section " + rest[1] + " has no transcript yet");
        Json qs = Json::array();
        if (auto q = s.clarifications.find(section); q != s.clarifications.end())
            for (const auto& x : q->second) qs.push_back(llm::question_to_json(x));
        return json_response(200, {{"version", s.version()},
                                   {"transcript", transcript::transcript_to_json(t->second)},
                                   {"clarifications", qs}});
    }
    if (is({"clarifications"})) {
        if (!get) return no_method();
        const auto s = store_.load_visit(visit_id, schema);
        const auto full = session_json(s);
        return json_response(200, {{"version", s.version()},
                                   {"state", full["state"]},
                                   {"cursor", full["cursor"]},
                                   {"clarifications", full["clarifications"]},
                                   {"answers", full["clarification_answers"]}});
    }
    if (is({"clarifications", "answer"})) {
        if (!post) return no_method();
        auto body = parse_body(r);
        llm::ClarificationAnswer a{field<int>(body, "question_id"), field<std::string>(body, "answer")};
        std::optional<emr::SectionKind> section;
        if (body.contains("section")) section = section_of(field<std::string>(body, "section"));
        return json_response(200, session_json(mutate(version_of(r, body), [&](VisitSession& s, const workflow::Caller& by) {
                                 engine_.answer_clarification(s, a, section, by);
                             })));
    }
    if (is({"emr"})) {
        if (!get) return no_method();
        const auto s = store_.load_visit(visit_id, schema);
        if (!s.emr) throw NotFoundError("visit " + visit_id + " has no EMR yet");
        if (r.query.count("format") && r.query.at("format") == "canonical")
            return Response{200, "application/json", emr::serialize(*s.emr, schema)};
        return json_response(200, {{"version", s.version()},
                                   {"state", workflow::to_string(s.state)},
                                   {"document", emr::document_to_json(*s.emr, schema)}});
    }
    if (is({"emr", "finalize"})) {
        if (!post) return no_method();
        auto body = parse_body(r);
        std::vector<emr::Edit> edits;
        if (body.contains("edits")) {
            if (!body["edits"].is_array()) throw ValidationError("edits must be an array", "edits");
            for (std::size_t i = 0; i < body["edits"].size(); ++i) {
                const auto& e = body["edits"][i];
                const auto path = "edits[" + std::to_string(i) + "]";
                if (!e.is_object() || !e.contains("field_id") || !e.contains("value"))
                    throw ValidationError("an edit needs field_id and value", path);
                edits.emplace_back(e["field_id"].get<std::string>(), emr::value_from_json(e["value"], path + ".value"));
            }
        }
        return json_response(200, session_json(mutate(version_of(r, body), [&](VisitSession& s, const workflow::Caller& by) {
                                 engine_.finalize_emr(s, edits, by);
                             })));
    }
    if (is({"medical-questions"})) {
        if (!get) return no_method();
        const auto s = store_.load_visit(visit_id, schema);
        const auto full = session_json(s);
        return json_response(200, {{"version", s.version()},
                                   {"questions", full["medical_questions"]},
                                   {"answers", full["medical_answers"]}});
    }
    if (is({"medical-questions", "answers"})) {
        if (!post) return no_method();
        auto body = parse_body(r);
        std::vector<llm::MedicalAnswer> answers;
        for (const auto& a : body.value("answers", Json::array())) {
            llm::MedicalAnswer m;
            m.question_id = field<std::string>(a, "question_id");
            if (a.contains("answer") && !a["answer"].is_null()) m.answer = field<std::string>(a, "answer");
            answers.push_back(std::move(m));
        }
        const bool allow_skip = body.value("allow_skip", true);
        return json_response(200, session_json(mutate(version_of(r, body), [&](VisitSession& s, const workflow::Caller& by) {
                                 engine_.complete_medical_questions(s, answers, allow_skip, by);
                             })));
    }
    if (is({"report"})) {
        if (!get) return no_method();
        const auto s = store_.load_visit(visit_id, schema);
        if (!s.report) throw NotFoundError("visit " + visit_id + " has no red-flag report yet");
        return json_response(200, {{"version", s.version()},
                                   {"report", rules::report_to_json(*s.report)},
                                   {"generated_report",
                                    s.generated_report ? rules::report_to_json(*s.generated_report) : Json(nullptr)},
                                   {"acknowledgements", s.acknowledgements},
                                   {"outstanding_critical", workflow::outstanding_critical(s)}});
    }
    if (is({"flags", "acknowledge"})) {
        if (!post) return no_method();
        auto body = parse_body(r);
        const auto ids = field<std::vector<std::string>>(body, "flag_ids");
        return json_response(200, session_json(mutate(version_of(r, body), [&](VisitSession& s, const workflow::Caller& by) {
                                 engine_.acknowledge_flags(s, ids, by);
                             })));
    }
    if (is({"save"})) {
        if (!post) return no_method();
        auto body = parse_body(r);
        return json_response(200, session_json(mutate(version_of(r, body), [&](VisitSession& s, const workflow::Caller& by) {
                                 engine_.save_visit(s, by);
                             })));
    }
    if (is({"ultrasound"})) {
        if (!post) return no_method();
        const auto version = version_of(r, Json::object());
        if (r.body.size() > config_.max_image_bytes)
            throw PayloadTooLargeError("image upload of " + std::to_string(r.body.size()) + " bytes exceeds the limit of " +
                                           std::to_string(config_.max_image_bytes) + " bytes",
                                       config_.max_image_bytes);
        if (r.body.empty()) throw ValidationError("empty image upload", "body");
        store_.blobs().put(r.body);
        return json_response(200, session_json(mutate(version, [&](VisitSession& s, const workflow::Caller& by) {
                                 engine_.attach_ultrasound(s, r.body, *b_.extractor, by);
                             })));
    }
    if (is({"complete"})) {
        if (!post) return no_method();
        auto body = parse_body(r);
        const bool confirm = body.value("confirm", false);
        return json_response(200, session_json(mutate(version_of(r, body), [&](VisitSession& s, const workflow::Caller& by) {
                                 engine_.complete_visit(s, confirm, by);
                             })));
    }
    if (is({"surveys"})) {
        if (!post) return no_method();
        auto body = parse_body(r);
        const auto survey = field<std::string>(body, "survey");
        const auto responses = body.value("responses", Json::object());
        return json_response(200, session_json(mutate(version_of(r, body), [&](VisitSession& s, const workflow::Caller& by) {
                                 engine_.submit_survey(s, survey, responses, by);
                             })));
    }
    if (is({"attachments", "*"})) {
        if (!get) return no_method();
        const auto s = store_.load_visit(visit_id, schema);
        bool owned = s.ultrasound && s.ultrasound->image_digest == rest[1];
        for (const auto& [_, list] : s.audio)
            owned = owned || std::find(list.begin(), list.end(), rest[1]) != list.end();
        if (!owned) throw NotFoundError("visit " + visit_id + " has no attachment " + rest[1]);
        auto bytes = store_.blobs().get(rest[1]);
        if (!bytes) throw NotFoundError("attachment " + rest[1] + " missing");
        return Response{200, "application/octet-stream", *bytes};
    }
    throw NotFoundError("no route " + r.path);
}

std::unique_ptr<httplib::Server> make_http_server(const RecordService& service) {
    auto srv = std::make_unique<httplib::Server>();
    srv->set_payload_max_length(4 * std::max(service.config().max_audio_bytes, service.config().max_image_bytes));
    auto h = [&service](const httplib::Request& req, httplib::Response& res) {
        Request r;
        r.method = req.method;
        r.path = req.path;
        for (const auto& [k, v] : req.params) r.query[k] = v;
        for (const auto& [k, v] : req.headers) r.headers[text::casefold(k)] = v;
        r.body = req.body;
        auto out = service.handle(r);
        res.status = out.status;
        res.set_content(out.body, out.content_type);
    };
    srv->Get(".*", h);
    srv->Post(".*", h);
    srv->Put(".*", h);
    srv->Delete(".*", h);
    srv->Patch(".*", h);
    return srv;
}

} // namespace vemr::service
