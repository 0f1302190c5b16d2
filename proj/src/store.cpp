#include "vemr/store.hpp"

#include <sqlite3.h>

#include <fstream>
#include <set>

#include "vemr/digest.hpp"
#include "vemr/emr_json.hpp"
#include "vemr/error.hpp"
#include "vemr/rules.hpp"
#include "vemr/text.hpp"

namespace vemr::store {

namespace fs = std::filesystem;

std::string_view to_string(CareType c) noexcept { return c == CareType::Public ? "public" : "private"; }

std::optional<CareType> care_type_from_string(std::string_view s) noexcept {
    if (s == "public") return CareType::Public;
    if (s == "private") return CareType::Private;
    return std::nullopt;
}

Json patient_to_json(const PatientRecord& p) {
    Json d{{"name", p.demographics.name},
           {"age", p.demographics.age ? Json(*p.demographics.age) : Json(nullptr)},
           {"care_type", to_string(p.demographics.care)}};
    return Json{{"mr_number", p.mr_number}, {"demographics", d}, {"visits", p.visits}};
}

PatientRecord patient_from_json(const Json& j) {
    try {
        PatientRecord p;
        p.mr_number = j.at("mr_number").get<std::string>();
        const auto& d = j.at("demographics");
        p.demographics.name = d.value("name", std::string());
        if (d.contains("age") && !d["age"].is_null()) p.demographics.age = d["age"].get<int>();
        auto care = care_type_from_string(d.value("care_type", std::string("public")));
        if (!care) throw ValidationError("care_type must be public or private", "demographics.care_type");
        p.demographics.care = *care;
        if (j.contains("visits")) p.visits = j["visits"].get<std::vector<std::string>>();
        return p;
    } catch (const Json::exception& e) {
        throw ParseError(std::string("malformed patient record: ") + e.what(), "patient");
    }
}

// ---------------------------------------------------------------------------
// Blobs

BlobStore::BlobStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

fs::path BlobStore::path_of(const std::string& digest) const {
    if (digest.size() != 64 || digest.find_first_not_of("0123456789abcdef") != std::string::npos)
        throw ValidationError("not a SHA-256 digest: " + digest, "digest");
    return root_ / digest.substr(0, 2) / digest;
}

std::string BlobStore::put(std::string_view bytes) const {
    const auto digest = sha256_hex(bytes);
    const auto path = path_of(digest);
    if (fs::exists(path)) return digest;
    fs::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    text::write_file(tmp, bytes);
    fs::rename(tmp, path);
    return digest;
}

std::optional<std::string> BlobStore::get(const std::string& digest) const {
    const auto path = path_of(digest);
    if (!fs::exists(path)) return std::nullopt;
    return text::read_file(path.string());
}

bool BlobStore::contains(const std::string& digest) const { return fs::exists(path_of(digest)); }

// ---------------------------------------------------------------------------
// SQLite helpers

namespace {

class Stmt {
public:
    Stmt(sqlite3* db, const char* sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql, -1, &st_, nullptr) != SQLITE_OK)
            throw IoError(std::string("sqlite prepare: ") + sqlite3_errmsg(db));
    }
    ~Stmt() { sqlite3_finalize(st_); }
    Stmt(const Stmt&) = delete;
    Stmt& operator=(const Stmt&) = delete;

    Stmt& bind(int i, std::string_view s) {
        sqlite3_bind_text(st_, i, s.data(), static_cast<int>(s.size()), SQLITE_TRANSIENT);
        return *this;
    }
    Stmt& bind(int i, std::int64_t v) {
        sqlite3_bind_int64(st_, i, v);
        return *this;
    }
    /// True while rows remain.
    bool step() {
        const int rc = sqlite3_step(st_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        throw IoError(std::string("sqlite step: ") + sqlite3_errmsg(db_));
    }
    std::string text(int col) const {
        const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(st_, col));
        return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(st_, col))) : std::string();
    }
    std::int64_t integer(int col) const { return sqlite3_column_int64(st_, col); }

private:
    sqlite3* db_;
    sqlite3_stmt* st_ = nullptr;
};

class Transaction {
public:
    explicit Transaction(sqlite3* db) : db_(db) { run("BEGIN IMMEDIATE"); }
    ~Transaction() {
        if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
    }
    void commit() {
        run("COMMIT");
        done_ = true;
    }

private:
    void run(const char* sql) {
        char* err = nullptr;
        if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
            std::string msg = err ? err : "unknown";
            sqlite3_free(err);
            throw IoError(std::string("sqlite: ") + msg);
        }
    }
    sqlite3* db_;
    bool done_ = false;
};

constexpr const char* kSchemaSql = R"sql(
CREATE TABLE IF NOT EXISTS patients (
  mr_number TEXT PRIMARY KEY,
  record    TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS visits (
  visit_id  TEXT PRIMARY KEY,
  mr_number TEXT NOT NULL REFERENCES patients(mr_number),
  state     TEXT NOT NULL,
  version   INTEGER NOT NULL,
  snapshot  TEXT NOT NULL,
  created   INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS events (
  visit_id TEXT NOT NULL,
  seq      INTEGER NOT NULL,
  body     TEXT NOT NULL,
  PRIMARY KEY (visit_id, seq)
);
CREATE TRIGGER IF NOT EXISTS events_no_update BEFORE UPDATE ON events
BEGIN SELECT RAISE(ABORT, 'event log is append-only'); END;
CREATE TRIGGER IF NOT EXISTS events_no_delete BEFORE DELETE ON events
BEGIN SELECT RAISE(ABORT, 'event log is append-only'); END;
)sql";

} // namespace

Store::Store(const fs::path& data_dir) : blobs_(data_dir / "blobs") {
    fs::create_directories(data_dir);
    const auto path = (data_dir / "vemr.sqlite3").string();
    if (sqlite3_open_v2(path.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                        nullptr) != SQLITE_OK) {
        std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
        sqlite3_close(db_);
        throw IoError("cannot open store " + path + ": " + msg);
    }
    sqlite3_busy_timeout(db_, 5000);
    exec("PRAGMA journal_mode=WAL");
    exec("PRAGMA synchronous=FULL");
    exec("PRAGMA foreign_keys=ON");
    exec(kSchemaSql);
}

Store::~Store() { sqlite3_close(db_); }

void Store::exec(const char* sql) const {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown";
        sqlite3_free(err);
        throw IoError("sqlite: " + msg);
    }
}

void Store::create_patient(const PatientRecord& p) {
    std::lock_guard lock(mu_);
    Transaction tx(db_);
    Stmt probe(db_, "SELECT 1 FROM patients WHERE mr_number = ?");
    if (probe.bind(1, p.mr_number).step()) throw ConflictError("patient " + p.mr_number + " already exists");
    PatientRecord fresh = p;
    fresh.visits.clear();
    Stmt ins(db_, "INSERT INTO patients (mr_number, record) VALUES (?, ?)");
    ins.bind(1, p.mr_number).bind(2, patient_to_json(fresh).dump()).step();
    tx.commit();
}

PatientRecord Store::get_patient(const std::string& mr_number) const {
    std::lock_guard lock(mu_);
    Stmt q(db_, "SELECT record FROM patients WHERE mr_number = ?");
    if (!q.bind(1, mr_number).step()) throw NotFoundError("no patient with MR number " + mr_number);
    return patient_from_json(Json::parse(q.text(0)));
}

void Store::update_demographics(const std::string& mr_number, const Demographics& d) {
    std::lock_guard lock(mu_);
    Transaction tx(db_);
    auto p = get_patient(mr_number);
    p.demographics = d;
    Stmt up(db_, "UPDATE patients SET record = ? WHERE mr_number = ?");
    up.bind(1, patient_to_json(p).dump()).bind(2, mr_number).step();
    tx.commit();
}

std::vector<std::string> Store::patient_ids() const {
    std::lock_guard lock(mu_);
    Stmt q(db_, "SELECT mr_number FROM patients ORDER BY mr_number");
    std::vector<std::string> out;
    while (q.step()) out.push_back(q.text(0));
    return out;
}

namespace {

void insert_events(sqlite3* db, const workflow::VisitSession& s, std::uint64_t from) {
    for (std::uint64_t i = from; i < s.events.size(); ++i) {
        Stmt row(db, "INSERT INTO events (visit_id, seq, body) VALUES (?, ?, ?)");
        row.bind(1, s.visit_id)
            .bind(2, static_cast<std::int64_t>(s.events[i].seq))
            .bind(3, workflow::event_to_json(s.events[i]).dump())
            .step();
    }
}

} // namespace

void Store::create_visit(const workflow::VisitSession& s, const emr::Schema& schema) {
    std::lock_guard lock(mu_);
    Transaction tx(db_);
    auto p = get_patient(s.mr_number);
    Stmt probe(db_, "SELECT 1 FROM visits WHERE visit_id = ?");
    if (probe.bind(1, s.visit_id).step()) throw ConflictError("visit " + s.visit_id + " already exists");

    Stmt next(db_, "SELECT COALESCE(MAX(created), 0) + 1 FROM visits");
    next.step();
    Stmt ins(db_, "INSERT INTO visits (visit_id, mr_number, state, version, snapshot, created) VALUES (?, ?, ?, ?, ?, ?)");
    ins.bind(1, s.visit_id)
        .bind(2, s.mr_number)
        .bind(3, workflow::to_string(s.state))
        .bind(4, static_cast<std::int64_t>(s.version()))
        .bind(5, workflow::session_to_json(s, schema).dump())
        .bind(6, next.integer(0))
        .step();
    insert_events(db_, s, 0);

    p.visits.push_back(s.visit_id);
    Stmt up(db_, "UPDATE patients SET record = ? WHERE mr_number = ?");
    up.bind(1, patient_to_json(p).dump()).bind(2, p.mr_number).step();
    tx.commit();
}

void Store::commit(const workflow::VisitSession& s, std::uint64_t expected_version, const emr::Schema& schema) {
    std::lock_guard lock(mu_);
    Transaction tx(db_);
    Stmt q(db_, "SELECT version FROM visits WHERE visit_id = ?");
    if (!q.bind(1, s.visit_id).step()) throw NotFoundError("no visit " + s.visit_id);
    const auto stored = static_cast<std::uint64_t>(q.integer(0));
    if (stored != expected_version)
        throw ConflictError("visit " + s.visit_id + " is at version " + std::to_string(stored) + ", not " +
                            std::to_string(expected_version));
    if (s.version() < stored) throw ConflictError("session is older than the stored visit");
    insert_events(db_, s, stored);
    Stmt up(db_, "UPDATE visits SET state = ?, version = ?, snapshot = ? WHERE visit_id = ?");
    up.bind(1, workflow::to_string(s.state))
        .bind(2, static_cast<std::int64_t>(s.version()))
        .bind(3, workflow::session_to_json(s, schema).dump())
        .bind(4, s.visit_id)
        .step();
    tx.commit();
}

std::string Store::snapshot_text(const std::string& visit_id) const {
    std::lock_guard lock(mu_);
    Stmt q(db_, "SELECT snapshot FROM visits WHERE visit_id = ?");
    if (!q.bind(1, visit_id).step()) throw NotFoundError("no visit " + visit_id);
    return q.text(0);
}

workflow::VisitSession Store::load_visit(const std::string& visit_id, const emr::Schema& schema) const {
    return workflow::session_from_json(Json::parse(snapshot_text(visit_id)), schema);
}

std::vector<workflow::TransitionEvent> Store::load_events(const std::string& visit_id) const {
    std::lock_guard lock(mu_);
    Stmt q(db_, "SELECT body FROM events WHERE visit_id = ? ORDER BY seq");
    q.bind(1, visit_id);
    std::vector<workflow::TransitionEvent> out;
    while (q.step()) out.push_back(workflow::event_from_json(Json::parse(q.text(0))));
    return out;
}

std::optional<emr::Document> Store::latest_finalized_emr(const std::string& mr_number,
                                                         const emr::Schema& schema) const {
    std::lock_guard lock(mu_);
    Stmt q(db_, "SELECT visit_id FROM visits WHERE mr_number = ? AND state = 'finalized' ORDER BY created DESC LIMIT 1");
    if (!q.bind(1, mr_number).step()) return std::nullopt;
    auto s = load_visit(q.text(0), schema);
    return s.emr;
}

// ---------------------------------------------------------------------------
// Archives

std::string pseudonym(const std::string& mr_number) { return "Patient-" + sha256_hex(mr_number).substr(0, 8); }

namespace {

constexpr const char* kArchiveFormat = "vemr-visit-archive/1";

std::set<std::string> attachment_digests(const workflow::VisitSession& s) {
    std::set<std::string> out;
    for (const auto& [_, list] : s.audio)
        for (const auto& d : list) out.insert(d);
    if (s.ultrasound && !s.ultrasound->image_digest.empty()) out.insert(s.ultrasound->image_digest);
    return out;
}

} // namespace

Json export_visit(const Store& store, const std::string& visit_id, const emr::Schema& schema,
                  const ArchiveOptions& options) {
    const auto s = store.load_visit(visit_id, schema);
    if (s.state != workflow::VisitState::Finalized)
        throw StateError("visit " + visit_id + " is not finalized (" + std::string(workflow::to_string(s.state)) + ")");
    auto patient = store.get_patient(s.mr_number);
    if (options.anonymize) patient.demographics.name = pseudonym(patient.mr_number);
    patient.visits = {visit_id};

    Json a;
    a["format"] = kArchiveFormat;
    a["visit_id"] = visit_id;
    a["patient"] = patient_to_json(patient);
    a["snapshot"] = Json::parse(store.snapshot_text(visit_id));
    a["events"] = Json::array();
    for (const auto& e : store.load_events(visit_id)) a["events"].push_back(workflow::event_to_json(e));
    a["emr"] = s.emr ? Json(emr::serialize(*s.emr, schema)) : Json(nullptr);
    a["report"] = s.report ? rules::report_to_json(*s.report) : Json(nullptr);
    a["surveys"] = s.surveys;
    a["attachments"] = Json::object();
    for (const auto& d : attachment_digests(s)) {
        auto bytes = store.blobs().get(d);
        if (!bytes) throw IoError("attachment " + d + " missing from blob store");
        a["attachments"][d] = base64_encode(*bytes);
    }
    return a;
}

std::string import_visit(Store& store, const Json& archive, const emr::Schema& schema) {
    if (archive.value("format", std::string()) != kArchiveFormat)
        throw ValidationError("not a visit archive", "format");
    std::vector<workflow::TransitionEvent> events;
    try {
        for (const auto& e : archive.at("events")) events.push_back(workflow::event_from_json(e));
    } catch (const Json::exception& e) {
        throw ParseError(std::string("archive events: ") + e.what(), "events");
    }
    const auto replayed = workflow::replay(events, schema);
    const auto snapshot = workflow::session_from_json(archive.at("snapshot"), schema);
    if (!(replayed == snapshot)) throw ValidationError("archive snapshot does not match its event log", "snapshot");
    if (snapshot.state != workflow::VisitState::Finalized) throw ValidationError("archived visit not finalized", "snapshot");

    std::map<std::string, std::string> blobs;
    for (const auto& [digest, b64] : archive.at("attachments").items()) {
        auto bytes = base64_decode(b64.get<std::string>());
        if (sha256_hex(bytes) != digest) throw ValidationError("attachment digest mismatch: " + digest, "attachments");
        blobs.emplace(digest, std::move(bytes));
    }
    for (const auto& d : attachment_digests(snapshot))
        if (!blobs.count(d)) throw ValidationError("archive lacks attachment " + d, "attachments");

    auto patient = patient_from_json(archive.at("patient"));
    if (patient.mr_number != snapshot.mr_number) throw ValidationError("patient does not own the visit", "patient");
    try {
        store.get_patient(patient.mr_number);
    } catch (const NotFoundError&) {
        store.create_patient(patient);
    }
    for (const auto& [_, bytes] : blobs) store.blobs().put(bytes);
    store.create_visit(snapshot, schema);
    return snapshot.visit_id;
}

} // namespace vemr::store
