#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vemr/emr.hpp"
#include "vemr/json.hpp"
#include "vemr/workflow.hpp"

struct sqlite3;

namespace vemr::store {

enum class CareType { Public, Private };
std::string_view to_string(CareType c) noexcept;
std::optional<CareType> care_type_from_string(std::string_view s) noexcept;

struct Demographics {
    std::string name;
    std::optional<int> age;
    CareType care = CareType::Public;
    bool operator==(const Demographics&) const = default;
};

struct PatientRecord {
    std::string mr_number;
    Demographics demographics;
    std::vector<std::string> visits; // append-only, in creation order
    bool operator==(const PatientRecord&) const = default;
};

Json patient_to_json(const PatientRecord& p);
PatientRecord patient_from_json(const Json& j);

/// Content-addressed files under `<root>/<first two hex>/<sha256>`.
class BlobStore {
public:
    explicit BlobStore(std::filesystem::path root);
    /// Returns the SHA-256 digest; writing an existing blob is a no-op.
    std::string put(std::string_view bytes) const;
    std::optional<std::string> get(const std::string& digest) const;
    bool contains(const std::string& digest) const;

private:
    std::filesystem::path path_of(const std::string& digest) const;
    std::filesystem::path root_;
};

/// Embedded transactional store: one SQLite file plus a blob directory.
/// Event rows are insert-only; the schema rejects UPDATE and DELETE on them.
/// Safe for concurrent callers (operations are serialized internally).
class Store {
public:
    explicit Store(const std::filesystem::path& data_dir);
    ~Store();
    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    /// Throws ConflictError when the MR number exists.
    void create_patient(const PatientRecord& p);
    /// Throws NotFoundError.
    PatientRecord get_patient(const std::string& mr_number) const;
    void update_demographics(const std::string& mr_number, const Demographics& d);
    std::vector<std::string> patient_ids() const;

    /// Persists a freshly started visit and appends it to the patient.
    /// Throws ConflictError when the visit id exists, NotFoundError for an
    /// unknown patient.
    void create_visit(const workflow::VisitSession& s, const emr::Schema& schema);

    /// Appends the events of `s` past `expected_version` and replaces the
    /// snapshot, atomically. Throws ConflictError when the stored version
    /// differs from `expected_version`.
    void commit(const workflow::VisitSession& s, std::uint64_t expected_version, const emr::Schema& schema);

    /// Throws NotFoundError.
    workflow::VisitSession load_visit(const std::string& visit_id, const emr::Schema& schema) const;
    std::vector<workflow::TransitionEvent> load_events(const std::string& visit_id) const;
    /// Snapshot text exactly as stored.
    std::string snapshot_text(const std::string& visit_id) const;

    /// EMR of the patient's most recent Finalized visit, if any.
    std::optional<emr::Document> latest_finalized_emr(const std::string& mr_number, const emr::Schema& schema) const;

    const BlobStore& blobs() const noexcept { return blobs_; }

private:
    void exec(const char* sql) const;
    ::sqlite3* db_ = nullptr;
    BlobStore blobs_;
    mutable std::recursive_mutex mu_;
};

// ---------------------------------------------------------------------------
// Visit archives

struct ArchiveOptions {
    bool anonymize = false; // patient name replaced by a stable pseudonym
};

/// Self-contained bundle of a Finalized visit: patient record, snapshot,
/// event log, EMR, report, surveys and every attachment (base64).
/// Throws StateError for visits that are not Finalized.
Json export_visit(const Store& store, const std::string& visit_id, const emr::Schema& schema,
                  const ArchiveOptions& options = {});

/// Verifies the bundle (digest chain, replay equals snapshot, attachment
/// digests) and stores it. The patient is created when absent.
/// Returns the visit id.
std::string import_visit(Store& store, const Json& archive, const emr::Schema& schema);

std::string pseudonym(const std::string& mr_number);

} // namespace vemr::store
