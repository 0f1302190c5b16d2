#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vemr {

enum class ErrorCode {
    Validation,   // caller supplied something the contract rejects
    NotFound,
    Conflict,     // uniqueness or optimistic-version clash
    InvalidState, // operation not allowed in the current workflow state
    Parse,        // malformed structured text
    Backend,      // speech / language-model / extractor adapter failure
    Io,
    PayloadTooLarge,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& message, std::string field = {})
        : Error(ErrorCode::Validation, message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class NotFoundError : public Error {
public:
    explicit NotFoundError(const std::string& message) : Error(ErrorCode::NotFound, message) {}
};

class ConflictError : public Error {
public:
    explicit ConflictError(const std::string& message) : Error(ErrorCode::Conflict, message) {}
};

class StateError : public Error {
public:
    explicit StateError(const std::string& message) : Error(ErrorCode::InvalidState, message) {}
};

/// Malformed structured text. `path` names the first offending location
/// (a key path such as `sections[2].fields[4].value`, or a section name for
/// truncated input).
class ParseError : public Error {
public:
    ParseError(const std::string& message, std::string path)
        : Error(ErrorCode::Parse, message + (path.empty() ? "" : " at " + path)),
          path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class BackendError : public Error {
public:
    BackendError(const std::string& message, bool retryable)
        : Error(ErrorCode::Backend, message), retryable_(retryable) {}

    bool retryable() const noexcept { return retryable_; }

private:
    bool retryable_;
};

class PayloadTooLargeError : public Error {
public:
    PayloadTooLargeError(const std::string& message, std::size_t limit)
        : Error(ErrorCode::PayloadTooLarge, message), limit_(limit) {}

    std::size_t limit() const noexcept { return limit_; }

private:
    std::size_t limit_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error(ErrorCode::Io, message) {}
};

} // namespace vemr
