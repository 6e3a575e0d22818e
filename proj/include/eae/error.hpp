#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace eae {

// Root of every error the harness raises on purpose. The CLI maps the
// concrete subclasses onto exit codes (see exit_code_for in runner.hpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    FormatError(std::size_t line_no, const std::string& reason)
        : Error("line " + std::to_string(line_no) + ": " + reason), line_no_(line_no), reason_(reason) {}

    std::size_t line_no() const noexcept { return line_no_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t line_no_;
    std::string reason_;
};

class SettingError : public Error {
public:
    using Error::Error;
};

class SampleError : public Error {
public:
    using Error::Error;
};

class TemplateError : public Error {
public:
    using Error::Error;
};

class ExemplarError : public Error {
public:
    using Error::Error;
};

// Prompt cannot be made to fit its token budget.
class BudgetError : public Error {
public:
    using Error::Error;
};

class AuthError : public Error {
public:
    using Error::Error;
};

class RateLimitExhausted : public Error {
public:
    using Error::Error;
};

class TransportError : public Error {
public:
    using Error::Error;
};

// Cost ledger cap reached; the request was not sent.
class BudgetExceeded : public Error {
public:
    using Error::Error;
};

class GoldMismatch : public Error {
public:
    explicit GoldMismatch(const std::string& doc_id, const std::string& detail = "unknown document or event")
        : Error("gold mismatch for '" + doc_id + "': " + detail), doc_id_(doc_id) {}

    const std::string& doc_id() const noexcept { return doc_id_; }

private:
    std::string doc_id_;
};

class ComparisonError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace eae
