#pragma once

#include <stdexcept>
#include <string>

namespace sluaudit {

// Base class for all errors raised by the library. The CLI maps the two
// branches below onto distinct exit codes (data -> 1, statistical -> 2).
class AuditError : public std::runtime_error {
public:
    explicit AuditError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input: parse failures, schema violations, duplicate ids,
// references to unknown records.
class DataError : public AuditError {
public:
    explicit DataError(const std::string& msg) : AuditError(msg) {}
};

// A statistical procedure cannot produce a valid answer on this data.
class StatError : public AuditError {
public:
    explicit StatError(const std::string& msg) : AuditError(msg) {}
};

// Complete or quasi-complete separation: the unpenalized MLE diverges.
class SeparationError : public StatError {
public:
    explicit SeparationError(const std::string& msg) : StatError(msg) {}
};

// The information matrix is singular beyond tolerance (collinear columns).
class RankDeficiencyError : public StatError {
public:
    explicit RankDeficiencyError(const std::string& msg) : StatError(msg) {}
};

}  // namespace sluaudit
