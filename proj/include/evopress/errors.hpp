#pragma once

#include <stdexcept>
#include <string>

namespace evopress {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration (database, schedule, table, flags).
class ConfigError : public Error {
public:
    using Error::Error;
};

class DuplicateId : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class EmptyLevels : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class IncreasingSizes : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class LevelOutOfRange : public Error {
public:
    using Error::Error;
};

class InfeasibleBudget : public Error {
public:
    using Error::Error;
};

class NoFeasibleSwitch : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class NonFiniteInput : public Error {
public:
    using Error::Error;
};

class CorpusTooSmall : public Error {
public:
    using Error::Error;
};

class SearchSpaceTooLarge : public Error {
public:
    using Error::Error;
};

class KTooLarge : public Error {
public:
    using Error::Error;
};

class NoInversions : public Error {
public:
    using Error::Error;
};

// Fitness oracle failures. Everything coming out of an external oracle
// session derives from OracleError so callers can treat them uniformly.
class OracleError : public Error {
public:
    using Error::Error;
};

class OracleCrashed : public OracleError {
public:
    using OracleError::OracleError;
};

class MalformedResponse : public OracleError {
public:
    using OracleError::OracleError;
};

/// An engine-to-oracle line that does not parse (raised on the oracle side).
class MalformedRequest : public OracleError {
public:
    using OracleError::OracleError;
};

class OracleTimeout : public OracleError {
public:
    using OracleError::OracleError;
};

class ProtocolMismatch : public OracleError {
public:
    using OracleError::OracleError;
};

class SpaceMismatch : public OracleError {
public:
    using OracleError::OracleError;
};

}  // namespace evopress
