#pragma once

#include <stdexcept>
#include <string>

namespace textevo {

/// Invalid run configuration (bad flags, missing seed/objective, ...).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Internal engine state is inconsistent.
class EngineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised before dispatch when the remaining budget cannot cover an evaluation.
class BudgetExhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The evaluator process could not be started at all. Unlike an evaluator
/// failure this is not floored; it aborts the run.
class SpawnFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Evaluator crashed, timed out or returned garbage. Carries whatever the
/// child wrote so the host can surface it as side information.
class EvaluatorFailure : public std::runtime_error {
public:
    explicit EvaluatorFailure(const std::string& what, std::string out = {}, std::string err = {})
        : std::runtime_error(what), stdout_text(std::move(out)), stderr_text(std::move(err)) {}

    std::string stdout_text;
    std::string stderr_text;
};

/// Retryable transport-level failure of a proposer backend.
class TransportFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Proposer gave up (transport retries exhausted or empty refined text).
class ProposerFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Cache I/O or integrity problem. Always fatal.
class CacheError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Checkpoint file cannot be parsed or violates an invariant.
class CorruptCheckpoint : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Checkpoint carries a schema this build does not understand.
class MigrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace textevo
