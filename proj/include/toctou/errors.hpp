#pragma once

#include <stdexcept>
#include <string>

namespace toctou {

/// Base class for all library errors. Every subtype names the offending
/// entity (tool, file, parameter, ...) so callers can report precisely.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::string entity)
        : Error(msg), entity_(std::move(entity)) {}
    const std::string& entity() const { return entity_; }

private:
    std::string entity_;
};

class ValidationError : public Error {
public:
    ValidationError(const std::string& msg, std::string entity)
        : Error(msg), entity_(std::move(entity)) {}
    const std::string& entity() const { return entity_; }

private:
    std::string entity_;
};

class UnknownToolError : public Error {
public:
    explicit UnknownToolError(const std::string& tool)
        : Error("unknown tool: " + tool), tool_(tool) {}
    const std::string& tool() const { return tool_; }

private:
    std::string tool_;
};

class MissingScopeArgError : public Error {
public:
    explicit MissingScopeArgError(const std::string& param)
        : Error("missing argument for scoped resource: " + param), param_(param) {}
    const std::string& param() const { return param_; }

private:
    std::string param_;
};

class UnknownEnvironmentError : public Error {
public:
    explicit UnknownEnvironmentError(const std::string& env)
        : Error("unknown environment: " + env), environment_(env) {}
    const std::string& environment() const { return environment_; }

private:
    std::string environment_;
};

/// HTTP transport failure (connect, timeout). Carries whatever raw bytes
/// were received so the failure can be audited.
class TransportError : public Error {
public:
    TransportError(const std::string& msg, std::string raw = {})
        : Error(msg), raw_(std::move(raw)) {}
    const std::string& raw() const { return raw_; }

private:
    std::string raw_;
};

/// The remote endpoint answered but the payload violates the agreed schema.
class ContractError : public Error {
public:
    ContractError(const std::string& msg, std::string raw)
        : Error(msg), raw_(std::move(raw)) {}
    const std::string& raw() const { return raw_; }

private:
    std::string raw_;
};

class IncompatiblePairError : public Error {
public:
    using Error::Error;
};

class NameCollisionError : public Error {
public:
    using Error::Error;
};

class MissingCheckArgsError : public Error {
public:
    using Error::Error;
};

class BehaviorMissingError : public Error {
public:
    explicit BehaviorMissingError(const std::string& tool)
        : Error("no registered behavior for tool: " + tool), tool_(tool) {}
    const std::string& tool() const { return tool_; }

private:
    std::string tool_;
};

class PartFailureError : public Error {
public:
    PartFailureError(std::string part, const std::string& cause)
        : Error("fused part '" + part + "' failed: " + cause), part_(std::move(part)) {}
    const std::string& part() const { return part_; }

private:
    std::string part_;
};

class DegenerateCorpusError : public Error {
public:
    using Error::Error;
};

class UnsupportedFormatError : public Error {
public:
    using Error::Error;
};

}  // namespace toctou
