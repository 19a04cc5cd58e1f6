#pragma once

#include <string>

#include "toctou/core_model.hpp"
#include "toctou/pair_classifier.hpp"

namespace toctou {

/// Shared knobs for the outbound HTTP clients. `endpoint` is a full URL
/// (http://host:port[/path]); requests past `max_in_flight` wait their turn.
struct ClientConfig {
    std::string endpoint;
    double timeout_seconds = 30.0;
    int max_in_flight = 4;
};

/// Ask an external labeler to classify the ordered pair (first, second).
/// Request: POST {first, second, instructions}; response:
/// {classification, resource, confidence, rationale}. The verdict's score is
/// the response confidence. Never falls back to the rule path on its own.
/// Throws TransportError (unreachable, timeout) or ContractError (schema
/// violation); both carry the raw response for audit.
PairVerdict classify_via_external(const ClientConfig& cfg, const Environment& env,
                                  std::string_view first, std::string_view second);

/// Ask an external rewriter for a prompt rewrite. Request:
/// POST {prompt, tools_description, instructions}; response: {rewritten}.
std::string rewrite_via_external(const ClientConfig& cfg, const std::string& prompt,
                                 const Environment& env);

}  // namespace toctou
