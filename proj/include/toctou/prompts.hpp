#pragma once

#include <string>

#include "toctou/core_model.hpp"

namespace toctou::prompts {

/// Instructions sent to the external pair-labeling endpoint.
extern const char* const kPairClassifierInstructions;

/// System prompt sent to the external prompt-rewriting endpoint. Contains a
/// "{tools_description}" placeholder.
extern const char* const kRewriterSystemPrompt;

/// Render an environment's toolset the way the external endpoints expect it.
std::string tools_description(const Environment& env);

/// kRewriterSystemPrompt with the placeholder filled in for `env`.
std::string rewriter_prompt_for(const Environment& env);

}  // namespace toctou::prompts
