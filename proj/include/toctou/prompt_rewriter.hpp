#pragma once

#include <string>
#include <utility>
#include <vector>

#include "toctou/core_model.hpp"

namespace toctou {

/// One clause-pattern rule: a template over (check-verb, condition, action)
/// clauses and a replacement that re-anchors the condition at the moment the
/// action runs. Applying a rule preserves every named entity verbatim.
struct RewriteRule {
    std::string id;
    std::string description;
};

/// The rules the engine ships, in application order (most specific first).
const std::vector<RewriteRule>& rewrite_rules();

struct RewriteResult {
    std::string text;
    std::vector<std::string> applied;  // rule ids, in application order
};

/// Rewrite check-then-act phrasing into act-only-if-still-valid phrasing.
/// Prompts that match no rule come back unchanged with an empty applied list.
/// Never introduces tool names absent from `env` and never adds imperatives
/// not derivable from the prompt. Total and idempotent.
RewriteResult rewrite(const std::string& prompt, const Environment& env);

/// Multiset of named entities (quoted spans, URL- and filename-like tokens,
/// single-capital identifiers) used by the entity-preservation check.
std::vector<std::string> named_entities(const std::string& text);

}  // namespace toctou
