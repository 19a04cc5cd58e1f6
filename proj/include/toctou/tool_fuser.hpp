#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "toctou/core_model.hpp"
#include "toctou/fsa_monitor.hpp"

namespace toctou {

/// Which part of a fused tool a parameter belongs to.
enum class FusedPart { Check, Use };

struct ArgBinding {
    FusedPart part = FusedPart::Use;
    std::string original;  // parameter name on the part's own spec

    bool operator==(const ArgBinding&) const = default;
};

/// An atomic replacement for a vulnerable pair. Its accesses are the union of
/// both parts' accesses and executing it re-performs the check (fresh read)
/// immediately before the use, with no gap in between.
struct FusedTool {
    ToolSpec spec;  // fused_from = [check_part, use_part]
    std::string check_part;
    std::string use_part;
    std::map<std::string, ArgBinding> arg_mapping;  // fused param -> source
};

/// Deterministic fused-tool name. Splitting both names on '_': a shared
/// trailing token sequence collapses to "<head1>_and_<name2>"
/// (get_webpage + post_webpage -> get_and_post_webpage); otherwise the second
/// name keeps its verb and drops object tokens already present in the first
/// (get_channels + send_channel_message -> get_channels_and_send_message).
std::string fused_name(std::string_view check, std::string_view use);

/// Parameter layout shared by fuse_pair and substitute: use-part parameters
/// keep their names, check-part parameters are renamed
/// "<first token of check tool>_<param>" on collision.
std::map<std::string, ArgBinding> build_arg_mapping(const ToolSpec& check, const ToolSpec& use);

/// Construct (but do not register) the fused tool for a pair. The pair must
/// name existing tools where the check reads and the use writes the shared
/// resource; anything else is IncompatiblePair.
FusedTool fuse_pair(const Environment& env, const VulnerablePair& pair);

/// Extend the environment with one fused tool per pair. Primitive tools stay
/// available. Derived-name collisions get "_2", "_3", ... suffixes.
Environment register_fusions(const Environment& env, const std::vector<VulnerablePair>& pairs);

/// Rewrite a pending use-call into a call of the fused tool named by a FUSE
/// verdict, merging the recorded check-call arguments from the monitor state
/// with the pending call's own arguments.
ToolCall substitute(const ToolCall& pending, const Verdict& verdict, const Environment& env,
                    const MonitorState& state);

}  // namespace toctou
