#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "toctou/core_model.hpp"

namespace toctou {

enum class Policy { Halt, Fuse, Warn };

std::string to_string(Policy p);
Policy policy_from_string(std::string_view s);

enum class VerdictKind { Approve, Halt, Fuse, Warn };

std::string to_string(VerdictKind k);

struct Verdict {
    VerdictKind kind = VerdictKind::Approve;
    std::optional<std::string> resource;  // flagged resource base name
    std::string message;
    // Populated for flag verdicts; fused_name only when kind == Fuse.
    std::string check_tool;
    std::string use_tool;
    std::string fused_name;

    bool flagged() const { return kind != VerdictKind::Approve; }
};

json verdict_to_json(int seq, const std::string& tool, const Verdict& v);

/// One armed check: a tracked tool observed `base` (optionally at a concrete
/// scope) and no later monitored write has invalidated the observation.
struct CheckedEntry {
    std::string base;
    std::optional<std::string> scope;
    int seq = 0;
    std::string tool;
    double t_end = 0.0;
    json args = json::object();
};

struct MonitorState {
    std::vector<CheckedEntry> checked;
    std::vector<std::pair<int, Verdict>> history;
};

/// Vulnerable pairs encoded as a per-resource check/use automaton. The
/// violation language is exactly: sequences containing a check_tool call
/// followed, at any later position, by a matching use_tool call on an
/// overlapping resource.
struct MonitorAutomaton {
    std::vector<VulnerablePair> pairs;
    Policy policy = Policy::Halt;
    std::map<std::string, std::set<std::string>> tracked;  // base -> check tools
    std::set<std::string> check_tools;                     // union over pairs
};

MonitorAutomaton build_automaton(std::vector<VulnerablePair> pairs, Policy policy);

MonitorState reset(const MonitorAutomaton& automaton);

/// Consult the monitor before invoking `call`. Returns the verdict and the
/// state reflecting the call having been observed (APPROVE/WARN/FUSE) or not
/// executed (HALT leaves everything but history untouched).
///
/// Runtime scope handling: a write overlaps an armed check when base names
/// match and either side lacks a concrete scope or both scopes are equal.
/// A monitored write that was approved or fused clears the checked entries it
/// overlaps (the caller now holds post-write knowledge); flagged writes under
/// WARN do not clear, so every later use of a stale check keeps flagging.
/// When several armed resources match one call the earliest-checked one is
/// reported.
std::pair<Verdict, MonitorState> step(const MonitorAutomaton& automaton,
                                      const MonitorState& state, const Environment& env,
                                      const ToolCall& call);

/// Statically scan a plan: fold step over the calls with policy WARN and
/// collect every non-APPROVE verdict with its position. The plan is never
/// executed.
std::vector<std::pair<int, Verdict>> check_plan(const MonitorAutomaton& automaton,
                                                const Environment& env, const Trajectory& plan);

/// The fused replacement registered for (check, use), if any.
const ToolSpec* find_fused_tool(const Environment& env, std::string_view check,
                                std::string_view use);

}  // namespace toctou
