#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "toctou/errors.hpp"

namespace toctou {

using json = nlohmann::json;

/// Resource identifiers are plain strings, compared after lowercase
/// normalization. An optional scope suffix follows the first ':', e.g.
/// "inbox:bob". A manifest may declare a parameter-derived scope with a
/// placeholder: "inbox:{user}" is instantiated from call arguments.
namespace resource {

std::string normalize(std::string_view id);
std::string base_name(std::string_view id);
std::optional<std::string> scope(std::string_view id);
bool is_template(std::string_view id);
/// Placeholder parameter name of a templated resource ("inbox:{user}" -> "user").
std::string scope_param(std::string_view id);

}  // namespace resource

enum class AccessKind { Read, Write };

std::string to_string(AccessKind kind);
AccessKind access_kind_from_string(std::string_view s);

struct ParamSpec {
    std::string name;
    std::string type;
    bool required = true;

    bool operator==(const ParamSpec&) const = default;
};

struct Access {
    std::string resource;  // concrete, or templated with one {param}
    AccessKind kind = AccessKind::Read;
    std::vector<std::string> overlaps_with;  // base names this resource fuzzily overlaps

    bool operator==(const Access&) const = default;
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<ParamSpec> params;
    std::vector<Access> accesses;
    std::vector<std::string> fused_from;  // empty for primitive tools, [check, use] for fused

    bool is_fused() const { return !fused_from.empty(); }
    bool reads(std::string_view base) const;
    bool writes(std::string_view base) const;

    bool operator==(const ToolSpec&) const = default;
};

struct Environment {
    std::string name;
    std::vector<ToolSpec> tools;
    json initial_state = json::object();     // resource -> opaque document
    std::vector<std::string> creatable;      // resource base names creatable on first write

    const ToolSpec* find_tool(std::string_view name) const;

    bool operator==(const Environment&) const = default;
};

struct ToolCall {
    std::string tool;
    json args = json::object();
    int seq = 0;
    std::optional<double> t_start;  // seconds relative to session start
    std::optional<double> t_end;

    bool operator==(const ToolCall&) const = default;
};

enum class TrajectoryOrigin { GroundTruth, Planner, Executed };

struct Trajectory {
    std::vector<ToolCall> calls;
    TrajectoryOrigin origin = TrajectoryOrigin::GroundTruth;

    bool operator==(const Trajectory&) const = default;
};

enum class TaskLabel { Vulnerable, Benign, Unlabeled };

std::string to_string(TaskLabel label);
TaskLabel task_label_from_string(std::string_view s);

struct AdversaryTrigger {
    std::string after_tool;   // fires after this tool's first completed call
    std::string resource;     // concrete state key to mutate
    json mutation;            // replacement value
    double delay = 0.0;       // seconds after the triggering call ends

    bool operator==(const AdversaryTrigger&) const = default;
};

struct Task {
    std::string id;
    std::string prompt;
    std::string environment;
    Trajectory ground_truth;
    std::set<std::string> flags;          // e.g. "injection"
    TaskLabel label = TaskLabel::Unlabeled;

    // Fixture extensions: evaluation-truth override, stored planner output,
    // planner output for the rewritten prompt, and adversary schedule.
    std::optional<TaskLabel> manual_label;
    std::optional<Trajectory> plan;
    std::optional<Trajectory> plan_rewritten;
    std::vector<AdversaryTrigger> adversary;

    bool operator==(const Task&) const = default;
};

/// An ordered (check, use) tool pair sharing an overlapping resource.
/// `resource` is the shared base name; `score` grades the overlap match
/// (1.0 exact base name, 0.5 declared overlap hint).
struct VulnerablePair {
    std::string check_tool;
    std::string use_tool;
    std::string resource;
    double score = 0.0;

    bool operator==(const VulnerablePair&) const = default;
    auto operator<=>(const VulnerablePair&) const = default;
};

struct ResolvedAccess {
    std::string resource;  // concrete key, lowercase
    AccessKind kind = AccessKind::Read;

    bool operator==(const ResolvedAccess&) const = default;
};

// ---------------------------------------------------------------------------
// Manifest and trajectory I/O
// ---------------------------------------------------------------------------

/// Parse and validate an environment manifest. Throws ParseError on malformed
/// input and ValidationError on duplicate tool names or dangling resources;
/// either names the offending entity.
Environment parse_environment(const json& doc);
Environment load_environment(const std::filesystem::path& path);
json serialize_environment(const Environment& env);

json serialize_tool(const ToolSpec& tool);
ToolSpec parse_tool(const json& doc);

json serialize_call(const ToolCall& call);
ToolCall parse_call(const json& doc);

json serialize_trajectory(const Trajectory& t);
Trajectory parse_trajectory(const json& doc);

/// Trajectory logs are JSON-lines, one ToolCall per line.
Trajectory load_plan(const std::filesystem::path& path);
std::string serialize_plan_lines(const Trajectory& t);

json serialize_task(const Task& task);
Task parse_task(const json& doc);
std::vector<Task> load_tasks(const std::filesystem::path& path);
json serialize_tasks(const std::vector<Task>& tasks);

std::vector<AdversaryTrigger> load_adversary(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Access resolution
// ---------------------------------------------------------------------------

/// Instantiate a tool's declared accesses for a concrete call. Scoped
/// resources get their placeholder substituted from args; a missing scope
/// argument raises MissingScopeArgError.
std::vector<ResolvedAccess> resolve_accesses(const Environment& env, const ToolCall& call);

/// Like resolve_accesses, but a missing scope argument degrades to the bare
/// base name instead of failing. Used by static plan analysis where calls
/// may carry symbolic or absent arguments.
std::vector<ResolvedAccess> resolve_accesses_lenient(const Environment& env,
                                                     const ToolCall& call);

}  // namespace toctou
