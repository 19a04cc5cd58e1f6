#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toctou/core_model.hpp"
#include "toctou/fsa_monitor.hpp"
#include "toctou/tool_fuser.hpp"

namespace toctou {

struct SimConfig {
    double reasoning_delay_mean = 1.7;  // seconds of agent "thinking" before each call
    double reasoning_delay_std = 0.9;
    double tool_exec_time = 0.01;       // seconds per tool execution
    std::uint64_t seed = 0;
};

struct AdversarySchedule {
    std::vector<AdversaryTrigger> triggers;
};

enum class EventKind { CallStart, CallEnd, Verdict, AdversaryMutation, FusedSubevent, Halt };

std::string to_string(EventKind k);

struct SessionEvent {
    double t = 0.0;
    EventKind kind = EventKind::CallStart;
    json payload;
};

struct SessionLog {
    std::vector<SessionEvent> events;  // chronological
    std::string final_state_hash;
    bool exploited = false;
    int sequences_fused = 0;

    std::string to_jsonl() const;  // one event per line plus a summary line
    int count(EventKind kind) const;
};

class SimSession;

/// Deterministic in-memory stand-in for a real tool: reads and writes the
/// session state through the recording accessors and returns a result
/// document.
using ToolBehavior = std::function<json(SimSession&, const json& args)>;

class BehaviorRegistry {
public:
    void add(const std::string& env, const std::string& tool, ToolBehavior fn);
    const ToolBehavior* find(const std::string& env, const std::string& tool) const;

    /// Behaviors for all shipped fixture environments.
    static const BehaviorRegistry& builtin();

private:
    std::map<std::string, std::map<std::string, ToolBehavior>> by_env_;
};

/// State accessor handed to behaviors. Every read and write is recorded for
/// exploitation analysis; keys are concrete resource ids.
class SimSession {
public:
    json read_resource(const std::string& key);
    void write_resource(const std::string& key, json value);
    bool has_resource(const std::string& key) const;
    const json& state() const { return state_; }

private:
    friend class SessionRunner;
    json state_ = json::object();
    // per-unit recording, managed by the runner
    std::map<std::string, std::string>* unit_reads_ = nullptr;   // key -> first-read digest
    std::vector<std::string>* unit_writes_ = nullptr;
};

/// Execute a trajectory against the environment state. Before each call a
/// reasoning delay ~ Normal(mean, std) truncated at zero is charged; the
/// monitor (if any) is consulted before each invocation (HALT ends the
/// session, FUSE substitutes the registered fused tool); adversary triggers
/// fire `delay` seconds after their anchor call completes, deferred past any
/// in-progress call. Fused executions run both parts back to back under the
/// session's exclusive state reservation with no reasoning delay in between.
SessionLog run_session(const Environment& env, const Task* task, const Trajectory& plan,
                       const MonitorAutomaton* monitor, const AdversarySchedule* adversary,
                       const SimConfig& cfg,
                       const BehaviorRegistry* behaviors = &BehaviorRegistry::builtin());

/// Gap the adversary could use against `pair` in this session:
/// t_start of the first matching use call minus t_end of the latest matching
/// prior check call, or the gap between the two sub-parts of the first fused
/// execution of the pair. Absent when the pair never occurs.
std::optional<double> attack_window(const SessionLog& log, const VulnerablePair& pair);

/// Stable content digest over the canonically serialized state (object keys
/// are emitted sorted).
std::string state_hash(const json& state);

}  // namespace toctou
