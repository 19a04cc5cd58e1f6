#include "toctou/fsa_monitor.hpp"

#include <algorithm>

namespace toctou {

std::string to_string(Policy p) {
    switch (p) {
        case Policy::Halt: return "halt";
        case Policy::Fuse: return "fuse";
        case Policy::Warn: return "warn";
    }
    return "halt";
}

Policy policy_from_string(std::string_view s) {
    std::string lower = resource::normalize(s);
    if (lower == "halt") return Policy::Halt;
    if (lower == "fuse") return Policy::Fuse;
    if (lower == "warn") return Policy::Warn;
    throw ParseError("invalid policy: " + std::string(s), std::string(s));
}

std::string to_string(VerdictKind k) {
    switch (k) {
        case VerdictKind::Approve: return "APPROVE";
        case VerdictKind::Halt: return "HALT";
        case VerdictKind::Fuse: return "FUSE";
        case VerdictKind::Warn: return "WARN";
    }
    return "APPROVE";
}

json verdict_to_json(int seq, const std::string& tool, const Verdict& v) {
    json doc{{"seq", seq}, {"tool", tool}, {"verdict", to_string(v.kind)},
             {"resource", v.resource ? json(*v.resource) : json()}, {"message", v.message}};
    if (v.kind == VerdictKind::Fuse) doc["fused_name"] = v.fused_name;
    return doc;
}

MonitorAutomaton build_automaton(std::vector<VulnerablePair> pairs, Policy policy) {
    MonitorAutomaton automaton;
    automaton.pairs = std::move(pairs);
    automaton.policy = policy;
    for (const auto& p : automaton.pairs) {
        automaton.tracked[p.resource].insert(p.check_tool);
        automaton.check_tools.insert(p.check_tool);
    }
    return automaton;
}

MonitorState reset(const MonitorAutomaton&) {
    return MonitorState{};
}

const ToolSpec* find_fused_tool(const Environment& env, std::string_view check,
                                std::string_view use) {
    for (const auto& t : env.tools) {
        if (t.fused_from.size() == 2 && t.fused_from[0] == check && t.fused_from[1] == use) {
            return &t;
        }
    }
    return nullptr;
}

namespace {

bool scope_compatible(const std::optional<std::string>& a, const std::optional<std::string>& b) {
    return !a || !b || *a == *b;
}

const VulnerablePair* find_pair(const MonitorAutomaton& automaton, const std::string& check,
                                const std::string& use, const std::string& base) {
    for (const auto& p : automaton.pairs) {
        if (p.check_tool == check && p.use_tool == use && p.resource == base) return &p;
    }
    return nullptr;
}

// A declared overlaps_with hint links the check tool's read base to the use
// tool's write base (declared on either side).
bool hint_linked(const Environment& env, const std::string& check_tool,
                 const std::string& use_tool, const std::string& read_base,
                 const std::string& write_base) {
    const ToolSpec* check = env.find_tool(check_tool);
    const ToolSpec* use = env.find_tool(use_tool);
    if (!check || !use) return false;
    for (const auto& a : check->accesses) {
        if (a.kind != AccessKind::Read || resource::base_name(a.resource) != read_base) continue;
        for (const auto& h : a.overlaps_with) {
            if (h == write_base) return true;
        }
    }
    for (const auto& a : use->accesses) {
        if (a.kind != AccessKind::Write || resource::base_name(a.resource) != write_base) continue;
        for (const auto& h : a.overlaps_with) {
            if (h == read_base) return true;
        }
    }
    return false;
}

}  // namespace

std::pair<Verdict, MonitorState> step(const MonitorAutomaton& automaton,
                                      const MonitorState& state, const Environment& env,
                                      const ToolCall& call) {
    auto accesses = resolve_accesses_lenient(env, call);

    // A write overlapping an armed check is a violation; among multiple
    // matches report the earliest-checked resource.
    const CheckedEntry* match = nullptr;
    const VulnerablePair* matched_pair = nullptr;
    for (const auto& acc : accesses) {
        if (acc.kind != AccessKind::Write) continue;
        std::string base = resource::base_name(acc.resource);
        auto scope = resource::scope(acc.resource);
        for (const auto& entry : state.checked) {
            const VulnerablePair* pair = find_pair(automaton, entry.tool, call.tool, base);
            if (!pair) continue;
            // Exact base match honors concrete scopes; overlap-hint matches
            // relate different base names and stay conservative.
            bool overlaps = entry.base == base
                                ? scope_compatible(entry.scope, scope)
                                : hint_linked(env, entry.tool, call.tool, entry.base, base);
            if (!overlaps) continue;
            if (!match || entry.seq < match->seq) {
                match = &entry;
                matched_pair = pair;
            }
        }
    }

    Verdict verdict;
    if (match) {
        verdict.resource = match->base;
        verdict.check_tool = matched_pair->check_tool;
        verdict.use_tool = matched_pair->use_tool;
        verdict.message = "Vulnerable sequence detected: ('" + matched_pair->check_tool +
                          "', '" + matched_pair->use_tool + "')";
        switch (automaton.policy) {
            case Policy::Warn:
                verdict.kind = VerdictKind::Warn;
                break;
            case Policy::Halt:
                verdict.kind = VerdictKind::Halt;
                break;
            case Policy::Fuse: {
                const ToolSpec* fused =
                    find_fused_tool(env, matched_pair->check_tool, matched_pair->use_tool);
                if (fused) {
                    verdict.kind = VerdictKind::Fuse;
                    verdict.fused_name = fused->name;
                } else {
                    verdict.kind = VerdictKind::Halt;
                }
                break;
            }
        }
    } else {
        verdict.kind = VerdictKind::Approve;
        verdict.message = "Current step approved";
    }

    MonitorState next = state;
    next.history.emplace_back(call.seq, verdict);
    if (verdict.kind == VerdictKind::Halt) {
        return {verdict, std::move(next)};
    }

    // Post-write knowledge: approved or fused writes invalidate overlapped
    // checks. Flagged-but-proceeding (WARN) writes keep the stale check armed.
    if (verdict.kind != VerdictKind::Warn) {
        for (const auto& acc : accesses) {
            if (acc.kind != AccessKind::Write) continue;
            std::string base = resource::base_name(acc.resource);
            auto scope = resource::scope(acc.resource);
            std::erase_if(next.checked, [&](const CheckedEntry& e) {
                return e.base == base && scope_compatible(e.scope, scope);
            });
        }
    }

    // Arm (or refresh) checks for reads by tracked check tools. All of a
    // check tool's reads are recorded: overlap hints can tie a read to a
    // differently named written resource.
    for (const auto& acc : accesses) {
        if (acc.kind != AccessKind::Read) continue;
        if (!automaton.check_tools.contains(call.tool)) continue;
        std::string base = resource::base_name(acc.resource);
        auto scope = resource::scope(acc.resource);
        std::erase_if(next.checked, [&](const CheckedEntry& e) {
            return e.base == base && e.scope == scope;
        });
        next.checked.push_back(
            {base, scope, call.seq, call.tool, call.t_end.value_or(0.0), call.args});
    }

    return {verdict, std::move(next)};
}

std::vector<std::pair<int, Verdict>> check_plan(const MonitorAutomaton& automaton,
                                                const Environment& env, const Trajectory& plan) {
    MonitorAutomaton warn = automaton;
    warn.policy = Policy::Warn;
    MonitorState state = reset(warn);
    std::vector<std::pair<int, Verdict>> flags;
    for (const auto& call : plan.calls) {
        try {
            auto [verdict, next] = step(warn, state, env, call);
            state = std::move(next);
            if (verdict.flagged()) flags.emplace_back(call.seq, verdict);
        } catch (const UnknownToolError& e) {
            throw UnknownToolError(e.tool() + " (seq " + std::to_string(call.seq) + ")");
        }
    }
    return flags;
}

}  // namespace toctou
