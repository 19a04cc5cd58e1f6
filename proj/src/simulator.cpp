#include "toctou/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace toctou {

namespace {

constexpr double kDeferEps = 1e-6;  // nudge applied to mutations blocked by a reservation

std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

// splitmix64 step; diffuses adjacent seed values before they reach the RNG.
std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Deterministic truncated-normal sampler (Box-Muller on two uniforms from
/// the session RNG, clamped at zero). Hand-rolled so logs are byte-identical
/// regardless of the standard library's distribution internals.
class DelaySampler {
public:
    DelaySampler(std::uint64_t seed, double mean, double std)
        : rng_(mix_seed(seed)), mean_(mean), std_(std) {}

    double sample() {
        double u1 = uniform01();
        double u2 = uniform01();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return std::max(0.0, mean_ + std_ * z);
    }

private:
    double uniform01() {
        // (0, 1]: never zero, so the log above is finite.
        return (static_cast<double>(rng_() >> 11) + 1.0) / 9007199254740993.0;
    }
    std::mt19937_64 rng_;
    double mean_;
    double std_;
};

}  // namespace

std::string to_string(EventKind k) {
    switch (k) {
        case EventKind::CallStart: return "CALL_START";
        case EventKind::CallEnd: return "CALL_END";
        case EventKind::Verdict: return "VERDICT";
        case EventKind::AdversaryMutation: return "ADVERSARY_MUTATION";
        case EventKind::FusedSubevent: return "FUSED_SUBEVENT";
        case EventKind::Halt: return "HALT";
    }
    return "CALL_START";
}

std::string SessionLog::to_jsonl() const {
    std::ostringstream out;
    for (const auto& e : events) {
        json line{{"t", e.t}, {"kind", to_string(e.kind)}, {"payload", e.payload}};
        out << line.dump() << "\n";
    }
    json summary{{"kind", "SUMMARY"},
                 {"final_state_hash", final_state_hash},
                 {"exploited", exploited},
                 {"sequences_fused", sequences_fused}};
    out << summary.dump() << "\n";
    return out.str();
}

int SessionLog::count(EventKind kind) const {
    return static_cast<int>(
        std::count_if(events.begin(), events.end(),
                      [&](const SessionEvent& e) { return e.kind == kind; }));
}

void BehaviorRegistry::add(const std::string& env, const std::string& tool, ToolBehavior fn) {
    by_env_[env][tool] = std::move(fn);
}

const ToolBehavior* BehaviorRegistry::find(const std::string& env, const std::string& tool) const {
    auto e = by_env_.find(env);
    if (e == by_env_.end()) return nullptr;
    auto t = e->second.find(tool);
    if (t == e->second.end()) return nullptr;
    return &t->second;
}

json SimSession::read_resource(const std::string& key) {
    json value = state_.contains(key) ? state_[key] : json();
    if (unit_reads_ && !unit_reads_->contains(key)) {
        (*unit_reads_)[key] = state_hash(value);
    }
    return value;
}

void SimSession::write_resource(const std::string& key, json value) {
    state_[key] = std::move(value);
    if (unit_writes_) unit_writes_->push_back(key);
}

bool SimSession::has_resource(const std::string& key) const {
    return state_.contains(key);
}

std::string state_hash(const json& state) {
    return fnv1a_hex(state.dump());
}

// ---------------------------------------------------------------------------
// Session runner
// ---------------------------------------------------------------------------

class SessionRunner {
public:
    SessionRunner(const Environment& env, const Trajectory& plan, const MonitorAutomaton* monitor,
                  const AdversarySchedule* adversary, const SimConfig& cfg,
                  const BehaviorRegistry* behaviors)
        : env_(env),
          plan_(plan),
          monitor_(monitor),
          cfg_(cfg),
          behaviors_(behaviors),
          sampler_(cfg.seed, cfg.reasoning_delay_mean, cfg.reasoning_delay_std) {
        session_.state_ = env.initial_state;
        if (adversary) {
            for (std::size_t i = 0; i < adversary->triggers.size(); ++i) {
                pending_.push_back({adversary->triggers[i], i, std::nullopt});
            }
        }
        if (monitor_) monitor_state_ = reset(*monitor_);
    }

    SessionLog run() {
        for (const auto& call : plan_.calls) {
            double planned = clock_ + sampler_.sample();
            if (auto last_mutation = fire_due_adversary(planned)) {
                // The next call strictly follows any mutation that was due.
                planned = std::max(planned, *last_mutation + kDeferEps);
            }

            const ToolSpec* spec = env_.find_tool(call.tool);
            if (!spec) throw UnknownToolError(call.tool);

            ToolCall to_exec = call;
            bool fused_exec = spec->is_fused();
            if (monitor_) {
                auto [verdict, next_state] = step(*monitor_, monitor_state_, env_, call);
                log_.events.push_back(
                    {planned, EventKind::Verdict, verdict_to_json(call.seq, call.tool, verdict)});
                if (verdict.kind == VerdictKind::Halt) {
                    log_.events.push_back({planned, EventKind::Halt,
                                           {{"seq", call.seq},
                                            {"tool", call.tool},
                                            {"resource", verdict.resource ? json(*verdict.resource)
                                                                          : json()},
                                            {"message", verdict.message}}});
                    monitor_state_ = std::move(next_state);
                    break;  // the monitor halts the call and the session ends
                }
                if (verdict.kind == VerdictKind::Fuse) {
                    to_exec = substitute(call, verdict, env_, monitor_state_);
                    fused_exec = true;
                    ++log_.sequences_fused;
                }
                monitor_state_ = std::move(next_state);
            }

            if (fused_exec) {
                execute_fused_call(to_exec, planned);
            } else {
                execute_primitive(to_exec, planned);
            }
        }
        finish();
        return std::move(log_);
    }

private:
    struct PendingTrigger {
        AdversaryTrigger trigger;
        std::size_t index;
        std::optional<double> fire_t;  // set once the anchor call completes
    };

    struct UnitRecord {
        double t_start = 0.0;
        double t_end = 0.0;
        std::map<std::string, std::string> reads;  // key -> first-read digest
        std::vector<std::string> writes;
    };

    /// Fire every armed trigger due by `limit`. Mutations blocked by a
    /// completed call's reservation are deferred just past that call's end.
    /// Returns the latest effective mutation time so the caller can start the
    /// next call after it.
    std::optional<double> fire_due_adversary(double limit) {
        std::vector<PendingTrigger*> due;
        for (auto& p : pending_) {
            if (p.fire_t && *p.fire_t <= limit) due.push_back(&p);
        }
        std::optional<double> latest;
        std::vector<std::pair<double, PendingTrigger*>> ordered;
        for (auto* p : due) {
            double eff = *p->fire_t;
            bool deferred = false;
            for (const auto& [s, e] : reservations_) {
                if (eff >= s && eff <= e) {
                    eff = e + kDeferEps;
                    deferred = true;
                }
            }
            ordered.push_back({eff, p});
            deferred_.insert_or_assign(p->index, deferred);
        }
        std::stable_sort(ordered.begin(), ordered.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (auto& [eff, p] : ordered) {
            session_.state_[p->trigger.resource] = p->trigger.mutation;
            mutations_.push_back({p->trigger.resource, eff});
            log_.events.push_back({eff, EventKind::AdversaryMutation,
                                   {{"resource", p->trigger.resource},
                                    {"trigger", p->index},
                                    {"deferred", deferred_.at(p->index)}}});
            latest = latest ? std::max(*latest, eff) : eff;
        }
        std::erase_if(pending_, [&](const PendingTrigger& p) {
            return p.fire_t && *p.fire_t <= limit;
        });
        return latest;
    }

    void arm_triggers(const std::string& tool, double call_end) {
        for (auto& p : pending_) {
            if (!p.fire_t && p.trigger.after_tool == tool) {
                p.fire_t = call_end + p.trigger.delay;
            }
        }
    }

    json run_behavior(const std::string& tool, const json& args, UnitRecord& unit) {
        const ToolBehavior* behavior = behaviors_->find(env_.name, tool);
        if (!behavior) throw BehaviorMissingError(tool);
        session_.unit_reads_ = &unit.reads;
        session_.unit_writes_ = &unit.writes;
        json result;
        try {
            result = (*behavior)(session_, args);
        } catch (...) {
            session_.unit_reads_ = nullptr;
            session_.unit_writes_ = nullptr;
            throw;
        }
        session_.unit_reads_ = nullptr;
        session_.unit_writes_ = nullptr;
        return result;
    }

    /// Exploitation bookkeeping, evaluated when a unit (primitive call or
    /// fused sub-part) completes: the unit acted (wrote something) on a value
    /// that differs from what the session last observed for that key, with an
    /// adversary mutation in between.
    void account_unit(const UnitRecord& unit) {
        for (const auto& [key, digest] : unit.reads) {
            auto known = last_known_.find(key);
            if (known != last_known_.end() && known->second.second != digest &&
                !unit.writes.empty()) {
                for (const auto& [mkey, mt] : mutations_) {
                    if (mkey == key && mt > known->second.first && mt < unit.t_start) {
                        log_.exploited = true;
                    }
                }
            }
        }
        // The agent now knows the post-call value of everything it touched.
        for (const auto& [key, _] : unit.reads) {
            json value = session_.state_.contains(key) ? session_.state_[key] : json();
            last_known_[key] = {unit.t_end, state_hash(value)};
        }
        for (const auto& key : unit.writes) {
            json value = session_.state_.contains(key) ? session_.state_[key] : json();
            last_known_[key] = {unit.t_end, state_hash(value)};
        }
    }

    void execute_primitive(const ToolCall& call, double t_start) {
        double t_end = t_start + cfg_.tool_exec_time;
        log_.events.push_back({t_start, EventKind::CallStart,
                               {{"seq", call.seq}, {"tool", call.tool}, {"args", call.args}}});
        UnitRecord unit{t_start, t_end, {}, {}};
        json snapshot = session_.state_;
        json result;
        json error;
        try {
            result = run_behavior(call.tool, call.args, unit);
        } catch (const BehaviorMissingError&) {
            throw;
        } catch (const std::exception& e) {
            session_.state_ = snapshot;
            error = e.what();
        }
        account_unit(unit);
        json end_payload{{"seq", call.seq},
                         {"tool", call.tool},
                         {"duration", cfg_.tool_exec_time},
                         {"result", result}};
        if (!error.is_null()) end_payload["error"] = error;
        log_.events.push_back({t_end, EventKind::CallEnd, std::move(end_payload)});
        reservations_.push_back({t_start, t_end});
        arm_triggers(call.tool, t_end);
        clock_ = t_end;
    }

    void execute_fused_call(const ToolCall& call, double t_start) {
        const ToolSpec* spec = env_.find_tool(call.tool);
        if (!spec || spec->fused_from.size() != 2) throw UnknownToolError(call.tool);
        const std::string& check_tool = spec->fused_from[0];
        const std::string& use_tool = spec->fused_from[1];
        const ToolSpec* check_spec = env_.find_tool(check_tool);
        const ToolSpec* use_spec = env_.find_tool(use_tool);
        if (!check_spec) throw UnknownToolError(check_tool);
        if (!use_spec) throw UnknownToolError(use_tool);

        // Split the merged arguments back onto the two parts.
        json check_args = json::object();
        json use_args = json::object();
        for (const auto& [name, binding] : build_arg_mapping(*check_spec, *use_spec)) {
            if (!call.args.contains(name)) continue;
            (binding.part == FusedPart::Check ? check_args : use_args)[binding.original] =
                call.args[name];
        }

        // Both parts run under one exclusive reservation; the clock advances
        // only by the parts' intrinsic durations.
        double check_end = t_start + cfg_.tool_exec_time;
        double use_end = check_end + cfg_.tool_exec_time;
        log_.events.push_back({t_start, EventKind::CallStart,
                               {{"seq", call.seq},
                                {"tool", call.tool},
                                {"args", call.args},
                                {"fused", true},
                                {"check_part", check_tool},
                                {"use_part", use_tool}}});
        json snapshot = session_.state_;
        json error;
        try {
            UnitRecord check_unit{t_start, check_end, {}, {}};
            json check_result = run_behavior(check_tool, check_args, check_unit);
            account_unit(check_unit);
            log_.events.push_back({t_start, EventKind::FusedSubevent,
                                   {{"parent_seq", call.seq},
                                    {"part", "check"},
                                    {"tool", check_tool},
                                    {"t_start", t_start},
                                    {"t_end", check_end},
                                    {"result", check_result}}});

            UnitRecord use_unit{check_end, use_end, {}, {}};
            json use_result = run_behavior(use_tool, use_args, use_unit);
            account_unit(use_unit);
            log_.events.push_back({check_end, EventKind::FusedSubevent,
                                   {{"parent_seq", call.seq},
                                    {"part", "use"},
                                    {"tool", use_tool},
                                    {"t_start", check_end},
                                    {"t_end", use_end},
                                    {"result", use_result}}});
        } catch (const BehaviorMissingError&) {
            throw;
        } catch (const std::exception& e) {
            // Atomicity on failure: no state change survives a failed part.
            session_.state_ = snapshot;
            error = e.what();
        }
        json end_payload{{"seq", call.seq},
                         {"tool", call.tool},
                         {"duration", 2 * cfg_.tool_exec_time},
                         {"fused", true}};
        if (!error.is_null()) end_payload["error"] = error;
        log_.events.push_back({use_end, EventKind::CallEnd, std::move(end_payload)});
        reservations_.push_back({t_start, use_end});
        arm_triggers(call.tool, use_end);
        clock_ = use_end;
    }

    void finish() {
        // Triggers due within the session's lifetime still land; later ones
        // never happen.
        fire_due_adversary(clock_);
        log_.final_state_hash = state_hash(session_.state_);
    }

    const Environment& env_;
    const Trajectory& plan_;
    const MonitorAutomaton* monitor_;
    SimConfig cfg_;
    const BehaviorRegistry* behaviors_;
    DelaySampler sampler_;
    SimSession session_;
    MonitorState monitor_state_;
    SessionLog log_;
    double clock_ = 0.0;
    std::vector<PendingTrigger> pending_;
    std::map<std::size_t, bool> deferred_;
    std::vector<std::pair<double, double>> reservations_;  // executed call intervals
    std::vector<std::pair<std::string, double>> mutations_;  // (key, effective t)
    std::map<std::string, std::pair<double, std::string>> last_known_;  // key -> (t, digest)
};

SessionLog run_session(const Environment& env, const Task* /*task*/, const Trajectory& plan,
                       const MonitorAutomaton* monitor, const AdversarySchedule* adversary,
                       const SimConfig& cfg, const BehaviorRegistry* behaviors) {
    SessionRunner runner(env, plan, monitor, adversary, cfg, behaviors);
    return runner.run();
}

std::optional<double> attack_window(const SessionLog& log, const VulnerablePair& pair) {
    std::optional<double> latest_check_end;
    for (const auto& e : log.events) {
        switch (e.kind) {
            case EventKind::CallEnd:
                if (!e.payload.value("fused", false) && e.payload.value("tool", "") == pair.check_tool) {
                    latest_check_end = e.t;
                }
                break;
            case EventKind::CallStart:
                if (e.payload.value("fused", false)) {
                    if (e.payload.value("check_part", "") == pair.check_tool &&
                        e.payload.value("use_part", "") == pair.use_tool) {
                        // Intra-fused gap: use part start minus check part end,
                        // which is zero by construction of the fused executor.
                        double check_end = e.t;
                        for (const auto& sub : log.events) {
                            if (sub.kind == EventKind::FusedSubevent &&
                                sub.payload.value("parent_seq", -1) == e.payload.value("seq", -2)) {
                                if (sub.payload.value("part", "") == "check") {
                                    check_end = sub.payload.value("t_end", check_end);
                                } else if (sub.payload.value("part", "") == "use") {
                                    return sub.payload.value("t_start", check_end) - check_end;
                                }
                            }
                        }
                        return 0.0;
                    }
                } else if (e.payload.value("tool", "") == pair.use_tool && latest_check_end) {
                    return e.t - *latest_check_end;
                }
                break;
            default:
                break;
        }
    }
    return std::nullopt;
}

}  // namespace toctou
