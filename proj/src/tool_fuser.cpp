#include "toctou/tool_fuser.hpp"

#include <algorithm>
#include <sstream>

namespace toctou {

namespace {

std::vector<std::string> split_tokens(std::string_view name) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : name) {
        if (c == '_') {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out.push_back('_');
        out += t;
    }
    return out;
}

// Token equality up to a trailing plural 's', so "channel" matches "channels".
bool token_matches(const std::string& a, const std::string& b) {
    if (a == b) return true;
    if (a + "s" == b) return true;
    if (b + "s" == a) return true;
    return false;
}

}  // namespace

std::string fused_name(std::string_view check, std::string_view use) {
    auto t1 = split_tokens(check);
    auto t2 = split_tokens(use);
    if (t1.empty() || t2.empty()) return std::string(check) + "_and_" + std::string(use);

    // Longest proper shared trailing token sequence.
    std::size_t max_shared = std::min(t1.size(), t2.size()) - 1;
    std::size_t shared = 0;
    for (std::size_t k = 1; k <= max_shared; ++k) {
        if (t1[t1.size() - k] == t2[t2.size() - k]) {
            shared = k;
        } else {
            break;
        }
    }

    if (shared > 0) {
        std::vector<std::string> head(t1.begin(), t1.end() - static_cast<long>(shared));
        return join_tokens(head) + "_and_" + std::string(use);
    }

    // No shared tail: keep the second name's verb and drop object tokens the
    // first name already carries.
    std::vector<std::string> kept;
    kept.push_back(t2[0]);
    for (std::size_t i = 1; i < t2.size(); ++i) {
        bool redundant = std::any_of(t1.begin(), t1.end(), [&](const std::string& t) {
            return token_matches(t2[i], t);
        });
        if (!redundant) kept.push_back(t2[i]);
    }
    return std::string(check) + "_and_" + join_tokens(kept);
}

std::map<std::string, ArgBinding> build_arg_mapping(const ToolSpec& check, const ToolSpec& use) {
    std::map<std::string, ArgBinding> mapping;
    for (const auto& p : use.params) {
        mapping[p.name] = {FusedPart::Use, p.name};
    }
    auto check_tokens = split_tokens(check.name);
    std::string prefix = check_tokens.empty() ? std::string("check") : check_tokens[0];
    for (const auto& p : check.params) {
        std::string name = mapping.contains(p.name) ? prefix + "_" + p.name : p.name;
        int n = 2;
        while (mapping.contains(name)) name = prefix + "_" + p.name + "_" + std::to_string(n++);
        mapping[name] = {FusedPart::Check, p.name};
    }
    return mapping;
}

FusedTool fuse_pair(const Environment& env, const VulnerablePair& pair) {
    const ToolSpec* check = env.find_tool(pair.check_tool);
    if (!check) throw UnknownToolError(pair.check_tool);
    const ToolSpec* use = env.find_tool(pair.use_tool);
    if (!use) throw UnknownToolError(pair.use_tool);

    bool check_reads = std::any_of(check->accesses.begin(), check->accesses.end(),
                                   [](const Access& a) { return a.kind == AccessKind::Read; });
    bool use_writes = std::any_of(use->accesses.begin(), use->accesses.end(),
                                  [](const Access& a) { return a.kind == AccessKind::Write; });
    if (!check_reads || !use_writes) {
        throw IncompatiblePairError("pair (" + pair.check_tool + ", " + pair.use_tool +
                                    ") has no read->write structure to fuse");
    }

    FusedTool fused;
    fused.check_part = pair.check_tool;
    fused.use_part = pair.use_tool;
    fused.arg_mapping = build_arg_mapping(*check, *use);

    ToolSpec& spec = fused.spec;
    spec.name = fused_name(pair.check_tool, pair.use_tool);
    spec.description = "Atomically performs '" + pair.check_tool + "' immediately followed by '" +
                       pair.use_tool + "' with no gap for the state to drift.";
    spec.fused_from = {pair.check_tool, pair.use_tool};
    for (const auto& [name, binding] : fused.arg_mapping) {
        const ToolSpec* owner = binding.part == FusedPart::Check ? check : use;
        for (const auto& p : owner->params) {
            if (p.name == binding.original) {
                spec.params.push_back({name, p.type, p.required});
            }
        }
    }
    for (const auto& a : check->accesses) spec.accesses.push_back(a);
    for (const auto& a : use->accesses) {
        if (std::find(spec.accesses.begin(), spec.accesses.end(), a) == spec.accesses.end()) {
            spec.accesses.push_back(a);
        }
    }
    return fused;
}

Environment register_fusions(const Environment& env, const std::vector<VulnerablePair>& pairs) {
    Environment out = env;
    for (const auto& pair : pairs) {
        FusedTool fused = fuse_pair(out, pair);
        std::string name = fused.spec.name;
        if (out.find_tool(name)) {
            int n = 2;
            while (n < 100 && out.find_tool(name + "_" + std::to_string(n))) ++n;
            if (n >= 100) {
                throw NameCollisionError("cannot derive a free name for fused tool " + name);
            }
            name += "_" + std::to_string(n);
            fused.spec.name = name;
        }
        out.tools.push_back(std::move(fused.spec));
    }
    return out;
}

ToolCall substitute(const ToolCall& pending, const Verdict& verdict, const Environment& env,
                    const MonitorState& state) {
    if (verdict.kind != VerdictKind::Fuse) {
        throw std::invalid_argument("substitute requires a FUSE verdict");
    }
    const ToolSpec* fused_spec = env.find_tool(verdict.fused_name);
    if (!fused_spec) throw UnknownToolError(verdict.fused_name);
    const ToolSpec* check = env.find_tool(verdict.check_tool);
    const ToolSpec* use = env.find_tool(verdict.use_tool);
    if (!check) throw UnknownToolError(verdict.check_tool);
    if (!use) throw UnknownToolError(verdict.use_tool);

    // The recorded check call supplies the check part's arguments.
    const CheckedEntry* recorded = nullptr;
    for (const auto& e : state.checked) {
        if (e.tool == verdict.check_tool && (!verdict.resource || e.base == *verdict.resource)) {
            if (!recorded || e.seq < recorded->seq) recorded = &e;
        }
    }
    if (!recorded && !check->params.empty()) {
        throw MissingCheckArgsError("no recorded '" + verdict.check_tool +
                                    "' call to take arguments from");
    }

    ToolCall out;
    out.tool = fused_spec->name;
    out.seq = pending.seq;
    for (const auto& [name, binding] : build_arg_mapping(*check, *use)) {
        if (binding.part == FusedPart::Use) {
            if (pending.args.contains(binding.original)) {
                out.args[name] = pending.args[binding.original];
            }
        } else if (recorded) {
            if (recorded->args.contains(binding.original)) {
                out.args[name] = recorded->args[binding.original];
            } else {
                throw MissingCheckArgsError("recorded '" + verdict.check_tool +
                                            "' call lacks argument '" + binding.original + "'");
            }
        }
    }
    return out;
}

}  // namespace toctou
