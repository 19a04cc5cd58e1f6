#include "toctou/core_model.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace toctou {

namespace resource {

std::string normalize(std::string_view id) {
    std::string out(id);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string base_name(std::string_view id) {
    auto pos = id.find(':');
    return normalize(pos == std::string_view::npos ? id : id.substr(0, pos));
}

std::optional<std::string> scope(std::string_view id) {
    auto pos = id.find(':');
    if (pos == std::string_view::npos || pos + 1 >= id.size()) return std::nullopt;
    return normalize(id.substr(pos + 1));
}

bool is_template(std::string_view id) {
    return id.find('{') != std::string_view::npos;
}

std::string scope_param(std::string_view id) {
    auto open = id.find('{');
    auto close = id.find('}', open);
    if (open == std::string_view::npos || close == std::string_view::npos) return {};
    return std::string(id.substr(open + 1, close - open - 1));
}

}  // namespace resource

std::string to_string(AccessKind kind) {
    return kind == AccessKind::Read ? "read" : "write";
}

AccessKind access_kind_from_string(std::string_view s) {
    std::string lower = resource::normalize(s);
    if (lower == "read") return AccessKind::Read;
    if (lower == "write") return AccessKind::Write;
    throw ParseError("invalid access kind: " + std::string(s), std::string(s));
}

std::string to_string(TaskLabel label) {
    switch (label) {
        case TaskLabel::Vulnerable: return "vulnerable";
        case TaskLabel::Benign: return "benign";
        case TaskLabel::Unlabeled: return "unlabeled";
    }
    return "unlabeled";
}

TaskLabel task_label_from_string(std::string_view s) {
    std::string lower = resource::normalize(s);
    if (lower == "vulnerable") return TaskLabel::Vulnerable;
    if (lower == "benign") return TaskLabel::Benign;
    if (lower == "unlabeled") return TaskLabel::Unlabeled;
    throw ParseError("invalid task label: " + std::string(s), std::string(s));
}

bool ToolSpec::reads(std::string_view base) const {
    return std::any_of(accesses.begin(), accesses.end(), [&](const Access& a) {
        return a.kind == AccessKind::Read && resource::base_name(a.resource) == base;
    });
}

bool ToolSpec::writes(std::string_view base) const {
    return std::any_of(accesses.begin(), accesses.end(), [&](const Access& a) {
        return a.kind == AccessKind::Write && resource::base_name(a.resource) == base;
    });
}

const ToolSpec* Environment::find_tool(std::string_view name) const {
    for (const auto& t : tools) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

// ---------------------------------------------------------------------------
// Parsing helpers
// ---------------------------------------------------------------------------

namespace {

const json& require_field(const json& doc, const char* field, const std::string& context) {
    auto it = doc.find(field);
    if (it == doc.end()) {
        throw ParseError("missing field '" + std::string(field) + "' in " + context, field);
    }
    return *it;
}

std::string arg_as_string(const json& value) {
    if (value.is_string()) return value.get<std::string>();
    return value.dump();
}

}  // namespace

ToolSpec parse_tool(const json& doc) {
    if (!doc.is_object()) throw ParseError("tool entry is not an object", "tools");
    ToolSpec tool;
    tool.name = require_field(doc, "name", "tool").get<std::string>();
    tool.description = doc.value("description", std::string{});
    if (auto it = doc.find("params"); it != doc.end()) {
        for (const auto& p : *it) {
            ParamSpec spec;
            spec.name = require_field(p, "name", "param of " + tool.name).get<std::string>();
            spec.type = p.value("type", std::string{"string"});
            spec.required = p.value("required", true);
            tool.params.push_back(std::move(spec));
        }
    }
    if (auto it = doc.find("accesses"); it != doc.end()) {
        for (const auto& a : *it) {
            Access acc;
            acc.resource = require_field(a, "resource", "access of " + tool.name).get<std::string>();
            if (acc.resource.empty()) {
                throw ValidationError("empty resource id in tool " + tool.name, tool.name);
            }
            acc.kind = access_kind_from_string(
                require_field(a, "kind", "access of " + tool.name).get<std::string>());
            if (auto ov = a.find("overlaps_with"); ov != a.end()) {
                for (const auto& o : *ov) {
                    acc.overlaps_with.push_back(resource::normalize(o.get<std::string>()));
                }
            }
            tool.accesses.push_back(std::move(acc));
        }
    }
    if (auto it = doc.find("fused_from"); it != doc.end()) {
        for (const auto& f : *it) tool.fused_from.push_back(f.get<std::string>());
    }
    return tool;
}

json serialize_tool(const ToolSpec& tool) {
    json doc;
    doc["name"] = tool.name;
    doc["description"] = tool.description;
    doc["params"] = json::array();
    for (const auto& p : tool.params) {
        doc["params"].push_back({{"name", p.name}, {"type", p.type}, {"required", p.required}});
    }
    doc["accesses"] = json::array();
    for (const auto& a : tool.accesses) {
        json entry{{"resource", a.resource}, {"kind", to_string(a.kind)}};
        if (!a.overlaps_with.empty()) entry["overlaps_with"] = a.overlaps_with;
        doc["accesses"].push_back(std::move(entry));
    }
    if (!tool.fused_from.empty()) doc["fused_from"] = tool.fused_from;
    return doc;
}

Environment parse_environment(const json& doc) {
    if (!doc.is_object()) throw ParseError("environment manifest is not an object", "manifest");
    Environment env;
    env.name = require_field(doc, "name", "environment").get<std::string>();
    for (const auto& t : require_field(doc, "tools", "environment")) {
        env.tools.push_back(parse_tool(t));
    }
    if (auto it = doc.find("initial_state"); it != doc.end()) {
        if (!it->is_object()) throw ParseError("initial_state is not an object", "initial_state");
        for (const auto& [key, value] : it->items()) {
            env.initial_state[resource::normalize(key)] = value;
        }
    }
    if (auto it = doc.find("creatable"); it != doc.end()) {
        for (const auto& c : *it) env.creatable.push_back(resource::normalize(c.get<std::string>()));
    }

    // Tool names must be unique within the environment.
    std::set<std::string> seen;
    for (const auto& t : env.tools) {
        if (!seen.insert(t.name).second) {
            throw ValidationError("duplicate tool name: " + t.name, t.name);
        }
    }

    // Every referenced resource must exist in initial_state or be creatable.
    auto base_known = [&](const std::string& base) {
        for (const auto& [key, _] : env.initial_state.items()) {
            if (resource::base_name(key) == base) return true;
        }
        return std::find(env.creatable.begin(), env.creatable.end(), base) != env.creatable.end();
    };
    for (const auto& t : env.tools) {
        for (const auto& a : t.accesses) {
            std::string base = resource::base_name(a.resource);
            if (resource::is_template(a.resource)) {
                if (!base_known(base)) {
                    throw ValidationError("dangling resource '" + a.resource + "' in tool " + t.name,
                                          a.resource);
                }
            } else {
                std::string key = resource::normalize(a.resource);
                if (!env.initial_state.contains(key) && !base_known(base)) {
                    throw ValidationError("dangling resource '" + a.resource + "' in tool " + t.name,
                                          a.resource);
                }
            }
        }
    }
    return env;
}

Environment load_environment(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open environment manifest: " + path.string(), path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ParseError("malformed JSON in " + path.string() + ": " + e.what(), path.string());
    }
    return parse_environment(doc);
}

json serialize_environment(const Environment& env) {
    json doc;
    doc["name"] = env.name;
    doc["tools"] = json::array();
    for (const auto& t : env.tools) doc["tools"].push_back(serialize_tool(t));
    doc["initial_state"] = env.initial_state;
    if (!env.creatable.empty()) doc["creatable"] = env.creatable;
    return doc;
}

json serialize_call(const ToolCall& call) {
    json doc{{"tool", call.tool}, {"args", call.args}, {"seq", call.seq}};
    if (call.t_start) doc["t_start"] = *call.t_start;
    if (call.t_end) doc["t_end"] = *call.t_end;
    return doc;
}

ToolCall parse_call(const json& doc) {
    ToolCall call;
    call.tool = require_field(doc, "tool", "tool call").get<std::string>();
    call.args = doc.value("args", json::object());
    call.seq = doc.value("seq", 0);
    if (auto it = doc.find("t_start"); it != doc.end() && !it->is_null()) call.t_start = it->get<double>();
    if (auto it = doc.find("t_end"); it != doc.end() && !it->is_null()) call.t_end = it->get<double>();
    if (call.t_start && call.t_end && *call.t_end < *call.t_start) {
        throw ValidationError("t_end precedes t_start in call of " + call.tool, call.tool);
    }
    return call;
}

namespace {

std::string origin_to_string(TrajectoryOrigin o) {
    switch (o) {
        case TrajectoryOrigin::GroundTruth: return "ground_truth";
        case TrajectoryOrigin::Planner: return "planner";
        case TrajectoryOrigin::Executed: return "executed";
    }
    return "ground_truth";
}

TrajectoryOrigin origin_from_string(std::string_view s) {
    if (s == "ground_truth") return TrajectoryOrigin::GroundTruth;
    if (s == "planner") return TrajectoryOrigin::Planner;
    if (s == "executed") return TrajectoryOrigin::Executed;
    throw ParseError("invalid trajectory origin: " + std::string(s), std::string(s));
}

}  // namespace

json serialize_trajectory(const Trajectory& t) {
    json doc;
    doc["origin"] = origin_to_string(t.origin);
    doc["calls"] = json::array();
    for (const auto& c : t.calls) doc["calls"].push_back(serialize_call(c));
    return doc;
}

Trajectory parse_trajectory(const json& doc) {
    Trajectory t;
    t.origin = origin_from_string(doc.value("origin", std::string{"ground_truth"}));
    int expected_seq = 0;
    for (const auto& c : require_field(doc, "calls", "trajectory")) {
        ToolCall call = parse_call(c);
        if (call.seq != expected_seq) {
            throw ValidationError("trajectory seq values must be consecutive from 0",
                                  std::to_string(call.seq));
        }
        ++expected_seq;
        t.calls.push_back(std::move(call));
    }
    return t;
}

Trajectory load_plan(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open plan: " + path.string(), path.string());
    Trajectory t;
    t.origin = TrajectoryOrigin::Planner;
    std::string line;
    int seq = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("malformed JSON line in " + path.string() + ": " + e.what(),
                             path.string());
        }
        ToolCall call = parse_call(doc);
        call.seq = seq++;
        t.calls.push_back(std::move(call));
    }
    return t;
}

std::string serialize_plan_lines(const Trajectory& t) {
    std::ostringstream out;
    for (const auto& c : t.calls) out << serialize_call(c).dump() << "\n";
    return out.str();
}

json serialize_task(const Task& task) {
    json doc;
    doc["id"] = task.id;
    doc["prompt"] = task.prompt;
    doc["environment"] = task.environment;
    doc["ground_truth"] = serialize_trajectory(task.ground_truth);
    doc["flags"] = task.flags;
    doc["label"] = to_string(task.label);
    if (task.manual_label) doc["manual_label"] = to_string(*task.manual_label);
    if (task.plan) doc["plan"] = serialize_trajectory(*task.plan);
    if (task.plan_rewritten) doc["plan_rewritten"] = serialize_trajectory(*task.plan_rewritten);
    if (!task.adversary.empty()) {
        doc["adversary"] = json::array();
        for (const auto& trig : task.adversary) {
            doc["adversary"].push_back({{"after_tool", trig.after_tool},
                                        {"resource", trig.resource},
                                        {"mutation", trig.mutation},
                                        {"delay", trig.delay}});
        }
    }
    return doc;
}

Task parse_task(const json& doc) {
    Task task;
    task.id = require_field(doc, "id", "task").get<std::string>();
    task.prompt = require_field(doc, "prompt", "task " + task.id).get<std::string>();
    task.environment = require_field(doc, "environment", "task " + task.id).get<std::string>();
    task.ground_truth = parse_trajectory(require_field(doc, "ground_truth", "task " + task.id));
    if (auto it = doc.find("flags"); it != doc.end()) {
        for (const auto& f : *it) task.flags.insert(resource::normalize(f.get<std::string>()));
    }
    task.label = task_label_from_string(doc.value("label", std::string{"unlabeled"}));
    if (auto it = doc.find("manual_label"); it != doc.end() && !it->is_null()) {
        task.manual_label = task_label_from_string(it->get<std::string>());
    }
    if (auto it = doc.find("plan"); it != doc.end() && !it->is_null()) {
        task.plan = parse_trajectory(*it);
    }
    if (auto it = doc.find("plan_rewritten"); it != doc.end() && !it->is_null()) {
        task.plan_rewritten = parse_trajectory(*it);
    }
    if (auto it = doc.find("adversary"); it != doc.end()) {
        for (const auto& a : *it) {
            AdversaryTrigger trig;
            trig.after_tool = require_field(a, "after_tool", "adversary trigger").get<std::string>();
            trig.resource =
                resource::normalize(require_field(a, "resource", "adversary trigger").get<std::string>());
            trig.mutation = require_field(a, "mutation", "adversary trigger");
            trig.delay = a.value("delay", 0.0);
            task.adversary.push_back(std::move(trig));
        }
    }
    return task;
}

std::vector<Task> load_tasks(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open task file: " + path.string(), path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ParseError("malformed JSON in " + path.string() + ": " + e.what(), path.string());
    }
    if (!doc.is_array()) throw ParseError("task file must be a JSON array", path.string());
    std::vector<Task> tasks;
    for (const auto& t : doc) tasks.push_back(parse_task(t));
    return tasks;
}

json serialize_tasks(const std::vector<Task>& tasks) {
    json doc = json::array();
    for (const auto& t : tasks) doc.push_back(serialize_task(t));
    return doc;
}

std::vector<AdversaryTrigger> load_adversary(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open adversary schedule: " + path.string(), path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ParseError("malformed JSON in " + path.string() + ": " + e.what(), path.string());
    }
    std::vector<AdversaryTrigger> triggers;
    for (const auto& a : doc) {
        AdversaryTrigger trig;
        trig.after_tool = require_field(a, "after_tool", "adversary trigger").get<std::string>();
        trig.resource =
            resource::normalize(require_field(a, "resource", "adversary trigger").get<std::string>());
        trig.mutation = require_field(a, "mutation", "adversary trigger");
        trig.delay = a.value("delay", 0.0);
        triggers.push_back(std::move(trig));
    }
    return triggers;
}

// ---------------------------------------------------------------------------
// Access resolution
// ---------------------------------------------------------------------------

namespace {

std::vector<ResolvedAccess> resolve_impl(const Environment& env, const ToolCall& call,
                                         bool lenient) {
    const ToolSpec* spec = env.find_tool(call.tool);
    if (!spec) throw UnknownToolError(call.tool);
    std::vector<ResolvedAccess> out;
    out.reserve(spec->accesses.size());
    for (const auto& a : spec->accesses) {
        if (resource::is_template(a.resource)) {
            std::string param = resource::scope_param(a.resource);
            if (call.args.is_object() && call.args.contains(param)) {
                std::string base = resource::base_name(a.resource);
                out.push_back({base + ":" + resource::normalize(arg_as_string(call.args[param])),
                               a.kind});
            } else if (lenient) {
                out.push_back({resource::base_name(a.resource), a.kind});
            } else {
                throw MissingScopeArgError(param);
            }
        } else {
            out.push_back({resource::normalize(a.resource), a.kind});
        }
    }
    return out;
}

}  // namespace

std::vector<ResolvedAccess> resolve_accesses(const Environment& env, const ToolCall& call) {
    return resolve_impl(env, call, false);
}

std::vector<ResolvedAccess> resolve_accesses_lenient(const Environment& env,
                                                     const ToolCall& call) {
    return resolve_impl(env, call, true);
}

}  // namespace toctou
