#include "toctou/external_client.hpp"

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <mutex>

#include <httplib.h>

#include "toctou/prompts.hpp"

namespace toctou {

namespace {

/// Caps concurrent outbound requests without busy-waiting.
class InFlightGate {
public:
    explicit InFlightGate(int limit) : limit_(limit) {}

    void acquire() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return active_ < limit_; });
        ++active_;
    }
    void release() {
        {
            std::lock_guard lock(mutex_);
            --active_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int limit_;
    int active_ = 0;
};

struct GateGuard {
    InFlightGate& gate;
    explicit GateGuard(InFlightGate& g) : gate(g) { gate.acquire(); }
    ~GateGuard() { gate.release(); }
};

InFlightGate& gate_for(int limit) {
    // One gate per process is enough: the limit of the first caller wins,
    // matching the single-invocation CLI model.
    static InFlightGate gate(limit > 0 ? limit : 4);
    return gate;
}

std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    // scheme://host:port[/path...]
    auto scheme_end = endpoint.find("://");
    std::size_t path_start =
        scheme_end == std::string::npos ? endpoint.find('/') : endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

json post_json(const ClientConfig& cfg, const json& body) {
    auto [host, path] = split_endpoint(cfg.endpoint);
    httplib::Client client(host);
    auto seconds = static_cast<time_t>(cfg.timeout_seconds);
    auto micros = static_cast<time_t>((cfg.timeout_seconds - static_cast<double>(seconds)) * 1e6);
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);

    GateGuard guard(gate_for(cfg.max_in_flight));
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) {
        throw TransportError("request to " + cfg.endpoint +
                             " failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw TransportError("request to " + cfg.endpoint + " returned status " +
                             std::to_string(res->status), res->body);
    }
    try {
        return json::parse(res->body);
    } catch (const json::exception& e) {
        throw ContractError(std::string("response is not valid JSON: ") + e.what(), res->body);
    }
}

json tool_summary(const ToolSpec& tool) {
    json params = json::array();
    for (const auto& p : tool.params) {
        params.push_back({{"name", p.name}, {"type", p.type}, {"required", p.required}});
    }
    return {{"name", tool.name}, {"description", tool.description}, {"params", params}};
}

}  // namespace

PairVerdict classify_via_external(const ClientConfig& cfg, const Environment& env,
                                  std::string_view first, std::string_view second) {
    const ToolSpec* f = env.find_tool(first);
    if (!f) throw UnknownToolError(std::string(first));
    const ToolSpec* s = env.find_tool(second);
    if (!s) throw UnknownToolError(std::string(second));

    json request{{"first", tool_summary(*f)},
                 {"second", tool_summary(*s)},
                 {"instructions", prompts::kPairClassifierInstructions}};
    json response = post_json(cfg, request);

    auto fail = [&](const std::string& why) -> ContractError {
        return ContractError("labeler response violates the contract: " + why, response.dump());
    };
    if (!response.is_object() || !response.contains("classification")) {
        throw fail("missing classification");
    }
    PairVerdict verdict;
    try {
        verdict.classification =
            classification_from_string(response["classification"].get<std::string>());
    } catch (const std::exception&) {
        throw fail("unknown classification value");
    }
    if (!response.contains("confidence") || !response["confidence"].is_number()) {
        throw fail("missing confidence");
    }
    double confidence = response["confidence"].get<double>();
    if (!(confidence >= 0.0 && confidence <= 1.0)) throw fail("confidence outside [0,1]");
    verdict.rationale = response.value("rationale", std::string{});

    if (verdict.classification == Classification::PotentialToctou) {
        if (!response.contains("resource") || !response["resource"].is_string()) {
            throw fail("flagged verdict without a resource");
        }
        verdict.resource = resource::normalize(response["resource"].get<std::string>());
        verdict.score = confidence;
    } else {
        verdict.score = 0.0;
    }
    return verdict;
}

std::string rewrite_via_external(const ClientConfig& cfg, const std::string& prompt,
                                 const Environment& env) {
    json request{{"prompt", prompt},
                 {"tools_description", prompts::tools_description(env)},
                 {"instructions", prompts::kRewriterSystemPrompt}};
    json response = post_json(cfg, request);
    if (!response.is_object() || !response.contains("rewritten") ||
        !response["rewritten"].is_string()) {
        throw ContractError("rewriter response violates the contract: missing rewritten",
                            response.dump());
    }
    return response["rewritten"].get<std::string>();
}

}  // namespace toctou
