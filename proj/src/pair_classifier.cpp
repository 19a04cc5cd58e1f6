#include "toctou/pair_classifier.hpp"

#include <algorithm>

namespace toctou {

std::string to_string(Classification c) {
    return c == Classification::PotentialToctou ? "POTENTIAL_TOCTOU" : "BENIGN";
}

Classification classification_from_string(std::string_view s) {
    if (s == "POTENTIAL_TOCTOU") return Classification::PotentialToctou;
    if (s == "BENIGN") return Classification::Benign;
    throw ParseError("invalid classification: " + std::string(s), std::string(s));
}

PairVerdict classify_pair(const Environment& env, std::string_view first,
                          std::string_view second) {
    const ToolSpec* check = env.find_tool(first);
    if (!check) throw UnknownToolError(std::string(first));
    const ToolSpec* use = env.find_tool(second);
    if (!use) throw UnknownToolError(std::string(second));

    bool use_writes = std::any_of(use->accesses.begin(), use->accesses.end(),
                                  [](const Access& a) { return a.kind == AccessKind::Write; });
    if (use->accesses.empty() || check->accesses.empty()) {
        return {Classification::Benign, std::nullopt, 0.0,
                "one of the tools declares no state accesses"};
    }
    if (!use_writes) {
        return {Classification::Benign, std::nullopt, 0.0, "second call is purely a read"};
    }

    // Best (score, resource) over all READ x WRITE combinations, ties broken
    // by the lexicographically smaller resource for determinism.
    std::optional<std::pair<double, std::string>> best;
    auto consider = [&](double score, const std::string& res) {
        if (!best || score > best->first || (score == best->first && res < best->second)) {
            best = {score, res};
        }
    };
    for (const auto& r : check->accesses) {
        if (r.kind != AccessKind::Read) continue;
        std::string read_base = resource::base_name(r.resource);
        for (const auto& w : use->accesses) {
            if (w.kind != AccessKind::Write) continue;
            std::string write_base = resource::base_name(w.resource);
            if (read_base == write_base) {
                consider(1.0, write_base);
            } else {
                bool hinted =
                    std::find(r.overlaps_with.begin(), r.overlaps_with.end(), write_base) !=
                        r.overlaps_with.end() ||
                    std::find(w.overlaps_with.begin(), w.overlaps_with.end(), read_base) !=
                        w.overlaps_with.end();
                if (hinted) consider(0.5, write_base);
            }
        }
    }

    if (!best) {
        return {Classification::Benign, std::nullopt, 0.0,
                "no read of the first tool overlaps a write of the second"};
    }
    std::string rationale = "'" + std::string(first) + "' reads '" + best->second + "' which '" +
                            std::string(second) + "' later writes";
    if (best->first < 1.0) rationale += " (declared overlap)";
    return {Classification::PotentialToctou, best->second, best->first, rationale};
}

std::vector<VulnerablePair> enumerate_pairs(const Environment& env) {
    std::vector<VulnerablePair> pairs;
    for (const auto& a : env.tools) {
        if (a.is_fused()) continue;
        for (const auto& b : env.tools) {
            if (b.is_fused()) continue;
            PairVerdict verdict = classify_pair(env, a.name, b.name);
            if (verdict.flagged()) {
                pairs.push_back({a.name, b.name, *verdict.resource, verdict.score});
            }
        }
    }
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

}  // namespace toctou
