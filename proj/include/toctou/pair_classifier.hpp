#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "toctou/core_model.hpp"

namespace toctou {

enum class Classification { PotentialToctou, Benign };

std::string to_string(Classification c);
Classification classification_from_string(std::string_view s);

/// Verdict for one ordered tool pair. POTENTIAL_TOCTOU exactly when score > 0
/// and a resource is named; BENIGN otherwise.
struct PairVerdict {
    Classification classification = Classification::Benign;
    std::optional<std::string> resource;  // shared resource base name
    double score = 0.0;
    std::string rationale;

    bool flagged() const { return classification == Classification::PotentialToctou; }
};

/// Statically classify the ordered pair (first, second). Flags when the first
/// tool declares a READ and the second a WRITE on an overlapping resource:
/// equal base names score 1.0, declared overlaps_with hints score 0.5.
/// Read-only second calls, write-then-read order, and disjoint resources are
/// benign. Scope suffixes are ignored here; overlap is judged on base names.
PairVerdict classify_pair(const Environment& env, std::string_view first,
                          std::string_view second);

/// All ordered tool pairs (self-pairs included) whose classification is
/// POTENTIAL_TOCTOU, as VulnerablePair records sorted by
/// (check_tool, use_tool, resource). Fused tools are skipped; they are
/// mitigation artifacts, not check/use candidates.
std::vector<VulnerablePair> enumerate_pairs(const Environment& env);

}  // namespace toctou
