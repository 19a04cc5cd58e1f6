#include <doctest.h>

#include <map>
#include <set>

#include "test_support.hpp"
#include "toctou/pair_classifier.hpp"

using namespace toctou;

namespace {

// Independent re-derivation of the pair decision used as an oracle: collect
// every read-base of `first` (plus overlap hints in both directions) against
// every write-base of `second`, then pick the best candidate.
PairVerdict oracle_classify(const Environment& env, const std::string& first,
                            const std::string& second) {
    const ToolSpec* f = env.find_tool(first);
    const ToolSpec* s = env.find_tool(second);
    REQUIRE(f != nullptr);
    REQUIRE(s != nullptr);
    if (f->accesses.empty() || s->accesses.empty()) return {};
    std::vector<std::pair<double, std::string>> candidates;
    for (const auto& r : f->accesses) {
        if (r.kind != AccessKind::Read) continue;
        for (const auto& w : s->accesses) {
            if (w.kind != AccessKind::Write) continue;
            auto rb = resource::base_name(r.resource);
            auto wb = resource::base_name(w.resource);
            if (rb == wb) {
                candidates.push_back({1.0, wb});
            } else {
                for (const auto& h : r.overlaps_with) {
                    if (h == wb) candidates.push_back({0.5, wb});
                }
                for (const auto& h : w.overlaps_with) {
                    if (h == rb) candidates.push_back({0.5, wb});
                }
            }
        }
    }
    if (candidates.empty()) return {};
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    return {Classification::PotentialToctou, candidates.front().second, candidates.front().first,
            "oracle"};
}

}  // namespace

TEST_SUITE("pair_classifier") {

TEST_CASE("slack check-use pairs are flagged") {
    Environment slack = test::load_fixture_env("slack");

    auto v1 = classify_pair(slack, "get_channels", "send_channel_message");
    CHECK(v1.flagged());
    CHECK(v1.resource == "channel_list");
    CHECK(v1.score == 1.0);

    auto v2 = classify_pair(slack, "get_webpage", "post_webpage");
    CHECK(v2.flagged());
    CHECK(v2.resource == "webpage");
    CHECK(v2.score == 1.0);
}

TEST_CASE("write-then-read order is benign") {
    Environment slack = test::load_fixture_env("slack");
    auto v = classify_pair(slack, "send_channel_message", "get_channels");
    CHECK_FALSE(v.flagged());
    CHECK(v.score == 0.0);
    CHECK_FALSE(v.resource.has_value());
}

TEST_CASE("read-only second call is benign") {
    Environment slack = test::load_fixture_env("slack");
    auto v = classify_pair(slack, "read_inbox", "read_channel_messages");
    CHECK_FALSE(v.flagged());
}

TEST_CASE("unknown tools are rejected") {
    Environment slack = test::load_fixture_env("slack");
    CHECK_THROWS_AS(classify_pair(slack, "get_channels", "no_such"), UnknownToolError);
    CHECK_THROWS_AS(classify_pair(slack, "no_such", "get_channels"), UnknownToolError);
}

TEST_CASE("slack enumerates exactly its two vulnerable pairs") {
    Environment slack = test::load_fixture_env("slack");
    auto pairs = enumerate_pairs(slack);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0] == VulnerablePair{"get_channels", "send_channel_message", "channel_list", 1.0});
    CHECK(pairs[1] == VulnerablePair{"get_webpage", "post_webpage", "webpage", 1.0});
}

TEST_CASE("overlap hints score 0.5") {
    Environment travel = test::load_fixture_env("travel");
    auto v = classify_pair(travel, "search_flights", "book_flight");
    CHECK(v.flagged());
    CHECK(v.score == 0.5);
    CHECK(v.resource == "bookings");

    auto pairs = enumerate_pairs(travel);
    std::set<double> scores;
    for (const auto& p : pairs) scores.insert(p.score);
    CHECK(scores == std::set<double>{0.5, 1.0});
}

TEST_CASE("read-only environment yields no pairs") {
    json doc{{"name", "ro"},
             {"tools",
              json::array({json{{"name", "a"},
                                {"accesses", json::array({json{{"resource", "r"}, {"kind", "read"}}})}},
                           json{{"name", "b"},
                                {"accesses",
                                 json::array({json{{"resource", "r"}, {"kind", "read"}}})}}})},
             {"initial_state", {{"r", 1}}}};
    CHECK(enumerate_pairs(parse_environment(doc)).empty());
}

TEST_CASE("a tool that reads and writes one resource self-pairs") {
    json doc{{"name", "self"},
             {"tools",
              json::array({json{{"name", "rw"},
                                {"accesses", json::array({json{{"resource", "r"}, {"kind", "read"}},
                                                          json{{"resource", "r"}, {"kind", "write"}}})}}})},
             {"initial_state", {{"r", 1}}}};
    auto pairs = enumerate_pairs(parse_environment(doc));
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0] == VulnerablePair{"rw", "rw", "r", 1.0});
}

TEST_CASE("enumerate equals the brute-force double loop") {
    std::mt19937_64 rng(413);
    for (int iter = 0; iter < 300; ++iter) {
        Environment env = test::random_environment(rng);
        auto enumerated = enumerate_pairs(env);

        std::vector<VulnerablePair> expected;
        for (const auto& a : env.tools) {
            for (const auto& b : env.tools) {
                auto v = oracle_classify(env, a.name, b.name);
                if (v.flagged()) expected.push_back({a.name, b.name, *v.resource, v.score});
            }
        }
        std::sort(expected.begin(), expected.end());
        CHECK(enumerated == expected);
    }
}

TEST_CASE("classification is deterministic") {
    std::mt19937_64 rng(99);
    Environment env = test::random_environment(rng);
    for (const auto& a : env.tools) {
        for (const auto& b : env.tools) {
            auto v1 = classify_pair(env, a.name, b.name);
            auto v2 = classify_pair(env, a.name, b.name);
            CHECK(v1.classification == v2.classification);
            CHECK(v1.resource == v2.resource);
            CHECK(v1.score == v2.score);
            CHECK(v1.rationale == v2.rationale);
            // Invariant: flagged <=> score > 0 <=> resource present.
            CHECK(v1.flagged() == (v1.score > 0.0));
            CHECK(v1.flagged() == v1.resource.has_value());
        }
    }
}

TEST_CASE("order sensitivity: reversing roles unflags unless symmetric") {
    std::mt19937_64 rng(7);
    int flagged_seen = 0;
    for (int iter = 0; iter < 200; ++iter) {
        Environment env = test::random_environment(rng);
        for (const auto& a : env.tools) {
            for (const auto& b : env.tools) {
                auto fwd = classify_pair(env, a.name, b.name);
                if (!fwd.flagged()) continue;
                ++flagged_seen;
                auto rev = classify_pair(env, b.name, a.name);
                if (rev.flagged()) {
                    // Only allowed when b also reads and a also writes some
                    // shared resource.
                    bool symmetric = false;
                    const ToolSpec* bs = env.find_tool(b.name);
                    const ToolSpec* as = env.find_tool(a.name);
                    for (const auto& r : bs->accesses) {
                        if (r.kind != AccessKind::Read) continue;
                        for (const auto& w : as->accesses) {
                            if (w.kind != AccessKind::Write) continue;
                            symmetric |= resource::base_name(r.resource) ==
                                         resource::base_name(w.resource);
                        }
                    }
                    CHECK(symmetric);
                }
            }
        }
    }
    CHECK(flagged_seen > 50);  // the generator actually exercises the property
}

TEST_CASE("adding a read access never unflags a pair") {
    std::mt19937_64 rng(1234);
    for (int iter = 0; iter < 200; ++iter) {
        Environment env = test::random_environment(rng);
        if (env.tools.size() < 2) continue;
        auto& first = env.tools[0];
        const auto& second = env.tools[env.tools.size() - 1];
        auto before = classify_pair(env, first.name, second.name);
        if (!before.flagged()) continue;

        Environment extended = env;
        extended.tools[0].accesses.push_back({"res_0", AccessKind::Read, {}});
        auto after = classify_pair(extended, first.name, second.name);
        CHECK(after.flagged());
    }
}

}  // TEST_SUITE
