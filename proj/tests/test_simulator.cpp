#include <doctest.h>

#include "test_support.hpp"
#include "toctou/pair_classifier.hpp"
#include "toctou/simulator.hpp"

using namespace toctou;

namespace {

struct SlackSim {
    Environment env;
    std::vector<VulnerablePair> pairs;
    MonitorAutomaton monitor;

    explicit SlackSim(Policy policy = Policy::Fuse) {
        Environment base = test::load_fixture_env("slack");
        pairs = enumerate_pairs(base);
        env = register_fusions(base, pairs);
        monitor = build_automaton(pairs, policy);
    }
};

SimConfig fast_cfg(std::uint64_t seed, double mean = 0.5, double std = 0.0) {
    return {.reasoning_delay_mean = mean,
            .reasoning_delay_std = std,
            .tool_exec_time = 0.01,
            .seed = seed};
}

}  // namespace

TEST_SUITE("simulator") {

TEST_CASE("adversary mutation between check and use exploits the session") {
    SlackSim s;
    Trajectory plan = test::load_fixture_plan("session1");
    AdversarySchedule adversary{test::load_fixture_adversary("session1_channel_swap")};

    SessionLog unmonitored = run_session(s.env, nullptr, plan, nullptr, &adversary, fast_cfg(7));
    CHECK(unmonitored.exploited);
    CHECK(unmonitored.count(EventKind::AdversaryMutation) == 1);
    CHECK(unmonitored.sequences_fused == 0);

    SessionLog fused = run_session(s.env, nullptr, plan, &s.monitor, &adversary, fast_cfg(7));
    CHECK_FALSE(fused.exploited);
    CHECK(fused.sequences_fused == 1);
    CHECK(fused.count(EventKind::FusedSubevent) == 2);
}

TEST_CASE("empty plans produce no call events") {
    SlackSim s;
    SessionLog log = run_session(s.env, nullptr, Trajectory{}, nullptr, nullptr, fast_cfg(1));
    CHECK(log.count(EventKind::CallStart) == 0);
    CHECK(log.count(EventKind::CallEnd) == 0);
    CHECK_FALSE(log.exploited);
    CHECK(log.final_state_hash == state_hash(s.env.initial_state));
}

TEST_CASE("identical seeds reproduce byte-identical logs") {
    SlackSim s;
    Trajectory plan = test::load_fixture_plan("session1");
    AdversarySchedule adversary{test::load_fixture_adversary("session1_channel_swap")};
    SimConfig cfg{.reasoning_delay_mean = 1.7, .reasoning_delay_std = 0.9, .tool_exec_time = 0.01,
                  .seed = 42};

    SessionLog a = run_session(s.env, nullptr, plan, &s.monitor, &adversary, cfg);
    SessionLog b = run_session(s.env, nullptr, plan, &s.monitor, &adversary, cfg);
    CHECK(a.to_jsonl() == b.to_jsonl());

    cfg.seed = 43;
    SessionLog c = run_session(s.env, nullptr, plan, &s.monitor, &adversary, cfg);
    CHECK(a.to_jsonl() != c.to_jsonl());
}

TEST_CASE("attack window equals the event timestamp difference exactly") {
    SlackSim s;
    Trajectory plan = test::load_fixture_plan("session2");
    double mean = 0.8;
    SessionLog log = run_session(s.env, nullptr, plan, nullptr, nullptr, fast_cfg(3, mean));

    VulnerablePair pair{"get_webpage", "post_webpage", "webpage", 1.0};
    auto window = attack_window(log, pair);
    REQUIRE(window.has_value());
    // With zero variance the gap is exactly the reasoning delay of the use call.
    CHECK(*window == doctest::Approx(mean).epsilon(1e-12));

    // Cross-check against the raw events.
    double check_end = -1, use_start = -1;
    for (const auto& e : log.events) {
        if (e.kind == EventKind::CallEnd && e.payload.value("tool", "") == "get_webpage") {
            check_end = e.t;
        }
        if (e.kind == EventKind::CallStart && e.payload.value("tool", "") == "post_webpage" &&
            use_start < 0) {
            use_start = e.t;
        }
    }
    CHECK(*window == use_start - check_end);
}

TEST_CASE("fused execution collapses the attack window to zero") {
    SlackSim s;
    Trajectory plan = test::load_fixture_plan("session2");
    SessionLog log = run_session(s.env, nullptr, plan, &s.monitor, nullptr, fast_cfg(3));
    VulnerablePair pair{"get_webpage", "post_webpage", "webpage", 1.0};
    auto window = attack_window(log, pair);
    REQUIRE(window.has_value());
    CHECK(*window == 0.0);
}

TEST_CASE("attack window is absent when the pair never occurs") {
    SlackSim s;
    Trajectory plan = test::load_fixture_plan("session2");
    SessionLog log = run_session(s.env, nullptr, plan, nullptr, nullptr, fast_cfg(3));
    CHECK_FALSE(attack_window(log, {"get_channels", "send_channel_message", "channel_list", 1.0})
                    .has_value());
}

TEST_CASE("state hashes are stable and sensitive") {
    json a{{"x", 1}, {"y", json::array({1, 2})}};
    json b = a;
    CHECK(state_hash(a) == state_hash(b));
    b["y"].push_back(3);
    CHECK(state_hash(a) != state_hash(b));
    // Key order does not matter: objects serialize sorted.
    json c;
    c["y"] = json::array({1, 2});
    c["x"] = 1;
    CHECK(state_hash(a) == state_hash(c));
}

TEST_CASE("mutations scheduled mid-fusion are deferred past the reservation") {
    SlackSim s;
    Trajectory plan;
    plan.calls = {{.tool = "get_webpage", .args = {{"url", "www.eve-blog.com"}}, .seq = 0},
                  {.tool = "post_webpage",
                   .args = {{"url", "www.our-company.com"}, {"content", "x"}},
                   .seq = 1}};
    // Deterministic gap of 0.5s; the trigger lands 5ms into the fused call.
    AdversarySchedule adversary;
    adversary.triggers.push_back({"get_webpage", "webpage", json{{"www.x.com", "evil"}}, 0.505});
    SessionLog log = run_session(s.env, nullptr, plan, &s.monitor, &adversary, fast_cfg(9));

    REQUIRE(log.sequences_fused == 1);
    double fused_start = -1, fused_end = -1, mutation_t = -1;
    bool deferred = false;
    for (const auto& e : log.events) {
        if (e.kind == EventKind::CallStart && e.payload.value("fused", false)) fused_start = e.t;
        if (e.kind == EventKind::CallEnd && e.payload.value("fused", false)) fused_end = e.t;
        if (e.kind == EventKind::AdversaryMutation) {
            mutation_t = e.t;
            deferred = e.payload.value("deferred", false);
        }
    }
    REQUIRE(fused_start >= 0);
    REQUIRE(mutation_t >= 0);
    CHECK(deferred);
    // Never inside the reserved interval.
    bool inside_reservation = mutation_t >= fused_start && mutation_t <= fused_end;
    CHECK_FALSE(inside_reservation);
    CHECK(mutation_t > fused_end);
    CHECK_FALSE(log.exploited);
}

TEST_CASE("halted sessions end without executing the flagged call") {
    SlackSim s(Policy::Halt);
    Trajectory plan = test::load_fixture_plan("session1");
    AdversarySchedule adversary{test::load_fixture_adversary("session1_channel_swap")};
    SessionLog halted = run_session(s.env, nullptr, plan, &s.monitor, &adversary, fast_cfg(11));

    CHECK(halted.count(EventKind::Halt) == 1);
    CHECK_FALSE(halted.exploited);
    // Only the five calls before the flagged send executed.
    CHECK(halted.count(EventKind::CallStart) == 5);

    // The halted call changed nothing: a session truncated before the use
    // call reaches the same final state.
    Trajectory truncated = plan;
    truncated.calls.pop_back();
    SessionLog reference =
        run_session(s.env, nullptr, truncated, nullptr, &adversary, fast_cfg(11));
    CHECK(halted.final_state_hash == reference.final_state_hash);
}

TEST_CASE("fused and sequential execution agree on adversary-free sessions") {
    SlackSim s;
    for (const char* plan_name : {"session1", "session2"}) {
        Trajectory plan = test::load_fixture_plan(plan_name);
        SessionLog plain = run_session(s.env, nullptr, plan, nullptr, nullptr, fast_cfg(21));
        SessionLog fused = run_session(s.env, nullptr, plan, &s.monitor, nullptr, fast_cfg(21));
        CHECK(plain.final_state_hash == fused.final_state_hash);
    }
}

TEST_CASE("a failing check part leaves no state change") {
    Environment env = test::load_fixture_env("slack");
    auto pairs = enumerate_pairs(env);
    env = register_fusions(env, pairs);

    BehaviorRegistry reg = BehaviorRegistry::builtin();  // copy, then break the check part
    reg.add("slack", "get_webpage", [](SimSession&, const json&) -> json {
        throw PartFailureError("check", "upstream fetch refused");
    });

    Trajectory plan;
    plan.calls = {{.tool = "get_and_post_webpage",
                   .args = {{"get_url", "a"}, {"url", "b"}, {"content", "c"}},
                   .seq = 0}};
    SessionLog log = run_session(env, nullptr, plan, nullptr, nullptr, fast_cfg(2), &reg);
    CHECK(log.final_state_hash == state_hash(env.initial_state));
    // The use part never ran: only the failed call's start/end are logged.
    CHECK(log.count(EventKind::FusedSubevent) == 0);
    bool saw_error = false;
    for (const auto& e : log.events) {
        if (e.kind == EventKind::CallEnd && e.payload.contains("error")) saw_error = true;
    }
    CHECK(saw_error);
}

TEST_CASE("missing behaviors are a configuration error") {
    json doc{{"name", "nobehavior"},
             {"tools", json::array({json{{"name", "mystery"}, {"accesses", json::array()}}})},
             {"initial_state", json::object()}};
    Environment env = parse_environment(doc);
    Trajectory plan;
    plan.calls = {{.tool = "mystery", .args = json::object(), .seq = 0}};
    CHECK_THROWS_AS(run_session(env, nullptr, plan, nullptr, nullptr, fast_cfg(1)),
                    BehaviorMissingError);
}

TEST_CASE("exploited only fires when the adversary acts inside the window") {
    SlackSim s;
    Trajectory plan = test::load_fixture_plan("session2");

    // Trigger anchored to the use call: fires after everything is done.
    AdversarySchedule late;
    late.triggers.push_back({"post_webpage", "webpage", json{{"www.x.com", "evil"}}, 0.0});
    SessionLog log = run_session(s.env, nullptr, plan, nullptr, &late, fast_cfg(5));
    CHECK_FALSE(log.exploited);
    CHECK(log.count(EventKind::AdversaryMutation) == 1);

    // Same trigger inside the window exploits.
    AdversarySchedule inside;
    inside.triggers.push_back(
        {"get_webpage", "webpage", json{{"www.our-company.com", "defaced"}}, 0.1});
    SessionLog bad = run_session(s.env, nullptr, plan, nullptr, &inside, fast_cfg(5));
    CHECK(bad.exploited);
}

TEST_CASE("triggers fire at most once") {
    SlackSim s;
    Trajectory plan;
    plan.calls = {{.tool = "get_channels", .args = json::object(), .seq = 0},
                  {.tool = "get_channels", .args = json::object(), .seq = 1},
                  {.tool = "get_channels", .args = json::object(), .seq = 2}};
    AdversarySchedule adversary;
    adversary.triggers.push_back({"get_channels", "channel_list", json{{"channels", json::array()}},
                                  0.01});
    SessionLog log = run_session(s.env, nullptr, plan, nullptr, &adversary, fast_cfg(6));
    CHECK(log.count(EventKind::AdversaryMutation) == 1);
}

}  // TEST_SUITE
