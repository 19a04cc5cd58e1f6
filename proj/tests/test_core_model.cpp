#include <doctest.h>

#include <fstream>

#include "test_support.hpp"
#include "toctou/core_model.hpp"

using namespace toctou;

TEST_SUITE("core_model") {

TEST_CASE("slack manifest loads with eight tools") {
    Environment env = test::load_fixture_env("slack");
    CHECK(env.name == "slack");
    CHECK(env.tools.size() == 8);
    CHECK(env.find_tool("get_channels") != nullptr);
    CHECK(env.find_tool("post_webpage") != nullptr);
    CHECK(env.find_tool("no_such_tool") == nullptr);
}

TEST_CASE("duplicate tool names are rejected and named") {
    json doc{
        {"name", "dup"},
        {"tools",
         json::array({json{{"name", "get_channels"}, {"accesses", json::array()}},
                      json{{"name", "get_channels"}, {"accesses", json::array()}}})},
        {"initial_state", json::object()},
    };
    try {
        parse_environment(doc);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(e.entity() == "get_channels");
    }
}

TEST_CASE("environment with zero tools is valid") {
    json doc{{"name", "empty"}, {"tools", json::array()}, {"initial_state", json::object()}};
    Environment env = parse_environment(doc);
    CHECK(env.tools.empty());
}

TEST_CASE("dangling resource ids are rejected") {
    json doc{
        {"name", "dangling"},
        {"tools", json::array({json{
                      {"name", "reader"},
                      {"accesses", json::array({json{{"resource", "ghost"}, {"kind", "read"}}})}}})},
        {"initial_state", json::object()},
    };
    CHECK_THROWS_AS(parse_environment(doc), ValidationError);

    // A creatable base makes the same manifest valid.
    doc["creatable"] = json::array({"ghost"});
    CHECK_NOTHROW(parse_environment(doc));
}

TEST_CASE("manifest round-trips through serialization") {
    for (const char* name : {"slack", "banking", "workspace", "travel", "web_scoped"}) {
        Environment env = test::load_fixture_env(name);
        Environment again = parse_environment(serialize_environment(env));
        CHECK(env == again);
    }
}

TEST_CASE("resolve_accesses instantiates parameter-derived scopes") {
    Environment web = test::load_fixture_env("web_scoped");
    ToolCall call{.tool = "get_webpage", .args = {{"url", "www.eve-blog.com"}}, .seq = 0};
    auto accesses = resolve_accesses(web, call);
    REQUIRE(accesses.size() == 1);
    CHECK(accesses[0].resource == "webpage:www.eve-blog.com");
    CHECK(accesses[0].kind == AccessKind::Read);
}

TEST_CASE("resolve_accesses passes unscoped resources through") {
    Environment slack = test::load_fixture_env("slack");
    ToolCall call{.tool = "get_channels", .args = json::object(), .seq = 0};
    auto accesses = resolve_accesses(slack, call);
    REQUIRE(accesses.size() == 1);
    CHECK(accesses[0].resource == "channel_list");
    CHECK(accesses[0].kind == AccessKind::Read);
}

TEST_CASE("missing scope argument raises MissingScopeArg") {
    Environment web = test::load_fixture_env("web_scoped");
    ToolCall call{.tool = "post_webpage", .args = {{"content", "hello"}}, .seq = 0};
    try {
        resolve_accesses(web, call);
        FAIL("expected MissingScopeArgError");
    } catch (const MissingScopeArgError& e) {
        CHECK(e.param() == "url");
    }
    // The lenient variant degrades to the base name instead.
    auto accesses = resolve_accesses_lenient(web, call);
    REQUIRE(accesses.size() == 1);
    CHECK(accesses[0].resource == "webpage");
}

TEST_CASE("unknown tool raises UnknownTool") {
    Environment slack = test::load_fixture_env("slack");
    ToolCall call{.tool = "launch_rocket", .args = json::object(), .seq = 0};
    CHECK_THROWS_AS(resolve_accesses(slack, call), UnknownToolError);
}

TEST_CASE("scope values are lowercase-normalized") {
    Environment slack = test::load_fixture_env("slack");
    ToolCall call{.tool = "read_inbox", .args = {{"user", "Bob"}}, .seq = 0};
    auto accesses = resolve_accesses(slack, call);
    REQUIRE(accesses.size() == 1);
    CHECK(accesses[0].resource == "inbox:bob");
}

TEST_CASE("resolved accesses never leave the declared set") {
    // Property: for random plans with and without args, every resolved
    // access matches a declared access of the tool modulo scope instantiation.
    std::mt19937_64 rng(20260808);
    for (int iter = 0; iter < 200; ++iter) {
        test::EnvGenOptions opt;
        opt.allow_scoped = true;
        Environment env = test::random_environment(rng, opt);
        Trajectory plan = test::random_plan(rng, env, 10, iter % 2 == 0);
        for (const auto& call : plan.calls) {
            auto accesses = resolve_accesses_lenient(env, call);
            const ToolSpec* spec = env.find_tool(call.tool);
            REQUIRE(spec != nullptr);
            for (const auto& acc : accesses) {
                bool declared = false;
                for (const auto& d : spec->accesses) {
                    declared |= d.kind == acc.kind &&
                                resource::base_name(d.resource) == resource::base_name(acc.resource);
                }
                CHECK(declared);
            }
        }
    }
}

TEST_CASE("plan files load one call per line") {
    Trajectory plan = test::load_fixture_plan("session1");
    REQUIRE(plan.calls.size() == 6);
    CHECK(plan.calls[0].tool == "get_channels");
    CHECK(plan.calls[5].tool == "send_channel_message");
    CHECK(plan.calls[5].args["channel"] == "random");
    for (std::size_t i = 0; i < plan.calls.size(); ++i) {
        CHECK(plan.calls[i].seq == static_cast<int>(i));
    }
}

TEST_CASE("plans round-trip through the JSON-lines format") {
    Trajectory plan = test::load_fixture_plan("session2");
    auto tmp = std::filesystem::temp_directory_path() / "toctou_roundtrip.plan.jsonl";
    {
        std::ofstream out(tmp);
        out << serialize_plan_lines(plan);
    }
    Trajectory again = load_plan(tmp);
    CHECK(again == plan);
    std::filesystem::remove(tmp);
}

TEST_CASE("task labels are stable under re-serialization") {
    Task task;
    task.id = "t1";
    task.prompt = "Check the balance, then transfer.";
    task.environment = "banking";
    task.ground_truth.calls = {{.tool = "get_balance", .args = {{"account", "checking"}}, .seq = 0},
                               {.tool = "transfer_funds",
                                .args = {{"from_account", "checking"},
                                         {"to_account", "savings"},
                                         {"amount", 100}},
                                .seq = 1}};
    task.label = TaskLabel::Vulnerable;
    Task again = parse_task(serialize_task(task));
    CHECK(again == task);
    CHECK(again.label == TaskLabel::Vulnerable);
}

TEST_CASE("calls reject t_end before t_start") {
    json doc{{"tool", "x"}, {"args", json::object()}, {"seq", 0}, {"t_start", 2.0}, {"t_end", 1.0}};
    CHECK_THROWS_AS(parse_call(doc), ValidationError);
}

TEST_CASE("trajectories reject non-consecutive seq values") {
    json doc{{"origin", "planner"},
             {"calls", json::array({json{{"tool", "a"}, {"seq", 0}}, json{{"tool", "b"}, {"seq", 2}}})}};
    CHECK_THROWS_AS(parse_trajectory(doc), ValidationError);
}

TEST_CASE("resource helpers split base and scope") {
    CHECK(resource::base_name("webpage:www.our-company.com") == "webpage");
    CHECK(resource::scope("webpage:www.our-company.com") == "www.our-company.com");
    CHECK(resource::base_name("channel_list") == "channel_list");
    CHECK_FALSE(resource::scope("channel_list").has_value());
    CHECK(resource::is_template("inbox:{user}"));
    CHECK(resource::scope_param("inbox:{user}") == "user");
    CHECK(resource::normalize("Inbox:Bob") == "inbox:bob");
}

}  // TEST_SUITE
