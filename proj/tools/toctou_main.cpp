#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "toctou/bench_harness.hpp"
#include "toctou/external_client.hpp"
#include "toctou/fsa_monitor.hpp"
#include "toctou/pair_classifier.hpp"
#include "toctou/prompt_rewriter.hpp"
#include "toctou/simulator.hpp"
#include "toctou/tool_fuser.hpp"

namespace {

using namespace toctou;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitDegenerate = 3;

struct GlobalOptions {
    std::uint64_t seed = 0;
    std::string labeler_endpoint;
    std::string rewriter_endpoint;
    double labeler_timeout = 30.0;
    int jobs = 1;
    std::string out;
    std::string format = "text";
};

void write_out(const GlobalOptions& g, const std::string& content) {
    if (g.out.empty()) return;
    std::ofstream f(g.out, std::ios::binary);
    if (!f) throw ParseError("cannot write output file: " + g.out, g.out);
    f << content;
}

std::string fmt_seconds(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return std::string(buf);
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

struct ClassifyArgs {
    std::string env_path;
    std::string first, second;
    std::string pairs;  // "all"
};

int run_classify(const GlobalOptions& g, const ClassifyArgs& a) {
    Environment env = load_environment(a.env_path);
    if (a.pairs == "all") {
        auto pairs = enumerate_pairs(env);
        json machine = json::array();
        for (const auto& p : pairs) {
            machine.push_back({{"check_tool", p.check_tool},
                               {"use_tool", p.use_tool},
                               {"resource", p.resource},
                               {"score", p.score}});
        }
        if (g.format == "json") {
            std::cout << machine.dump(2) << "\n";
        } else {
            std::cout << "POTENTIAL_TOCTOU pairs in '" << env.name << "' (" << pairs.size()
                      << "):\n";
            for (const auto& p : pairs) {
                std::cout << "  (" << p.check_tool << ", " << p.use_tool << ") on " << p.resource
                          << "  score=" << p.score << "\n";
            }
        }
        write_out(g, machine.dump(2) + "\n");
        return kExitOk;
    }
    if (a.first.empty() || a.second.empty()) {
        std::cerr << "classify: need --pairs all or both --first and --second\n";
        return kExitUsage;
    }
    PairVerdict verdict;
    if (!g.labeler_endpoint.empty()) {
        verdict = classify_via_external({g.labeler_endpoint, g.labeler_timeout, g.jobs}, env,
                                        a.first, a.second);
    } else {
        verdict = classify_pair(env, a.first, a.second);
    }
    json machine{{"classification", to_string(verdict.classification)},
                 {"resource", verdict.resource ? json(*verdict.resource) : json()},
                 {"score", verdict.score},
                 {"rationale", verdict.rationale}};
    if (g.format == "json") {
        std::cout << machine.dump(2) << "\n";
    } else {
        std::cout << "(" << a.first << ", " << a.second << ") -> "
                  << to_string(verdict.classification);
        if (verdict.resource) std::cout << " on " << *verdict.resource;
        std::cout << "  score=" << verdict.score << "\n  " << verdict.rationale << "\n";
    }
    write_out(g, machine.dump(2) + "\n");
    return kExitOk;
}

// ---------------------------------------------------------------------------
// monitor-check
// ---------------------------------------------------------------------------

struct MonitorCheckArgs {
    std::string env_path;
    std::string plan_path;
};

int run_monitor_check(const GlobalOptions& g, const MonitorCheckArgs& a) {
    Environment env = load_environment(a.env_path);
    Trajectory plan = load_plan(a.plan_path);
    MonitorAutomaton automaton = build_automaton(enumerate_pairs(env), Policy::Warn);
    auto flags = check_plan(automaton, env, plan);

    // Verdict log: JSON lines, one verdict per flagged position.
    std::string machine;
    for (const auto& [seq, verdict] : flags) {
        machine +=
            verdict_to_json(seq, plan.calls[static_cast<std::size_t>(seq)].tool, verdict).dump() +
            "\n";
    }
    if (g.format == "json") {
        std::cout << machine;
    } else if (flags.empty()) {
        std::cout << "plan is clean: no check-use violations\n";
    } else {
        for (const auto& [seq, verdict] : flags) {
            std::cout << "seq " << seq << ": " << verdict.message << "\n";
        }
    }
    write_out(g, machine);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// fuse
// ---------------------------------------------------------------------------

struct FuseArgs {
    std::string env_path;
};

int run_fuse(const GlobalOptions& g, const FuseArgs& a) {
    Environment env = load_environment(a.env_path);
    auto pairs = enumerate_pairs(env);
    Environment fused = register_fusions(env, pairs);
    json manifest = serialize_environment(fused);
    if (g.format == "json") {
        std::cout << manifest.dump(2) << "\n";
    } else {
        std::cout << "registered " << pairs.size() << " fused tool(s) in '" << env.name << "':\n";
        for (const auto& tool : fused.tools) {
            if (tool.is_fused()) {
                std::cout << "  " << tool.name << " = " << tool.fused_from[0] << " + "
                          << tool.fused_from[1] << "\n";
            }
        }
    }
    write_out(g, manifest.dump(2) + "\n");
    return kExitOk;
}

// ---------------------------------------------------------------------------
// rewrite
// ---------------------------------------------------------------------------

struct RewriteArgs {
    std::string env_path;
    std::string prompt;
    std::string endpoint;
};

int run_rewrite(const GlobalOptions& g, const RewriteArgs& a) {
    Environment env = load_environment(a.env_path);
    std::string endpoint = !a.endpoint.empty() ? a.endpoint : g.rewriter_endpoint;
    std::string rewritten;
    json applied = json::array();
    if (!endpoint.empty()) {
        rewritten = rewrite_via_external({endpoint, g.labeler_timeout, g.jobs}, a.prompt, env);
        applied.push_back("external");
    } else {
        auto result = rewrite(a.prompt, env);
        rewritten = result.text;
        for (const auto& id : result.applied) applied.push_back(id);
    }
    std::cout << rewritten << "\n";
    std::cerr << "applied rules: " << applied.dump() << "\n";
    write_out(g, json{{"rewritten", rewritten}, {"applied", applied}}.dump(2) + "\n");
    return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string env_path;
    std::string task_path;
    std::string plan_path;
    std::string monitor = "off";
    std::string policy = "fuse";
    std::string adversary_path;
    double delay_mean = 1.7;
    double delay_std = 0.9;
    double exec_time = 0.01;
};

void print_transcript(const SessionLog& log) {
    for (const auto& e : log.events) {
        switch (e.kind) {
            case EventKind::Verdict: {
                std::cout << "Proposed Tool Calls: ['" << e.payload.value("tool", "") << "']\n";
                std::string verdict = e.payload.value("verdict", "");
                if (verdict == "APPROVE") {
                    std::cout << "Current step approved\n";
                } else if (verdict == "WARN") {
                    std::cout << e.payload.value("message", "") << "\n";
                    std::cout << "Current step approved with warning\n";
                } else if (verdict == "FUSE") {
                    std::cout << e.payload.value("message", "") << "\n";
                    std::cout << "Replacing with fused tool: " << e.payload.value("fused_name", "")
                              << "\n";
                    std::cout << "Current step modified and approved\n";
                } else if (verdict == "HALT") {
                    std::cout << e.payload.value("message", "") << "\n";
                    std::cout << "Current step halted, user alerted\n";
                }
                break;
            }
            case EventKind::CallEnd: {
                if (e.payload.value("fused", false)) {
                    std::cout << "Successfully replaced with fused tool\n";
                }
                if (e.payload.contains("error")) {
                    std::cout << "Step failed: " << e.payload["error"].get<std::string>() << "\n";
                } else {
                    std::cout << "Step executed successfully in "
                              << fmt_seconds(e.payload.value("duration", 0.0)) << "s\n";
                }
                break;
            }
            case EventKind::AdversaryMutation:
                std::cerr << "[adversary] mutated '" << e.payload.value("resource", "")
                          << "' at t=" << fmt_seconds(e.t)
                          << (e.payload.value("deferred", false) ? " (deferred)" : "") << "\n";
                break;
            default:
                break;
        }
    }
    if (log.sequences_fused > 0) {
        std::cout << "TOCTOU detected, " << log.sequences_fused << " sequences fused\n";
    }
}

int run_simulate(const GlobalOptions& g, const SimulateArgs& a) {
    Environment env = load_environment(a.env_path);

    std::optional<Task> task;
    if (!a.task_path.empty()) {
        std::ifstream in(a.task_path);
        if (!in) throw ParseError("cannot open task file: " + a.task_path, a.task_path);
        json doc;
        in >> doc;
        task = parse_task(doc);
    }

    Trajectory plan;
    if (!a.plan_path.empty()) {
        plan = load_plan(a.plan_path);
    } else if (task && task->plan) {
        plan = *task->plan;
    } else if (task) {
        plan = task->ground_truth;
    } else {
        std::cerr << "simulate: need --plan or --task\n";
        return kExitUsage;
    }

    std::optional<AdversarySchedule> adversary;
    if (!a.adversary_path.empty()) {
        adversary = AdversarySchedule{load_adversary(a.adversary_path)};
    } else if (task && !task->adversary.empty()) {
        adversary = AdversarySchedule{task->adversary};
    }

    Policy policy = policy_from_string(a.policy);
    std::optional<MonitorAutomaton> monitor;
    Environment run_env = env;
    if (a.monitor == "on") {
        auto pairs = enumerate_pairs(env);
        if (policy == Policy::Fuse) run_env = register_fusions(env, pairs);
        monitor = build_automaton(pairs, policy);
    }

    SimConfig cfg{a.delay_mean, a.delay_std, a.exec_time, g.seed};
    SessionLog log = run_session(run_env, task ? &*task : nullptr, plan,
                                 monitor ? &*monitor : nullptr, adversary ? &*adversary : nullptr,
                                 cfg);

    print_transcript(log);
    std::cerr << "exploited: " << (log.exploited ? "true" : "false") << "\n";
    std::cerr << "final_state_hash: " << log.final_state_hash << "\n";
    write_out(g, log.to_jsonl());
    return kExitOk;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchArgs {
    std::string corpus_path;
    std::string env_dir;
    std::string report_path;  // bench report input
    std::string rewrite = "off";
    std::string monitor = "off";
    std::string fuse = "off";
    double delay_mean = 1.7;
    double delay_std = 0.9;
};

int run_bench_filter(const GlobalOptions& g, const BenchArgs& a) {
    auto tasks = load_tasks(a.corpus_path);
    auto kept = filter_tasks(tasks);
    std::cout << "filtered " << tasks.size() << " -> " << kept.size() << " tasks\n";
    write_out(g, serialize_tasks(kept).dump(2) + "\n");
    return kExitOk;
}

int run_bench_label(const GlobalOptions& g, const BenchArgs& a) {
    auto envs = load_environments(a.env_dir);
    auto tasks = label_tasks(envs, filter_tasks(load_tasks(a.corpus_path)));
    std::size_t vulnerable = 0;
    for (const auto& t : tasks) {
        if (t.label == TaskLabel::Vulnerable) ++vulnerable;
    }
    std::cout << "labeled " << tasks.size() << " tasks: " << vulnerable << " vulnerable, "
              << tasks.size() - vulnerable << " benign\n";
    write_out(g, serialize_tasks(tasks).dump(2) + "\n");
    return kExitOk;
}

int run_bench_detect(const GlobalOptions& g, const BenchArgs& a) {
    auto envs = load_environments(a.env_dir);
    auto tasks = label_tasks(envs, filter_tasks(load_tasks(a.corpus_path)));
    MetricsReport report = evaluate_detector(detect_corpus(envs, tasks));
    std::cout << emit_report(report,
                             g.format == "json" ? ReportFormat::Json : ReportFormat::Text);
    write_out(g, emit_report(report, ReportFormat::Json));
    return report.degenerate ? kExitDegenerate : kExitOk;
}

int run_bench_pipeline(const GlobalOptions& g, const BenchArgs& a) {
    auto envs = load_environments(a.env_dir);
    auto tasks = label_tasks(envs, filter_tasks(load_tasks(a.corpus_path)));
    PipelineComponents components{a.rewrite == "on", a.monitor == "on", a.fuse == "on"};
    PipelineConfig cfg;
    cfg.sim.seed = g.seed;
    cfg.sim.reasoning_delay_mean = a.delay_mean;
    cfg.sim.reasoning_delay_std = a.delay_std;
    cfg.jobs = g.jobs;
    MetricsReport report = run_pipeline(tasks, envs, components, cfg);
    std::cout << emit_report(report,
                             g.format == "json" ? ReportFormat::Json : ReportFormat::Text);
    write_out(g, emit_report(report, ReportFormat::Json));
    if (!report.task_errors.empty()) return kExitValidation;
    return report.degenerate ? kExitDegenerate : kExitOk;
}

int run_bench_report(const GlobalOptions& g, const BenchArgs& a) {
    std::ifstream in(a.report_path);
    if (!in) throw ParseError("cannot open report: " + a.report_path, a.report_path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ParseError("malformed report JSON: " + std::string(e.what()), a.report_path);
    }
    MetricsReport report = MetricsReport::from_json(doc);
    std::cout << emit_report(report,
                             g.format == "json" ? ReportFormat::Json : ReportFormat::Text);
    write_out(g, emit_report(report, ReportFormat::Json));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TOCTOU detection and mitigation for tool-calling agent workflows"};
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("--seed", g.seed, "RNG seed for simulation");
    app.add_option("--labeler-endpoint", g.labeler_endpoint, "external pair-labeler URL");
    app.add_option("--rewriter-endpoint", g.rewriter_endpoint, "external prompt-rewriter URL");
    app.add_option("--labeler-timeout", g.labeler_timeout, "external request timeout (seconds)");
    app.add_option("--jobs", g.jobs, "worker threads for bench pipeline");
    app.add_option("--out", g.out, "write machine-readable output to this path");
    app.add_option("--format", g.format, "stdout format")
        ->check(CLI::IsMember({"text", "json"}));

    auto on_off = CLI::IsMember({"on", "off"});

    ClassifyArgs classify_args;
    auto* classify = app.add_subcommand("classify", "classify ordered tool pairs");
    classify->fallthrough();
    classify->add_option("--env", classify_args.env_path, "environment manifest")->required();
    classify->add_option("--first", classify_args.first, "check tool name");
    classify->add_option("--second", classify_args.second, "use tool name");
    classify->add_option("--pairs", classify_args.pairs, "'all' enumerates every flagged pair");

    MonitorCheckArgs monitor_args;
    auto* monitor_check =
        app.add_subcommand("monitor-check", "statically scan a plan for check-use violations");
    monitor_check->fallthrough();
    monitor_check->add_option("--env", monitor_args.env_path, "environment manifest")->required();
    monitor_check->add_option("--plan", monitor_args.plan_path, "plan (JSON lines)")->required();

    FuseArgs fuse_args;
    auto* fuse = app.add_subcommand("fuse", "register fused tools for all vulnerable pairs");
    fuse->fallthrough();
    fuse->add_option("--env", fuse_args.env_path, "environment manifest")->required();

    RewriteArgs rewrite_args;
    auto* rewrite_cmd = app.add_subcommand("rewrite", "rewrite a prompt to discourage check-then-act");
    rewrite_cmd->fallthrough();
    rewrite_cmd->add_option("--env", rewrite_args.env_path, "environment manifest")->required();
    rewrite_cmd->add_option("--prompt", rewrite_args.prompt, "prompt text")->required();
    rewrite_cmd->add_option("--endpoint", rewrite_args.endpoint, "external rewriter URL");

    SimulateArgs sim_args;
    auto* simulate = app.add_subcommand("simulate", "run a plan through the discrete-event simulator");
    simulate->fallthrough();
    simulate->add_option("--env", sim_args.env_path, "environment manifest")->required();
    simulate->add_option("--task", sim_args.task_path, "task file (single task object)");
    simulate->add_option("--plan", sim_args.plan_path, "plan (JSON lines)");
    simulate->add_option("--monitor", sim_args.monitor, "consult the monitor")->check(on_off);
    simulate->add_option("--policy", sim_args.policy, "monitor policy")
        ->check(CLI::IsMember({"halt", "fuse", "warn"}));
    simulate->add_option("--adversary", sim_args.adversary_path, "adversary schedule file");
    simulate->add_option("--delay-mean", sim_args.delay_mean, "reasoning delay mean (s)");
    simulate->add_option("--delay-std", sim_args.delay_std, "reasoning delay std (s)");
    simulate->add_option("--exec-time", sim_args.exec_time, "tool execution time (s)");

    BenchArgs bench_args;
    auto* bench = app.add_subcommand("bench", "benchmark harness");
    bench->fallthrough();
    bench->require_subcommand(1);
    auto* bf = bench->add_subcommand("filter", "drop injection and single-call tasks");
    bf->fallthrough();
    bf->add_option("--corpus", bench_args.corpus_path, "task corpus (JSON array)")->required();
    auto* bl = bench->add_subcommand("label", "label tasks from their ground truths");
    bl->fallthrough();
    bl->add_option("--corpus", bench_args.corpus_path, "task corpus")->required();
    bl->add_option("--env-dir", bench_args.env_dir, "directory of *.env.json manifests")
        ->required();
    auto* bd = bench->add_subcommand("detect", "evaluate the static detector against the corpus");
    bd->fallthrough();
    bd->add_option("--corpus", bench_args.corpus_path, "task corpus")->required();
    bd->add_option("--env-dir", bench_args.env_dir, "directory of manifests")->required();
    auto* bp = bench->add_subcommand("pipeline", "run the full defense pipeline");
    bp->fallthrough();
    bp->add_option("--corpus", bench_args.corpus_path, "task corpus")->required();
    bp->add_option("--env-dir", bench_args.env_dir, "directory of manifests")->required();
    bp->add_option("--rewrite", bench_args.rewrite, "rewrite prompts")->check(on_off);
    bp->add_option("--monitor", bench_args.monitor, "monitor sessions")->check(on_off);
    bp->add_option("--fuse", bench_args.fuse, "register and substitute fused tools")->check(on_off);
    bp->add_option("--delay-mean", bench_args.delay_mean, "reasoning delay mean (s)");
    bp->add_option("--delay-std", bench_args.delay_std, "reasoning delay std (s)");
    auto* br = bench->add_subcommand("report", "render a stored report");
    br->fallthrough();
    br->add_option("--in", bench_args.report_path, "report JSON path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (classify->parsed()) return run_classify(g, classify_args);
        if (monitor_check->parsed()) return run_monitor_check(g, monitor_args);
        if (fuse->parsed()) return run_fuse(g, fuse_args);
        if (rewrite_cmd->parsed()) return run_rewrite(g, rewrite_args);
        if (simulate->parsed()) return run_simulate(g, sim_args);
        if (bench->parsed()) {
            if (bf->parsed()) return run_bench_filter(g, bench_args);
            if (bl->parsed()) return run_bench_label(g, bench_args);
            if (bd->parsed()) return run_bench_detect(g, bench_args);
            if (bp->parsed()) return run_bench_pipeline(g, bench_args);
            if (br->parsed()) return run_bench_report(g, bench_args);
        }
    } catch (const DegenerateCorpusError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDegenerate;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitUsage;
}
