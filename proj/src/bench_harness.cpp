#include "toctou/bench_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <thread>

#include "toctou/fsa_monitor.hpp"
#include "toctou/pair_classifier.hpp"
#include "toctou/prompt_rewriter.hpp"
#include "toctou/tool_fuser.hpp"

namespace toctou {

EnvMap load_environments(const std::filesystem::path& dir) {
    EnvMap envs;
    if (!std::filesystem::is_directory(dir)) {
        throw ParseError("environment directory not found: " + dir.string(), dir.string());
    }
    std::vector<std::filesystem::path> paths;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().string().ends_with(".env.json")) paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        Environment env = load_environment(p);
        envs[env.name] = std::move(env);
    }
    return envs;
}

std::vector<Task> filter_tasks(const std::vector<Task>& tasks) {
    std::vector<Task> kept;
    for (const auto& t : tasks) {
        if (t.flags.contains("injection")) continue;
        if (t.ground_truth.calls.size() < 2) continue;
        kept.push_back(t);
    }
    return kept;
}

namespace {

const Environment& env_for(const EnvMap& envs, const Task& task) {
    auto it = envs.find(task.environment);
    if (it == envs.end()) throw UnknownEnvironmentError(task.environment);
    return it->second;
}

double max_flag_score(const Environment& env, const std::vector<VulnerablePair>& pairs,
                      const Trajectory& trajectory) {
    MonitorAutomaton automaton = build_automaton(pairs, Policy::Warn);
    double best = 0.0;
    for (const auto& [seq, verdict] : check_plan(automaton, env, trajectory)) {
        for (const auto& p : pairs) {
            if (p.check_tool == verdict.check_tool && p.use_tool == verdict.use_tool) {
                best = std::max(best, p.score);
            }
        }
    }
    return best;
}

std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

std::vector<Task> label_tasks(const EnvMap& envs, std::vector<Task> tasks) {
    for (auto& task : tasks) {
        const Environment& env = env_for(envs, task);
        auto pairs = enumerate_pairs(env);
        MonitorAutomaton automaton = build_automaton(pairs, Policy::Warn);
        bool flagged = !check_plan(automaton, env, task.ground_truth).empty();
        task.label = flagged ? TaskLabel::Vulnerable : TaskLabel::Benign;
    }
    return tasks;
}

std::vector<DetectionOutcome> detect_corpus(const EnvMap& envs, const std::vector<Task>& tasks) {
    std::vector<DetectionOutcome> outcomes;
    for (const auto& task : tasks) {
        const Environment& env = env_for(envs, task);
        DetectionOutcome out;
        out.task_id = task.id;
        out.truth = task.manual_label.value_or(task.label);
        out.predicted_score = max_flag_score(env, enumerate_pairs(env), task.ground_truth);
        outcomes.push_back(std::move(out));
    }
    return outcomes;
}

MetricsReport evaluate_detector(const std::vector<DetectionOutcome>& outcomes) {
    MetricsReport report;
    report.corpus_size = outcomes.size();

    std::vector<double> vuln_scores, benign_scores;
    for (const auto& o : outcomes) {
        if (o.truth == TaskLabel::Vulnerable) {
            vuln_scores.push_back(o.predicted_score);
        } else if (o.truth == TaskLabel::Benign) {
            benign_scores.push_back(o.predicted_score);
        }
    }
    double P = static_cast<double>(vuln_scores.size());
    double N = static_cast<double>(benign_scores.size());
    report.degenerate = vuln_scores.empty() || benign_scores.empty();

    auto at_least = [](const std::vector<double>& scores, double threshold) {
        return static_cast<double>(
            std::count_if(scores.begin(), scores.end(), [&](double s) { return s >= threshold; }));
    };
    if (!vuln_scores.empty()) report.tpr = at_least(vuln_scores, 0.5) / P;
    if (!benign_scores.empty()) report.fpr = at_least(benign_scores, 0.5) / N;

    if (!report.degenerate) {
        // Threshold sweep over distinct scores, descending; ties share one
        // threshold. Points run from (0,0) to (1,1); area by trapezoids.
        std::set<double, std::greater<double>> thresholds(vuln_scores.begin(), vuln_scores.end());
        thresholds.insert(benign_scores.begin(), benign_scores.end());
        std::vector<std::pair<double, double>> points{{0.0, 0.0}};
        for (double th : thresholds) {
            points.push_back({at_least(benign_scores, th) / N, at_least(vuln_scores, th) / P});
        }
        double auc = 0.0;
        for (std::size_t i = 1; i < points.size(); ++i) {
            auc += (points[i].first - points[i - 1].first) *
                   (points[i].second + points[i - 1].second) / 2.0;
        }
        report.auc = auc;
    }
    return report;
}

Trajectory planner_stub(const Task& task, const std::string& effective_prompt) {
    if (effective_prompt != task.prompt && task.plan_rewritten) return *task.plan_rewritten;
    if (task.plan) return *task.plan;
    Trajectory t = task.ground_truth;
    t.origin = TrajectoryOrigin::Planner;
    return t;
}

namespace {

struct TaskResult {
    bool ok = false;
    std::string error;
    bool plan_flagged = false;
    bool executed_vulnerable = false;
    DetectionOutcome outcome;
    std::vector<double> windows;
};

TaskResult run_one(const Task& task, const EnvMap& envs, PipelineComponents components,
                   const PipelineConfig& cfg) {
    TaskResult result;
    try {
        const Environment& env = env_for(envs, task);
        auto pairs = enumerate_pairs(env);

        std::string prompt = task.prompt;
        if (components.rewrite) prompt = rewrite(prompt, env).text;
        Trajectory plan = planner_stub(task, prompt);

        result.plan_flagged = max_flag_score(env, pairs, plan) > 0.0;
        result.outcome = {task.id, task.manual_label.value_or(task.label),
                          max_flag_score(env, pairs, plan)};

        Environment run_env = components.fuse ? register_fusions(env, pairs) : env;
        std::optional<MonitorAutomaton> monitor;
        if (components.monitor) {
            monitor = build_automaton(pairs, components.fuse ? Policy::Fuse : Policy::Halt);
        }
        std::optional<AdversarySchedule> adversary;
        if (!task.adversary.empty()) adversary = AdversarySchedule{task.adversary};

        SimConfig sim = cfg.sim;
        sim.seed = cfg.sim.seed ^ fnv1a64(task.id);  // stable per task, order-independent
        SessionLog log = run_session(run_env, &task, plan, monitor ? &*monitor : nullptr,
                                     adversary ? &*adversary : nullptr, sim);

        bool unmitigated = false;
        if (components.monitor) {
            for (const auto& e : log.events) {
                if (e.kind == EventKind::Verdict && e.payload.value("verdict", "") == "WARN") {
                    unmitigated = true;
                }
            }
        } else {
            unmitigated = result.plan_flagged;
        }
        result.executed_vulnerable = log.exploited || unmitigated;
        for (const auto& p : pairs) {
            if (auto w = attack_window(log, p)) result.windows.push_back(*w);
        }
        result.ok = true;
    } catch (const std::exception& e) {
        result.error = task.id + ": " + e.what();
    }
    return result;
}

}  // namespace

MetricsReport run_pipeline(const std::vector<Task>& corpus, const EnvMap& envs,
                           PipelineComponents components, const PipelineConfig& cfg) {
    std::vector<TaskResult> results(corpus.size());
    int jobs = std::max(1, cfg.jobs);
    if (jobs == 1) {
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            results[i] = run_one(corpus[i], envs, components, cfg);
        }
    } else {
        std::vector<std::thread> workers;
        std::atomic<std::size_t> next{0};
        for (int w = 0; w < jobs; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < corpus.size(); i = next.fetch_add(1)) {
                    results[i] = run_one(corpus[i], envs, components, cfg);
                }
            });
        }
        for (auto& t : workers) t.join();
    }

    std::vector<DetectionOutcome> outcomes;
    std::vector<double> windows;
    std::size_t vulnerable_sessions = 0;
    std::size_t completed = 0;
    MetricsReport report;
    for (const auto& r : results) {
        if (!r.ok) {
            report.task_errors.push_back(r.error);
            continue;
        }
        ++completed;
        if (r.plan_flagged) ++report.vulnerable_plan_count;
        if (r.executed_vulnerable) ++vulnerable_sessions;
        outcomes.push_back(r.outcome);
        windows.insert(windows.end(), r.windows.begin(), r.windows.end());
    }
    std::sort(report.task_errors.begin(), report.task_errors.end());

    MetricsReport detection = evaluate_detector(outcomes);
    report.corpus_size = corpus.size();
    report.tpr = detection.tpr;
    report.fpr = detection.fpr;
    report.auc = detection.auc;
    report.degenerate = detection.degenerate;
    if (completed > 0) {
        report.executed_vulnerable_fraction =
            static_cast<double>(vulnerable_sessions) / static_cast<double>(completed);
    }
    if (!windows.empty()) {
        std::sort(windows.begin(), windows.end());
        double mean = 0.0;
        for (double w : windows) mean += w;
        mean /= static_cast<double>(windows.size());
        double var = 0.0;
        for (double w : windows) var += (w - mean) * (w - mean);
        var /= static_cast<double>(windows.size());
        report.window_stats = WindowStats{mean, std::sqrt(var), windows.size()};
    }
    return report;
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

json MetricsReport::to_json() const {
    json doc;
    doc["corpus_size"] = corpus_size;
    doc["tpr"] = tpr ? json(*tpr) : json();
    doc["fpr"] = fpr ? json(*fpr) : json();
    doc["auc"] = auc ? json(*auc) : json();
    doc["degenerate"] = degenerate;
    doc["vulnerable_plan_count"] = vulnerable_plan_count;
    doc["executed_vulnerable_fraction"] =
        executed_vulnerable_fraction ? json(*executed_vulnerable_fraction) : json();
    if (window_stats) {
        doc["window_stats"] = {{"mean", window_stats->mean},
                               {"stddev", window_stats->stddev},
                               {"count", window_stats->count}};
    } else {
        doc["window_stats"] = nullptr;
    }
    doc["task_errors"] = task_errors;
    return doc;
}

MetricsReport MetricsReport::from_json(const json& doc) {
    MetricsReport report;
    report.corpus_size = doc.value("corpus_size", std::size_t{0});
    auto opt_double = [&](const char* key) -> std::optional<double> {
        if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
        return doc[key].get<double>();
    };
    report.tpr = opt_double("tpr");
    report.fpr = opt_double("fpr");
    report.auc = opt_double("auc");
    report.degenerate = doc.value("degenerate", false);
    report.vulnerable_plan_count = doc.value("vulnerable_plan_count", std::size_t{0});
    report.executed_vulnerable_fraction = opt_double("executed_vulnerable_fraction");
    if (doc.contains("window_stats") && !doc["window_stats"].is_null()) {
        const auto& w = doc["window_stats"];
        report.window_stats =
            WindowStats{w.value("mean", 0.0), w.value("stddev", 0.0), w.value("count", std::size_t{0})};
    }
    if (doc.contains("task_errors")) {
        for (const auto& e : doc["task_errors"]) report.task_errors.push_back(e.get<std::string>());
    }
    return report;
}

std::string emit_report(const MetricsReport& report, ReportFormat format) {
    if (format == ReportFormat::Json) return report.to_json().dump(2) + "\n";

    auto fmt2 = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        return std::string(buf);
    };
    std::ostringstream out;
    out << "tasks: " << report.corpus_size << "\n";
    out << "tpr@0.5: " << (report.tpr ? fmt2(*report.tpr) : "n/a") << "\n";
    out << "fpr@0.5: " << (report.fpr ? fmt2(*report.fpr) : "n/a") << "\n";
    out << "auc: " << (report.auc ? fmt2(*report.auc) : "n/a") << "\n";
    if (report.degenerate) out << "warning: degenerate corpus (single truth class)\n";
    out << "vulnerable_plan_count: " << report.vulnerable_plan_count << "\n";
    out << "executed_vulnerable_fraction: "
        << (report.executed_vulnerable_fraction ? fmt2(*report.executed_vulnerable_fraction)
                                                : "n/a")
        << "\n";
    if (report.window_stats) {
        out << "attack_window: " << fmt2(report.window_stats->mean) << "±"
            << fmt2(report.window_stats->stddev) << " s (n=" << report.window_stats->count << ")\n";
    } else {
        out << "attack_window: n/a\n";
    }
    for (const auto& e : report.task_errors) out << "task_error: " << e << "\n";
    return out.str();
}

}  // namespace toctou
