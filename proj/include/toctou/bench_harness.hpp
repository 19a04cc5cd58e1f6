#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toctou/core_model.hpp"
#include "toctou/simulator.hpp"

namespace toctou {

using EnvMap = std::map<std::string, Environment>;

/// Load every *.env.json manifest in a directory, keyed by environment name.
EnvMap load_environments(const std::filesystem::path& dir);

struct DetectionOutcome {
    std::string task_id;
    TaskLabel truth = TaskLabel::Unlabeled;  // VULNERABLE or BENIGN
    double predicted_score = 0.0;            // in [0, 1]
};

struct WindowStats {
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t count = 0;
};

struct MetricsReport {
    std::size_t corpus_size = 0;
    std::optional<double> tpr;  // at threshold 0.5 (score >= 0.5 is positive)
    std::optional<double> fpr;
    std::optional<double> auc;  // absent on degenerate (single-class) corpora
    bool degenerate = false;
    std::size_t vulnerable_plan_count = 0;
    std::optional<double> executed_vulnerable_fraction;
    std::optional<WindowStats> window_stats;
    std::vector<std::string> task_errors;

    json to_json() const;
    static MetricsReport from_json(const json& doc);
};

/// Drop injection-flagged tasks and those whose ground truth has fewer than
/// two calls. Order-preserving and idempotent.
std::vector<Task> filter_tasks(const std::vector<Task>& tasks);

/// Label each task VULNERABLE iff the static plan scan flags its ground
/// truth, BENIGN otherwise. Pure function of ground truths and environment
/// annotations.
std::vector<Task> label_tasks(const EnvMap& envs, std::vector<Task> tasks);

/// Detector outcomes over labeled tasks: the predicted score is the highest
/// pair score among flags on the ground truth; evaluation truth prefers the
/// task's manual_label when present.
std::vector<DetectionOutcome> detect_corpus(const EnvMap& envs, const std::vector<Task>& tasks);

/// TPR/FPR at threshold 0.5 and AUC by trapezoidal sweep over the distinct
/// scores (equal scores collapse into one threshold). Single-class corpora
/// are flagged degenerate: AUC is absent, TPR/FPR are reported where defined.
MetricsReport evaluate_detector(const std::vector<DetectionOutcome>& outcomes);

struct PipelineComponents {
    bool rewrite = false;
    bool monitor = false;
    bool fuse = false;
};

struct PipelineConfig {
    SimConfig sim;
    int jobs = 1;
};

/// Deterministic stand-in for the planning model: tasks carry their stored
/// plan; a changed (rewritten) prompt selects plan_rewritten when present;
/// tasks without a stored plan fall back to their ground truth.
Trajectory planner_stub(const Task& task, const std::string& effective_prompt);

/// Run the full per-task pipeline (optional prompt rewrite, planner stub,
/// monitored/fused session) and aggregate: plans flagged by the static scan,
/// the fraction of sessions that executed a vulnerability (exploited or
/// carrying un-mitigated flags), detection metrics over the session plans,
/// and attack-window statistics. One task's failure never aborts the run.
MetricsReport run_pipeline(const std::vector<Task>& corpus, const EnvMap& envs,
                           PipelineComponents components, const PipelineConfig& cfg);

enum class ReportFormat { Json, Text };

/// Deterministic rendering; the JSON form round-trips through
/// MetricsReport::from_json, window stats render as "mean±std" with two
/// decimals, absent AUC renders "n/a".
std::string emit_report(const MetricsReport& report, ReportFormat format);

}  // namespace toctou
