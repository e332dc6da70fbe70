#pragma once

// Evaluation statistics: rater agreement, paired significance tests with
// multiplicity correction, refinement convergence, agent step efficiency,
// feedback steering and question-category prevalence. All functions are pure.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coach/domain.hpp"
#include "coach/errors.hpp"

namespace coach {

// Throws AnalyticsError on a length mismatch, empty input, or degenerate
// marginals (chance agreement 1 without perfect observed agreement).
double cohens_kappa(std::span<const std::string> a, std::span<const std::string> b);

// Two-sided exact binomial test on the discordant counts.
double mcnemar_exact(long long b, long long c);

// Benjamini-Hochberg step-up adjustment, returned in input order.
std::vector<double> bh_adjust(std::span<const double> p_values);

enum class WilcoxonMethod { automatic, exact, normal };

inline constexpr int kWilcoxonExactMaxN = 25;

struct WilcoxonResult {
    double p_value = 1.0;
    double w_plus = 0.0;
    double w_minus = 0.0;
    int n_effective = 0;
    bool exact = true;
};

// Zero differences are dropped and tied |d| share midranks. The automatic
// method enumerates sign assignments for n_effective <= 25 and otherwise
// uses the tie-corrected normal approximation with continuity correction.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x,
                                    std::span<const double> y,
                                    WilcoxonMethod method = WilcoxonMethod::automatic);

// Midranks of |d| over the non-zero differences, in input order.
std::vector<double> signed_rank_midranks(std::span<const double> differences);

struct ConvergencePoint {
    RubricCriterion criterion = RubricCriterion::clarity;
    int iteration = 0;
    double pass_rate = 0.0;
    int passes = 0;
    int n = 0;

    bool operator==(const ConvergencePoint&) const = default;
};

// Pass rate per (criterion, iteration) up to the longest trace. A trace that
// has terminated contributes its final verdict to every later iteration.
// Points are ordered by criterion, then iteration.
std::vector<ConvergencePoint> convergence_curve(std::span<const RefinementTrace> traces,
                                                const std::set<RubricCriterion>& criteria);

struct StepMetrics {
    double mean_steps = 0.0;
    double mean_tool_calls = 0.0;
    double extra_step_rate = 0.0;
    int n = 0;

    bool operator==(const StepMetrics&) const = default;
};

// With count_terminal the answer turn is a step and the nominal trajectory
// has two steps; without it the nominal trajectory has one.
StepMetrics step_metrics(std::span<const Trajectory> trajectories, bool count_terminal = true);

struct SteeringRow {
    std::string component;
    std::optional<double> rate_highlighted;      // empty stratum -> undefined
    std::optional<double> rate_not_highlighted;
    int n_highlighted = 0;
    int n_not_highlighted = 0;

    bool operator==(const SteeringRow&) const = default;
};

// Rows for Basis, IH and Step first, other components alphabetically, then
// "All".
std::vector<SteeringRow> steering_table(std::span<const SteeringRecord> records);

struct CategoryAnnotation {
    std::string student_id;
    QuestionCategory category = QuestionCategory::task;
};

// Fraction of distinct students with at least one question per category;
// every category is present in the result.
std::map<QuestionCategory, double> category_prevalence(std::span<const CategoryAnnotation> annotations);

void to_json(Json& out, const ConvergencePoint& v);
void to_json(Json& out, const StepMetrics& v);
void to_json(Json& out, const SteeringRow& v);
void to_json(Json& out, const WilcoxonResult& v);

}  // namespace coach
