#include "coach/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coach {

double cohens_kappa(std::span<const std::string> a, std::span<const std::string> b) {
    if (a.size() != b.size()) throw AnalyticsError("kappa: label lists differ in length");
    if (a.empty()) throw AnalyticsError("kappa: label lists are empty");

    const double n = static_cast<double>(a.size());
    std::map<std::string, double> count_a;
    std::map<std::string, double> count_b;
    double agree = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        count_a[a[i]] += 1.0;
        count_b[b[i]] += 1.0;
        if (a[i] == b[i]) agree += 1.0;
    }
    const double p_o = agree / n;
    double p_e = 0.0;
    for (const auto& [label, ca] : count_a) {
        auto it = count_b.find(label);
        if (it != count_b.end()) p_e += (ca / n) * (it->second / n);
    }
    if (p_e >= 1.0) {
        if (p_o >= 1.0) return 1.0;
        throw AnalyticsError("kappa: degenerate marginals");
    }
    return (p_o - p_e) / (1.0 - p_e);
}

double mcnemar_exact(long long b, long long c) {
    if (b < 0 || c < 0) throw AnalyticsError("mcnemar: counts must be non-negative");
    const long long n = b + c;
    if (n == 0) return 1.0;
    const long long lo = std::min(b, c);
    const double log_total = std::lgamma(static_cast<double>(n) + 1.0);
    double tail = 0.0;
    for (long long i = 0; i <= lo; ++i) {
        const double log_term = log_total - std::lgamma(static_cast<double>(i) + 1.0) -
                                std::lgamma(static_cast<double>(n - i) + 1.0) - static_cast<double>(n) * std::log(2.0);
        tail += std::exp(log_term);
    }
    return std::min(1.0, 2.0 * tail);
}

std::vector<double> bh_adjust(std::span<const double> p_values) {
    const std::size_t m = p_values.size();
    for (double p : p_values) {
        if (!(p >= 0.0 && p <= 1.0)) throw AnalyticsError("bh: p-values must lie in [0, 1]");
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return p_values[i] < p_values[j]; });

    std::vector<double> adjusted(m);
    double running = 1.0;
    for (std::size_t r = m; r-- > 0;) {
        const double candidate = p_values[order[r]] * static_cast<double>(m) / static_cast<double>(r + 1);
        running = std::min(running, candidate);
        adjusted[order[r]] = std::min(1.0, running);
    }
    return adjusted;
}

std::vector<double> signed_rank_midranks(std::span<const double> differences) {
    std::vector<double> magnitudes;
    for (double d : differences) {
        if (d != 0.0) magnitudes.push_back(std::fabs(d));
    }
    std::vector<std::size_t> order(magnitudes.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return magnitudes[i] < magnitudes[j]; });

    std::vector<double> ranks(magnitudes.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && magnitudes[order[j + 1]] == magnitudes[order[i]]) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = midrank;
        i = j + 1;
    }
    return ranks;
}

namespace {

// Distribution of the doubled W+ over all 2^n sign assignments. Doubling
// keeps half-integer midranks integral.
double exact_p(const std::vector<double>& ranks, double w) {
    std::vector<int> doubled;
    int total = 0;
    for (double r : ranks) {
        doubled.push_back(static_cast<int>(std::lround(2.0 * r)));
        total += doubled.back();
    }
    std::vector<double> ways(static_cast<std::size_t>(total) + 1, 0.0);
    ways[0] = 1.0;
    int reach = 0;
    for (int r : doubled) {
        for (int s = reach; s >= 0; --s) {
            if (ways[static_cast<std::size_t>(s)] != 0.0) ways[static_cast<std::size_t>(s + r)] += ways[static_cast<std::size_t>(s)];
        }
        reach += r;
    }
    const long long threshold = std::llround(2.0 * w);
    double at_or_below = 0.0;
    for (long long s = 0; s <= std::min<long long>(threshold, total); ++s) at_or_below += ways[static_cast<std::size_t>(s)];
    return std::min(1.0, 2.0 * at_or_below / std::ldexp(1.0, static_cast<int>(ranks.size())));
}

double normal_p(const std::vector<double>& ranks, double w_plus) {
    const double n = static_cast<double>(ranks.size());
    const double mean = n * (n + 1.0) / 4.0;
    double variance = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
    std::map<double, int> ties;
    for (double r : ranks) ++ties[r];
    for (const auto& [rank, t] : ties) variance -= (static_cast<double>(t) * t * t - t) / 48.0;
    if (variance <= 0.0) return 1.0;
    const double z = (std::fabs(w_plus - mean) - 0.5) / std::sqrt(variance);
    if (z <= 0.0) return 1.0;
    return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y, WilcoxonMethod method) {
    if (x.size() != y.size()) throw AnalyticsError("wilcoxon: samples differ in length");
    if (x.empty()) throw AnalyticsError("wilcoxon: samples are empty");

    std::vector<double> differences;
    for (std::size_t i = 0; i < x.size(); ++i) differences.push_back(x[i] - y[i]);
    const auto ranks = signed_rank_midranks(differences);

    WilcoxonResult result;
    result.n_effective = static_cast<int>(ranks.size());
    std::size_t k = 0;
    for (double d : differences) {
        if (d == 0.0) continue;
        (d > 0.0 ? result.w_plus : result.w_minus) += ranks[k++];
    }
    if (ranks.empty()) return result;

    result.exact = method == WilcoxonMethod::exact ||
                   (method == WilcoxonMethod::automatic && result.n_effective <= kWilcoxonExactMaxN);
    result.p_value = result.exact ? exact_p(ranks, std::min(result.w_plus, result.w_minus))
                                  : normal_p(ranks, result.w_plus);
    return result;
}

std::vector<ConvergencePoint> convergence_curve(std::span<const RefinementTrace> traces,
                                                const std::set<RubricCriterion>& criteria) {
    if (traces.empty()) throw AnalyticsError("convergence: no traces");
    std::size_t horizon = 0;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const auto& trace = traces[i];
        const std::string name = trace.context_ref.empty() ? "#" + std::to_string(i) : trace.context_ref;
        if (trace.iterations.empty()) throw AnalyticsError("convergence: trace " + name + " has no iterations");
        for (const auto& iteration : trace.iterations) {
            for (RubricCriterion c : criteria) {
                if (iteration.verdict.judgments.count(c) == 0) {
                    throw AnalyticsError("convergence: trace " + name + " was not judged on " + std::string(to_string(c)));
                }
            }
        }
        horizon = std::max(horizon, trace.iterations.size());
    }

    std::vector<ConvergencePoint> points;
    for (RubricCriterion c : criteria) {
        for (std::size_t t = 0; t < horizon; ++t) {
            ConvergencePoint point;
            point.criterion = c;
            point.iteration = static_cast<int>(t);
            point.n = static_cast<int>(traces.size());
            for (const auto& trace : traces) {
                const auto& it = trace.iterations[std::min(t, trace.iterations.size() - 1)];
                if (it.verdict.judgments.at(c) == Verdict::pass) ++point.passes;
            }
            point.pass_rate = static_cast<double>(point.passes) / point.n;
            points.push_back(point);
        }
    }
    return points;
}

StepMetrics step_metrics(std::span<const Trajectory> trajectories, bool count_terminal) {
    if (trajectories.empty()) throw AnalyticsError("steps: no trajectories");
    const std::size_t nominal = count_terminal ? 2 : 1;
    StepMetrics m;
    m.n = static_cast<int>(trajectories.size());
    double steps = 0.0;
    double calls = 0.0;
    int extra = 0;
    for (const auto& t : trajectories) {
        std::size_t s = t.steps.size();
        if (!count_terminal && s > 0 && t.steps.back().is_final()) --s;
        steps += static_cast<double>(s);
        calls += static_cast<double>(t.tool_call_count());
        if (s > nominal) ++extra;
    }
    m.mean_steps = steps / m.n;
    m.mean_tool_calls = calls / m.n;
    m.extra_step_rate = static_cast<double>(extra) / m.n;
    return m;
}

std::vector<SteeringRow> steering_table(std::span<const SteeringRecord> records) {
    if (records.empty()) throw AnalyticsError("steering: no records");

    struct Tally {
        int highlighted = 0;
        int highlighted_discussed = 0;
        int other = 0;
        int other_discussed = 0;
    };
    std::map<std::string, Tally> per_component;
    Tally all;
    for (const auto& r : records) {
        for (Tally* t : {&per_component[r.component], &all}) {
            if (r.highlighted) {
                ++t->highlighted;
                if (r.discussed) ++t->highlighted_discussed;
            } else {
                ++t->other;
                if (r.discussed) ++t->other_discussed;
            }
        }
    }
    auto row = [](std::string name, const Tally& t) {
        SteeringRow out;
        out.component = std::move(name);
        out.n_highlighted = t.highlighted;
        out.n_not_highlighted = t.other;
        if (t.highlighted > 0) out.rate_highlighted = static_cast<double>(t.highlighted_discussed) / t.highlighted;
        if (t.other > 0) out.rate_not_highlighted = static_cast<double>(t.other_discussed) / t.other;
        return out;
    };

    std::vector<SteeringRow> rows;
    const std::vector<std::string> leading{"Basis", "IH", "Step"};
    for (const auto& name : leading) {
        if (auto it = per_component.find(name); it != per_component.end()) rows.push_back(row(name, it->second));
    }
    for (const auto& [name, tally] : per_component) {
        if (std::find(leading.begin(), leading.end(), name) == leading.end()) rows.push_back(row(name, tally));
    }
    rows.push_back(row("All", all));
    return rows;
}

std::map<QuestionCategory, double> category_prevalence(std::span<const CategoryAnnotation> annotations) {
    if (annotations.empty()) throw AnalyticsError("prevalence: no annotations");
    std::set<std::string> students;
    std::map<QuestionCategory, std::set<std::string>> askers;
    for (const auto& a : annotations) {
        students.insert(a.student_id);
        askers[a.category].insert(a.student_id);
    }
    std::map<QuestionCategory, double> out;
    for (QuestionCategory c : kAllQuestionCategories) {
        out[c] = static_cast<double>(askers[c].size()) / static_cast<double>(students.size());
    }
    return out;
}

namespace {

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

void to_json(Json& out, const ConvergencePoint& v) {
    out = {{"criterion", std::string(to_string(v.criterion))},
           {"iteration", v.iteration},
           {"pass_rate", v.pass_rate},
           {"passes", v.passes},
           {"n", v.n}};
}

void to_json(Json& out, const StepMetrics& v) {
    out = {{"mean_steps", v.mean_steps},
           {"mean_tool_calls", v.mean_tool_calls},
           {"extra_step_rate", v.extra_step_rate},
           {"n", v.n}};
}

void to_json(Json& out, const SteeringRow& v) {
    out = {{"component", v.component},
           {"rate_highlighted", optional_number(v.rate_highlighted)},
           {"rate_not_highlighted", optional_number(v.rate_not_highlighted)},
           {"n_highlighted", v.n_highlighted},
           {"n_not_highlighted", v.n_not_highlighted}};
}

void to_json(Json& out, const WilcoxonResult& v) {
    out = {{"p", v.p_value},
           {"w_plus", v.w_plus},
           {"w_minus", v.w_minus},
           {"n_effective", v.n_effective},
           {"method", v.exact ? "exact" : "normal"}};
}

}  // namespace coach
