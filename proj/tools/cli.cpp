#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "coach/agent.hpp"
#include "coach/analytics.hpp"
#include "coach/feedback_loop.hpp"
#include "coach/http_server.hpp"
#include "coach/retrieval.hpp"
#include "coach/serialization.hpp"
#include "coach/service.hpp"

namespace coach::cli {

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

Json parse_json(const std::string& text, const std::string& where) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ParseError(where + ": invalid JSON: " + e.what());
    }
}

// One JSON value per non-blank line.
std::vector<Json> read_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path);
    std::vector<Json> out;
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
        if (trim(line).empty()) continue;
        out.push_back(parse_json(line, path + ":" + std::to_string(n)));
    }
    return out;
}

template <typename T>
std::vector<T> read_documents(const std::string& path) {
    std::vector<T> out;
    int n = 0;
    for (const auto& doc : read_jsonl(path)) {
        ++n;
        try {
            out.push_back(doc.get<T>());
        } catch (const ParseError& e) {
            throw ParseError(path + " record " + std::to_string(n) + ": " + e.what());
        } catch (const Json::exception& e) {
            throw ParseError(path + " record " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::stringstream in(text);
    while (std::getline(in, item, ',')) out.emplace_back(trim(item));
    if (!text.empty() && text.back() == ',') out.emplace_back();
    return out;
}

std::vector<double> parse_numbers(const std::string& text, const std::string& flag) {
    std::vector<double> out;
    for (const auto& item : split_list(text)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ParseError(flag + ": not a number: \"" + item + "\"");
        }
    }
    return out;
}

std::string label_of(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::string csv_number(const std::optional<double>& v) { return v ? Json(*v).dump() : ""; }

void write_csv(const std::string& path, const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path);
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << "\n";
    }
}

int classify(const std::exception& e) {
    if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
        dynamic_cast<const IngestError*>(&e) || dynamic_cast<const NotFoundError*>(&e) ||
        dynamic_cast<const IndexError*>(&e) || dynamic_cast<const AnalyticsError*>(&e)) {
        return kInputError;
    }
    return kRuntimeError;
}

std::atomic<HttpServer*> g_server{nullptr};

extern "C" void on_signal(int) {
    if (auto* s = g_server.load()) s->stop();
}

// --- ingest ----------------------------------------------------------------

struct IngestArgs {
    std::string corpus;
    std::string out;
    std::string embedder;
    int dimension = 256;
    std::size_t max_chars = ChunkPolicy{}.max_chars;
    std::size_t overlap = ChunkPolicy{}.overlap_chars;
};

int cmd_ingest(const IngestArgs& a, std::ostream& out) {
    EmbedderDescriptor descriptor = EmbedderDescriptor::fake(a.dimension);
    if (!a.embedder.empty()) descriptor = parse_json(read_file(a.embedder), a.embedder).get<EmbedderDescriptor>();
    if (!fs::is_directory(a.corpus)) throw IngestError("corpus directory not found: " + a.corpus);
    const Embedder embedder(descriptor);
    const auto index = ingest_corpus(a.corpus, embedder, ChunkPolicy{a.max_chars, a.overlap});
    save_index(index, a.out);
    out << Json{{"documents", index.documents.size()}, {"chunks", index.chunks.size()}, {"embedder_id", index.embedder_id}}.dump()
        << "\n";
    return kOk;
}

// --- serve -----------------------------------------------------------------

int cmd_serve(const std::string& config_path, const std::string& listen, std::ostream& out, std::ostream& err) {
    auto config = load_service_config(config_path);
    if (!listen.empty()) config.listen_address = listen;
    auto service = FeedbackService::from_config(config);
    const auto [host, port] = split_listen_address(config.listen_address);
    HttpServer server(*service);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    out << "listening on " << host << ":" << port << std::endl;
    const bool ok = server.listen(host, port);
    g_server = nullptr;
    if (!ok && !server.is_running()) {
        err << "error: cannot listen on " << config.listen_address << "\n";
        return kRuntimeError;
    }
    return kOk;
}

// --- batch-refine ----------------------------------------------------------

struct BatchArgs {
    std::string dataset;
    std::string config;
    std::string out;
    int jobs = 1;
};

int cmd_batch_refine(const BatchArgs& a, std::ostream& out, std::ostream& err) {
    const Json config = parse_json(read_file(a.config), a.config);
    if (!config.is_object()) throw ParseError("batch config: expected an object");
    for (auto it = config.begin(); it != config.end(); ++it) {
        if (it.key() != "generation_backend" && it.key() != "judge_backend" && it.key() != "refinement") {
            throw ParseError("batch config." + it.key() + ": unknown field");
        }
    }
    if (!config.contains("generation_backend")) throw ParseError("batch config.generation_backend: missing field");
    if (!config.contains("judge_backend")) throw ParseError("batch config.judge_backend: missing field");
    const auto base = fs::absolute(a.config).parent_path();
    auto backend = [&base](Json doc) {
        if (doc.contains("script_path") && doc["script_path"].is_string() && fs::path(doc["script_path"].get<std::string>()).is_relative()) {
            doc["script_path"] = (base / doc["script_path"].get<std::string>()).string();
        }
        return make_chat_model(doc.get<BackendDescriptor>());
    };
    auto generator = backend(config["generation_backend"]);
    auto judge = backend(config["judge_backend"]);
    const RefinementConfig refinement = config.contains("refinement") ? config["refinement"].get<RefinementConfig>() : RefinementConfig{};

    const auto contexts = read_documents<FeedbackContext>(a.dataset);
    if (contexts.empty()) throw ValidationError("dataset " + a.dataset + " is empty");
    if (a.jobs < 1) throw ValidationError("--jobs: must be >= 1");

    std::vector<std::optional<RefinementTrace>> traces(contexts.size());
    std::vector<std::string> errors(contexts.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < contexts.size(); i = next++) {
            try {
                traces[i] = refine(contexts[i], refinement, *generator, *judge);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int j = 1; j < std::min<int>(a.jobs, static_cast<int>(contexts.size())); ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::ofstream sink(a.out, std::ios::binary | std::ios::trunc);
    if (!sink) throw ValidationError("cannot write " + a.out);
    std::vector<RefinementTrace> done;
    int failed = 0;
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        if (traces[i]) {
            sink << to_document(*traces[i]) << "\n";
            done.push_back(std::move(*traces[i]));
        } else {
            ++failed;
            err << "item " << i + 1 << " (" << contexts[i].question_id << "): " << errors[i] << "\n";
        }
    }
    sink.flush();

    Json summary{{"items", contexts.size()}, {"succeeded", done.size()}, {"failed", failed}};
    summary["convergence"] = done.empty() ? Json::array() : Json(convergence_curve(done, refinement.target_criteria));
    out << summary.dump() << "\n";
    return failed > 0 ? kRuntimeError : kOk;
}

// --- replay ----------------------------------------------------------------

int cmd_replay(const std::string& path, std::ostream& out) {
    const auto t = from_document<Trajectory>(read_file(path));
    out << "query: " << t.query << "\n";
    for (const auto& step : t.steps) {
        if (step.is_final()) {
            out << "step " << step.index << ": answer\n";
        } else {
            const auto& call = std::get<ToolCall>(step.action);
            out << "step " << step.index << ": tool " << call.tool_name << " " << call.arguments.dump() << "\n";
        }
        if (!step.reasoning_summary.empty()) out << "  reasoning: " << step.reasoning_summary << "\n";
        if (step.observation) {
            out << "  observation (" << to_string(step.observation->kind) << "): " << step.observation->payload << "\n";
        }
    }
    out << "final answer: " << t.final_answer << "\n";
    out << "termination: " << to_string(t.termination) << ", errors: " << t.error_count << "\n";
    return kOk;
}

// --- export-traces ---------------------------------------------------------

int cmd_export(const std::string& input, const std::string& sink, const std::string& config_path, std::ostream& out) {
    std::vector<TraceSource> sources;
    int n = 0;
    for (const auto& doc : read_jsonl(input)) {
        ++n;
        try {
            if (!doc.is_object()) throw ParseError("expected an object");
            TraceSource s;
            s.trajectory = doc.at("trajectory").get<Trajectory>();
            s.report = doc.at("report").get<FeedbackReport>();
            if (doc.contains("history")) {
                for (const auto& h : doc["history"]) s.history.push_back({h.at("question").get<std::string>(), h.at("answer").get<std::string>()});
            }
            sources.push_back(std::move(s));
        } catch (const Json::exception& e) {
            throw ParseError(input + " record " + std::to_string(n) + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(input + " record " + std::to_string(n) + ": " + e.what());
        }
    }

    auto descriptors = default_tool_descriptors();
    PromptLibrary prompts = PromptLibrary::defaults();
    if (!config_path.empty()) {
        const auto config = load_service_config(config_path);
        std::erase_if(descriptors, [&config](const ToolDescriptor& d) {
            if (d.name == tool_name::course_content) return !config.corpus_index_path;
            if (d.name == tool_name::prerequisites) return !config.prerequisite_map_path;
            return !config.behaviour_descriptor_path;
        });
        if (config.prompts_dir) prompts = PromptLibrary::with_overrides(*config.prompts_dir);
    }
    const auto count = export_training_traces(sources, sink, advertise(descriptors), prompts);
    out << Json{{"records", count}}.dump() << "\n";
    return kOk;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
    std::string csv;
    std::string a, b, a_file, b_file;
    long long count_b = -1, count_c = -1;
    std::string p, p_file;
    std::string x, y, pairs, method = "auto";
    std::string traces, criteria;
    std::string trajectories;
    bool exclude_terminal = false;
    std::string records;
    std::string annotations;
};

std::vector<std::string> labels(const std::string& inline_list, const std::string& file, const char* flag) {
    if (!inline_list.empty() && !file.empty()) throw ValidationError(std::string("--") + flag + ": give a list or a file, not both");
    if (!file.empty()) {
        std::vector<std::string> out;
        for (const auto& v : read_jsonl(file)) out.push_back(label_of(v));
        return out;
    }
    if (inline_list.empty()) throw ValidationError(std::string("--") + flag + ": required");
    return split_list(inline_list);
}

int eval_kappa(const EvalArgs& a, std::ostream& out) {
    const auto la = labels(a.a, a.a_file, "a");
    const auto lb = labels(a.b, a.b_file, "b");
    const double kappa = cohens_kappa(la, lb);
    out << Json{{"kappa", kappa}, {"n", la.size()}}.dump() << "\n";
    if (!a.csv.empty()) write_csv(a.csv, {{"kappa", "n"}, {Json(kappa).dump(), std::to_string(la.size())}});
    return kOk;
}

int eval_mcnemar(const EvalArgs& a, std::ostream& out) {
    if (a.count_b < 0 || a.count_c < 0) throw ValidationError("--b and --c: required non-negative counts");
    const double p = mcnemar_exact(a.count_b, a.count_c);
    out << Json{{"p", p}}.dump() << "\n";
    if (!a.csv.empty()) write_csv(a.csv, {{"b", "c", "p"}, {std::to_string(a.count_b), std::to_string(a.count_c), Json(p).dump()}});
    return kOk;
}

int eval_bh(const EvalArgs& a, std::ostream& out) {
    std::vector<double> p;
    if (!a.p_file.empty()) {
        for (const auto& v : read_jsonl(a.p_file)) {
            if (!v.is_number()) throw ParseError(a.p_file + ": expected one number per line");
            p.push_back(v.get<double>());
        }
    } else {
        if (a.p.empty()) throw ValidationError("--p or --p-file: required");
        p = parse_numbers(a.p, "--p");
    }
    const auto adjusted = bh_adjust(p);
    out << Json(adjusted).dump() << "\n";
    if (!a.csv.empty()) {
        std::vector<std::vector<std::string>> rows{{"p", "adjusted"}};
        for (std::size_t i = 0; i < p.size(); ++i) rows.push_back({Json(p[i]).dump(), Json(adjusted[i]).dump()});
        write_csv(a.csv, rows);
    }
    return kOk;
}

int eval_wilcoxon(const EvalArgs& a, std::ostream& out) {
    std::vector<double> x;
    std::vector<double> y;
    if (!a.pairs.empty()) {
        for (const auto& v : read_jsonl(a.pairs)) {
            if (!v.is_object() || !v.contains("x") || !v.contains("y") || !v["x"].is_number() || !v["y"].is_number()) {
                throw ParseError(a.pairs + ": expected {\"x\": number, \"y\": number} per line");
            }
            x.push_back(v["x"].get<double>());
            y.push_back(v["y"].get<double>());
        }
    } else {
        if (a.x.empty() || a.y.empty()) throw ValidationError("--x and --y (or --pairs): required");
        x = parse_numbers(a.x, "--x");
        y = parse_numbers(a.y, "--y");
    }
    WilcoxonMethod method = WilcoxonMethod::automatic;
    if (a.method == "exact") method = WilcoxonMethod::exact;
    else if (a.method == "normal") method = WilcoxonMethod::normal;
    else if (a.method != "auto") throw ValidationError("--method: expected auto, exact or normal");
    const auto r = wilcoxon_signed_rank(x, y, method);
    out << Json(r).dump() << "\n";
    if (!a.csv.empty()) {
        write_csv(a.csv, {{"p", "w_plus", "w_minus", "n_effective", "method"},
                          {Json(r.p_value).dump(), Json(r.w_plus).dump(), Json(r.w_minus).dump(),
                           std::to_string(r.n_effective), r.exact ? "exact" : "normal"}});
    }
    return kOk;
}

int eval_convergence(const EvalArgs& a, std::ostream& out) {
    if (a.traces.empty()) throw ValidationError("--traces: required");
    const auto traces = read_documents<RefinementTrace>(a.traces);
    if (traces.empty()) throw ValidationError(a.traces + ": no traces");
    std::set<RubricCriterion> criteria;
    if (a.criteria.empty()) {
        criteria = traces.front().config_snapshot.target_criteria;
    } else {
        for (const auto& name : split_list(a.criteria)) {
            auto c = criterion_from_string(name);
            if (!c) throw ValidationError("--criteria: unknown criterion: " + name);
            criteria.insert(*c);
        }
    }
    const auto points = convergence_curve(traces, criteria);
    out << Json(points).dump() << "\n";
    if (!a.csv.empty()) {
        std::vector<std::vector<std::string>> rows{{"criterion", "iteration", "pass_rate", "passes", "n"}};
        for (const auto& p : points) {
            rows.push_back({std::string(to_string(p.criterion)), std::to_string(p.iteration), Json(p.pass_rate).dump(),
                            std::to_string(p.passes), std::to_string(p.n)});
        }
        write_csv(a.csv, rows);
    }
    return kOk;
}

int eval_steps(const EvalArgs& a, std::ostream& out) {
    if (a.trajectories.empty()) throw ValidationError("--trajectories: required");
    const auto trajectories = read_documents<Trajectory>(a.trajectories);
    const auto m = step_metrics(trajectories, !a.exclude_terminal);
    out << Json(m).dump() << "\n";
    if (!a.csv.empty()) {
        write_csv(a.csv, {{"mean_steps", "mean_tool_calls", "extra_step_rate", "n"},
                          {Json(m.mean_steps).dump(), Json(m.mean_tool_calls).dump(), Json(m.extra_step_rate).dump(),
                           std::to_string(m.n)}});
    }
    return kOk;
}

int eval_steering(const EvalArgs& a, std::ostream& out) {
    if (a.records.empty()) throw ValidationError("--records: required");
    const auto records = read_documents<SteeringRecord>(a.records);
    const auto rows = steering_table(records);
    out << Json(rows).dump() << "\n";
    if (!a.csv.empty()) {
        std::vector<std::vector<std::string>> table{{"component", "rate_highlighted", "rate_not_highlighted", "n_highlighted",
                                                     "n_not_highlighted"}};
        for (const auto& r : rows) {
            table.push_back({r.component, csv_number(r.rate_highlighted), csv_number(r.rate_not_highlighted),
                             std::to_string(r.n_highlighted), std::to_string(r.n_not_highlighted)});
        }
        write_csv(a.csv, table);
    }
    return kOk;
}

int eval_prevalence(const EvalArgs& a, std::ostream& out) {
    if (a.annotations.empty()) throw ValidationError("--annotations: required");
    std::vector<CategoryAnnotation> annotations;
    int n = 0;
    for (const auto& doc : read_jsonl(a.annotations)) {
        ++n;
        const std::string where = a.annotations + " record " + std::to_string(n);
        if (!doc.is_object() || !doc.contains("student_id") || !doc["student_id"].is_string()) {
            throw ParseError(where + ".student_id: expected string");
        }
        if (!doc.contains("category") || !doc["category"].is_string()) throw ParseError(where + ".category: expected string");
        auto c = category_from_string(doc["category"].get<std::string>());
        if (!c) throw ParseError(where + ".category: unknown category: " + doc["category"].get<std::string>());
        annotations.push_back({doc["student_id"].get<std::string>(), *c});
    }
    const auto prevalence = category_prevalence(annotations);
    Json result = Json::object();
    for (const auto& [c, v] : prevalence) result[std::string(to_string(c))] = v;
    out << result.dump() << "\n";
    if (!a.csv.empty()) {
        std::vector<std::vector<std::string>> rows{{"category", "prevalence"}};
        for (const auto& [c, v] : prevalence) rows.push_back({std::string(to_string(c)), Json(v).dump()});
        write_csv(a.csv, rows);
    }
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"coach: feedback engine operator tool"};
    app.name("coach");
    app.require_subcommand(1);
    std::function<int()> action;

    IngestArgs ingest;
    auto* sub_ingest = app.add_subcommand("ingest", "Chunk and index a markdown corpus");
    sub_ingest->add_option("--corpus", ingest.corpus, "Corpus directory")->required();
    sub_ingest->add_option("--out", ingest.out, "Index file to write")->required();
    sub_ingest->add_option("--embedder", ingest.embedder, "Embedder descriptor JSON file");
    sub_ingest->add_option("--dimension", ingest.dimension, "Fake embedder dimension (0 disables vectors)");
    sub_ingest->add_option("--max-chars", ingest.max_chars, "Maximum chunk size in bytes");
    sub_ingest->add_option("--overlap", ingest.overlap, "Overlap between split pieces in bytes");
    sub_ingest->callback([&] { action = [&] { return cmd_ingest(ingest, out); }; });

    std::string serve_config;
    std::string serve_listen;
    auto* sub_serve = app.add_subcommand("serve", "Run the HTTP service");
    sub_serve->add_option("--config", serve_config, "Service configuration JSON")->required();
    sub_serve->add_option("--listen", serve_listen, "host:port, overriding the config");
    sub_serve->callback([&] { action = [&] { return cmd_serve(serve_config, serve_listen, out, err); }; });

    BatchArgs batch;
    auto* sub_batch = app.add_subcommand("batch-refine", "Refine feedback for every context in a dataset");
    sub_batch->add_option("--dataset", batch.dataset, "JSON lines of FeedbackContext")->required();
    sub_batch->add_option("--config", batch.config, "Backends and refinement settings")->required();
    sub_batch->add_option("--out", batch.out, "JSON lines of RefinementTrace to write")->required();
    sub_batch->add_option("--jobs", batch.jobs, "Contexts refined in parallel");
    sub_batch->callback([&] { action = [&] { return cmd_batch_refine(batch, out, err); }; });

    std::string replay_file;
    auto* sub_replay = app.add_subcommand("replay", "Print a persisted trajectory");
    sub_replay->add_option("--trajectory", replay_file, "Trajectory document")->required();
    sub_replay->callback([&] { action = [&] { return cmd_replay(replay_file, out); }; });

    std::string export_input;
    std::string export_out;
    std::string export_config;
    auto* sub_export = app.add_subcommand("export-traces", "Write two-stage training records for trajectories");
    sub_export->add_option("--input", export_input, "JSON lines of {trajectory, report, history}")->required();
    sub_export->add_option("--out", export_out, "JSON lines file to write")->required();
    sub_export->add_option("--service-config", export_config, "Advertise only the tools this service configures");
    sub_export->callback([&] { action = [&] { return cmd_export(export_input, export_out, export_config, out); }; });

    EvalArgs ev;
    auto* sub_eval = app.add_subcommand("eval", "Evaluation statistics");
    sub_eval->require_subcommand(1);
    auto eval_sub = [&](const char* name, const char* help, int (*fn)(const EvalArgs&, std::ostream&)) {
        auto* s = sub_eval->add_subcommand(name, help);
        s->add_option("--csv", ev.csv, "Also write the result table as CSV");
        s->callback([&, fn] { action = [&, fn] { return fn(ev, out); }; });
        return s;
    };
    auto* kappa = eval_sub("kappa", "Cohen's kappa between two raters", eval_kappa);
    kappa->add_option("--a", ev.a, "Comma-separated labels of rater A");
    kappa->add_option("--b", ev.b, "Comma-separated labels of rater B");
    kappa->add_option("--a-file", ev.a_file, "JSON lines of rater A labels");
    kappa->add_option("--b-file", ev.b_file, "JSON lines of rater B labels");
    auto* mcnemar = eval_sub("mcnemar", "Exact McNemar test", eval_mcnemar);
    mcnemar->add_option("--b", ev.count_b, "Discordant pairs one way")->required();
    mcnemar->add_option("--c", ev.count_c, "Discordant pairs the other way")->required();
    auto* bh = eval_sub("bh", "Benjamini-Hochberg adjustment", eval_bh);
    bh->add_option("--p", ev.p, "Comma-separated p-values");
    bh->add_option("--p-file", ev.p_file, "JSON lines of p-values");
    auto* wilcoxon = eval_sub("wilcoxon", "Paired Wilcoxon signed-rank test", eval_wilcoxon);
    wilcoxon->add_option("--x", ev.x, "Comma-separated first sample");
    wilcoxon->add_option("--y", ev.y, "Comma-separated second sample");
    wilcoxon->add_option("--pairs", ev.pairs, "JSON lines of {x, y}");
    wilcoxon->add_option("--method", ev.method, "auto, exact or normal");
    auto* convergence = eval_sub("convergence", "Pass rate per criterion and iteration", eval_convergence);
    convergence->add_option("--traces", ev.traces, "JSON lines of RefinementTrace")->required();
    convergence->add_option("--criteria", ev.criteria, "Comma-separated criteria (default: the traces' targets)");
    auto* steps = eval_sub("steps", "Agent step efficiency", eval_steps);
    steps->add_option("--trajectories", ev.trajectories, "JSON lines of Trajectory")->required();
    steps->add_flag("--exclude-terminal", ev.exclude_terminal, "Do not count the answer turn as a step");
    auto* steering = eval_sub("steering", "Discussed-when-highlighted proportions", eval_steering);
    steering->add_option("--records", ev.records, "JSON lines of SteeringRecord")->required();
    auto* prevalence = eval_sub("prevalence", "Share of students asking per question category", eval_prevalence);
    prevalence->add_option("--annotations", ev.annotations, "JSON lines of {student_id, category}")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kInputError;
    }

    try {
        return action ? action() : kInputError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return classify(e);
    }
}

}  // namespace coach::cli
