// SPDX-License-Identifier: Apache-2.0
// cxreval command-line front end: label, refine, eval and the reader study.

#include <cxreval/cxreval.hpp>
#include <cxreval/llm_refine.hpp>
#include <cxreval/manifest.hpp>
#include <cxreval/study_server.hpp>

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace cxreval;

namespace {

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
    std::string lexicon;
    std::string out = ".";
};

Lexicon lexicon_for(const Globals& g) {
    return g.lexicon.empty() ? default_lexicon() : load_lexicon(g.lexicon);
}

std::uint64_t require_seed(const Globals& g, const char* command) {
    if (!g.seed) throw UsageError(std::string("--seed is required for ") + command);
    return *g.seed;
}

std::string out_path(const Globals& g, const std::string& name) {
    fs::create_directories(g.out);
    return (fs::path(g.out) / name).string();
}

void write_text(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write file", {path});
    out << data;
    if (!out) throw Error(ErrorKind::Io, "write failed", {path});
}

/// Collects inputs/outputs of one run and writes manifest.json next to them.
class Manifest {
public:
    Manifest(const Globals& g, std::vector<std::string> argv) : globals_(g) {
        m_.command_line = std::move(argv);
        m_.started_at = utc_timestamp();
        m_.config["threads"] = g.threads;
        m_.config["lexicon"] = g.lexicon.empty() ? "builtin" : g.lexicon;
        if (!g.lexicon.empty()) m_.add_input(g.lexicon);
        if (g.seed) m_.seed = *g.seed;
    }
    nlohmann::json& config() { return m_.config; }
    void input(const std::string& path) { m_.add_input(path); }
    void output(const std::string& path) { m_.add_output(path); }
    void finish() {
        m_.finished_at = utc_timestamp();
        write_text(out_path(globals_, "manifest.json"), to_json(m_).dump(2) + "\n");
    }

private:
    const Globals& globals_;
    RunManifest m_;
};

nlohmann::json labels_json(const LabelMap& labels) {
    nlohmann::json j = nlohmann::json::object();
    for (auto f : kAllFindings) {
        auto l = labels[f];
        j[std::string(to_string(f))] =
            l == FindingLabel::NotMentioned ? nlohmann::json(nullptr) : nlohmann::json(to_string(l));
    }
    return j;
}

// ---------------------------------------------------------------------------

struct LabelArgs {
    std::string input;
};

void run_label(const Globals& g, const LabelArgs& a, Manifest& man) {
    auto lex = lexicon_for(g);
    auto corpus = load_corpus(a.input);
    man.input(a.input);
    auto labels = label_corpus(corpus, lex, g.threads);
    std::string out;
    for (std::size_t i = 0; i < corpus.records.size(); ++i)
        out += nlohmann::json{{"id", corpus.records[i].id}, {"labels", labels_json(labels[i])}}.dump() + "\n";
    auto path = out_path(g, "labels.jsonl");
    write_text(path, out);
    man.output(path);
}

struct RefineArgs {
    std::string input;
    bool llm = false;
    bool keep_lateral = false;
    RefineEndpointConfig endpoint;
};

int run_refine(const Globals& g, const RefineArgs& a, Manifest& man) {
    auto corpus = load_corpus(a.input);
    man.input(a.input);
    man.config()["llm"] = a.llm;
    std::string refined, audit;
    int failures = 0;

    if (!a.llm) {
        RefinementRules rules;
        rules.drop_lateral = !a.keep_lateral;
        man.config()["drop_lateral"] = rules.drop_lateral;
        for (auto rec : corpus.records) {
            auto result = refine_rule_based(extract_sections(rec.text, rec.id), rules);
            nlohmann::json dropped = nlohmann::json::array();
            for (const auto& d : result.dropped)
                dropped.push_back({{"sentence", d.sentence}, {"rule", d.rule}});
            nlohmann::json entry{{"id", rec.id}, {"dropped", dropped}};
            rec.text = render_report(result.report);
            if (trim(rec.text).empty()) {
                // An empty report cannot be reloaded; record it in the audit only.
                entry["emptied"] = true;
                std::cerr << "warning: report '" << rec.id << "' is empty after refinement\n";
            } else {
                refined += record_to_json(rec).dump() + "\n";
            }
            audit += entry.dump() + "\n";
        }
    } else {
        man.config()["endpoint"] = a.endpoint.base_url;
        man.config()["model"] = a.endpoint.model;
        man.config()["with_qa"] = a.endpoint.with_qa;
        std::vector<StructuredReport> reports;
        for (const auto& rec : corpus.records) reports.push_back(extract_sections(rec.text, rec.id));
        auto outcomes = llm_refine_batch(reports, a.endpoint);
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            auto rec = corpus.records[i];
            nlohmann::json entry{{"id", rec.id}, {"dropped", nlohmann::json::array()}};
            if (outcomes[i].error) {
                ++failures;
                entry["error"] = outcomes[i].error->what();
                std::cerr << "error: " << rec.id << ": " << outcomes[i].error->what() << "\n";
            } else {
                const auto& r = *outcomes[i].report;
                rec.text = r.standard_report;
                auto j = record_to_json(rec);
                j["conclusion"] = r.conclusion;
                j["recommendation"] = r.recommendation;
                if (!r.qa_pairs.empty()) {
                    nlohmann::json qa = nlohmann::json::array();
                    for (const auto& p : r.qa_pairs)
                        qa.push_back({{"question", p.question}, {"answer", p.answer}});
                    j["qa"] = qa;
                }
                refined += j.dump() + "\n";
                if (!r.warnings.empty()) entry["warnings"] = r.warnings;
            }
            audit += entry.dump() + "\n";
        }
    }
    auto refined_path = out_path(g, "refined.jsonl");
    auto audit_path = out_path(g, "refine_audit.jsonl");
    write_text(refined_path, refined);
    write_text(audit_path, audit);
    man.output(refined_path);
    man.output(audit_path);
    return failures ? kExitData : 0;
}

struct EvalArgs {
    std::string gt, gt_csv, id_column = "id", map;
    std::string pred, pred_labels;
    std::string preset = "mimic-chexpert";
    int iterations = 1000;
    double level = 0.95;
    std::optional<int> min_class_count;
    std::optional<double> min_class_fraction;
    bool no_fraction_rule = false;
    bool not_mentioned_as_negative = false;
    bool no_ci = false;
};

ColumnMap load_column_map(const std::string& path, const std::vector<std::string>& headers) {
    if (path.empty()) return default_column_map(headers);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open column map", {path});
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::SchemaError, e.what(), {path});
    }
    if (!j.is_object()) throw Error(ErrorKind::SchemaError, "column map must be an object", {path});
    ColumnMap map;
    for (const auto& [header, value] : j.items()) {
        if (!value.is_string()) throw Error(ErrorKind::SchemaError, "column map values must be finding names", {path});
        auto f = finding_from_string(value.get<std::string>());
        if (!f) throw Error(ErrorKind::SchemaError, "unknown finding '" + value.get<std::string>() + "'", {path});
        map.emplace_back(header, *f);
    }
    return map;
}

void run_eval(const Globals& g, const EvalArgs& a, Manifest& man) {
    const auto seed = require_seed(g, "eval");
    auto config = exclusion_preset(a.preset);
    if (a.min_class_count) config.min_class_count = *a.min_class_count;
    if (a.min_class_fraction) config.min_class_fraction = *a.min_class_fraction;
    if (a.no_fraction_rule) config.min_class_fraction.reset();
    if (a.not_mentioned_as_negative) config.treat_not_mentioned_as_uncertain = false;
    try {
        validate(config);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }

    Corpus gt;
    if (!a.gt_csv.empty()) {
        auto headers = read_csv_header(a.gt_csv);
        if (!a.map.empty()) man.input(a.map);
        gt = load_binary_labels(a.gt_csv, a.id_column, load_column_map(a.map, headers));
        man.input(a.gt_csv);
    } else {
        gt = load_corpus(a.gt);
        man.input(a.gt);
    }
    Corpus pred;
    if (!a.pred_labels.empty()) {
        pred = load_label_records(a.pred_labels);
        man.input(a.pred_labels);
    } else {
        pred = load_corpus(a.pred);
        man.input(a.pred);
    }

    EvalOptions opt;
    opt.bootstrap.seed = seed;
    opt.bootstrap.iterations = a.iterations;
    opt.bootstrap.level = a.level;
    opt.bootstrap.threads = g.threads;
    opt.with_ci = !a.no_ci;
    auto report = evaluate(gt, pred, lexicon_for(g), config, opt);

    man.config()["preset"] = a.preset;
    man.config()["exclusion"] = to_json(config);
    man.config()["iterations"] = a.iterations;
    man.config()["level"] = a.level;
    man.config()["with_ci"] = opt.with_ci;

    auto metrics_path = out_path(g, "metrics.json");
    auto table_path = out_path(g, "table.md");
    write_text(metrics_path, to_json(report).dump(2) + "\n");
    write_text(table_path, to_markdown(report));
    man.output(metrics_path);
    man.output(table_path);
}

struct StudyCreateArgs {
    std::string corpus;
    std::size_t n_abnormal = 25, n_normal = 25;
    std::vector<std::string> raters;
};

void run_study_create(const Globals& g, const StudyCreateArgs& a, Manifest& man) {
    const auto seed = require_seed(g, "study create");
    auto corpus = load_corpus(a.corpus);
    man.input(a.corpus);
    auto session = create_session(corpus, a.n_abnormal, a.n_normal, a.raters, seed, utc_timestamp());
    man.config()["abnormal"] = a.n_abnormal;
    man.config()["normal"] = a.n_normal;
    man.config()["raters"] = a.raters;
    auto path = out_path(g, "session.json");
    save_session(session, path);
    man.output(path);
    std::cerr << "session " << session.session_id << ": " << session.items.size() << " items, "
              << session.expected_ratings() << " expected ratings\n";
}

struct StudyServeArgs {
    std::string session, ratings, host = "127.0.0.1", ui_dir, image_dir;
    int port = 8080;
};

StudyServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

std::string default_ratings_path(const std::string& session_path) {
    return (fs::path(session_path).parent_path() / "ratings.jsonl").string();
}

void run_study_serve(const StudyServeArgs& a) {
    auto session = load_session(a.session);
    RatingStore store(session, a.ratings.empty() ? default_ratings_path(a.session) : a.ratings);
    ServerConfig cfg;
    cfg.host = a.host;
    cfg.port = a.port;
    cfg.ui_dir = a.ui_dir;
    if (cfg.ui_dir.empty() && fs::exists(fs::path(CXREVAL_DEFAULT_UI_DIR) / "index.html"))
        cfg.ui_dir = CXREVAL_DEFAULT_UI_DIR;
    cfg.image_dir = a.image_dir.empty() ? fs::path(a.session).parent_path().string() : a.image_dir;
    if (cfg.image_dir.empty()) cfg.image_dir = ".";

    StudyServer server(session, store, cfg);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "serving session " << session.session_id << " on http://" << cfg.host << ":"
              << cfg.port << "/ (ratings: " << store.path() << ")\n";
    const bool ok = server.listen();
    g_server = nullptr;
    if (!ok) throw Error(ErrorKind::Io, "cannot listen on " + cfg.host + ":" + std::to_string(cfg.port));
}

struct StudyAnalyzeArgs {
    std::string session, ratings;
};

void run_study_analyze(const Globals& g, const StudyAnalyzeArgs& a, Manifest& man) {
    auto session = load_session(a.session);
    man.input(a.session);
    const auto ratings_path = a.ratings.empty() ? default_ratings_path(a.session) : a.ratings;
    std::string data;
    {
        std::ifstream in(ratings_path, std::ios::binary);
        if (!in) throw Error(ErrorKind::Io, "cannot open ratings log", {ratings_path});
        data.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    man.input(ratings_path);
    auto summary = analyze_session(session, parse_ratings_log(data));
    auto summary_path = out_path(g, "summary.json");
    auto table_path = out_path(g, "table.md");
    write_text(summary_path, to_json(summary).dump(2) + "\n");
    write_text(table_path, to_markdown(summary));
    man.output(summary_path);
    man.output(table_path);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Evaluation toolkit for generated chest radiograph reports", "cxreval"};
    app.set_version_flag("--version", kToolVersion);
    app.set_help_all_flag("--help-all", "Print help for every subcommand");
    app.set_config("--config", "", "Read options from a flat TOML/INI file");
    app.require_subcommand(1);

    Globals g;
    app.add_option("--seed", g.seed, "Seed for bootstrap and study sampling (required by eval and study create)");
    app.add_option("--threads", g.threads, "Worker threads; results do not depend on this")
        ->check(CLI::Range(1u, 1024u));
    app.add_option("--lexicon", g.lexicon, "Lexicon JSON file (default: built-in lexicon)")
        ->check(CLI::ExistingFile);
    app.add_option("--out", g.out, "Output directory")->capture_default_str();

    auto* label = app.add_subcommand("label", "Label reports with the rule-based labeler -> labels.jsonl");
    label->fallthrough();
    LabelArgs label_args;
    label->add_option("--in", label_args.input, "Report corpus (JSONL)")->required()->check(CLI::ExistingFile);

    auto* refine = app.add_subcommand("refine", "Strip temporal, device and measurement content -> refined.jsonl, refine_audit.jsonl");
    refine->fallthrough();
    RefineArgs refine_args;
    refine->add_option("--in", refine_args.input, "Report corpus (JSONL)")->required()->check(CLI::ExistingFile);
    refine->add_flag("--keep-lateral", refine_args.keep_lateral, "Keep sentences mentioning the lateral view");
    refine->add_flag("--llm", refine_args.llm, "Refine through a chat-completion endpoint instead of the rules");
    refine->add_option("--endpoint", refine_args.endpoint.base_url, "Base URL of the chat-completion API")->capture_default_str();
    refine->add_option("--model", refine_args.endpoint.model, "Model name sent to the endpoint")->capture_default_str();
    refine->add_option("--token-env", refine_args.endpoint.token_env, "Environment variable holding the bearer token")->capture_default_str();
    refine->add_option("--timeout", refine_args.endpoint.timeout_seconds, "Request timeout in seconds")->capture_default_str();
    refine->add_option("--max-in-flight", refine_args.endpoint.max_in_flight, "Maximum concurrent requests")
        ->check(CLI::Range(1u, 256u))->capture_default_str();
    refine->add_flag("--with-qa", refine_args.endpoint.with_qa, "Also request question/answer pairs");

    auto* eval = app.add_subcommand("eval", "Compare labels of predictions and ground truth -> metrics.json, table.md");
    eval->fallthrough();
    EvalArgs eval_args;
    auto* gt_opt = eval->add_option("--gt", eval_args.gt, "Ground-truth corpus (JSONL, text or labels)")->check(CLI::ExistingFile);
    auto* gt_csv_opt = eval->add_option("--gt-csv", eval_args.gt_csv, "Ground-truth binary labels (CSV)")->check(CLI::ExistingFile);
    gt_opt->excludes(gt_csv_opt);
    eval->add_option("--id-column", eval_args.id_column, "Id column of --gt-csv")->capture_default_str();
    eval->add_option("--map", eval_args.map, "JSON object mapping CSV headers to finding names")->check(CLI::ExistingFile);
    auto* pred_opt = eval->add_option("--pred", eval_args.pred, "Predicted reports (JSONL)")->check(CLI::ExistingFile);
    auto* pred_labels_opt = eval->add_option("--pred-labels", eval_args.pred_labels, "Predicted labels (JSONL with id and labels)")->check(CLI::ExistingFile);
    pred_opt->excludes(pred_labels_opt);
    eval->add_option("--preset", eval_args.preset, "Exclusion preset")
        ->check(CLI::IsMember(exclusion_preset_names()))->capture_default_str();
    eval->add_option("--iterations", eval_args.iterations, "Bootstrap iterations")
        ->check(CLI::Range(1, 10000000))->capture_default_str();
    eval->add_option("--level", eval_args.level, "Confidence level")->check(CLI::Range(0.5, 0.9999))->capture_default_str();
    eval->add_option("--min-class-count", eval_args.min_class_count, "Override the minority-class count threshold")
        ->check(CLI::NonNegativeNumber);
    eval->add_option("--min-class-fraction", eval_args.min_class_fraction, "Override the minority-class fraction threshold")
        ->check(CLI::Range(0.0, 0.5));
    eval->add_flag("--no-fraction-rule", eval_args.no_fraction_rule, "Disable the minority-class fraction rule");
    eval->add_flag("--not-mentioned-as-negative", eval_args.not_mentioned_as_negative,
                   "Count unmentioned findings as negative instead of skipping them");
    eval->add_flag("--no-ci", eval_args.no_ci, "Skip bootstrap confidence intervals");

    auto* study = app.add_subcommand("study", "Blinded reader study");
    study->require_subcommand(1);
    study->fallthrough();

    auto* create = study->add_subcommand("create", "Sample records and write session.json");
    create->fallthrough();
    StudyCreateArgs create_args;
    create->add_option("--corpus", create_args.corpus, "Corpus with abnormal flags, images and both reports")
        ->required()->check(CLI::ExistingFile);
    create->add_option("--abnormal", create_args.n_abnormal, "Abnormal records to sample")->capture_default_str();
    create->add_option("--normal", create_args.n_normal, "Normal records to sample")->capture_default_str();
    create->add_option("--raters", create_args.raters, "Rater ids (comma separated)")->required()->delimiter(',');

    auto* serve = study->add_subcommand("serve", "Serve the rater UI and rating API");
    serve->fallthrough();
    StudyServeArgs serve_args;
    serve->add_option("--session", serve_args.session, "session.json")->required()->check(CLI::ExistingFile);
    serve->add_option("--ratings", serve_args.ratings, "Ratings log (default: ratings.jsonl next to the session)");
    serve->add_option("--host", serve_args.host, "Bind address")->capture_default_str();
    serve->add_option("--port", serve_args.port, "Port")->check(CLI::Range(0, 65535))->capture_default_str();
    serve->add_option("--ui-dir", serve_args.ui_dir, "Rater UI bundle directory");
    serve->add_option("--image-dir", serve_args.image_dir, "Base directory for relative image paths (default: session directory)");

    auto* analyze = study->add_subcommand("analyze", "Tabulate ratings -> summary.json, table.md");
    analyze->fallthrough();
    StudyAnalyzeArgs analyze_args;
    analyze->add_option("--session", analyze_args.session, "session.json")->required()->check(CLI::ExistingFile);
    analyze->add_option("--ratings", analyze_args.ratings, "Ratings log (default: ratings.jsonl next to the session)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp&) {
        // CLI11 expands one level only; spell out the study subcommands too.
        std::cout << app.help("", CLI::AppFormatMode::All);
        for (auto* sub : {create, serve, analyze})
            std::cout << "\n" << sub->help("study " + sub->get_name(), CLI::AppFormatMode::Sub);
        return 0;
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        std::cerr << "run with --help for usage\n";
        return kExitUsage;
    }

    std::vector<std::string> command_line(argv, argv + argc);
    try {
        if (*serve) {
            run_study_serve(serve_args);
            return 0;
        }
        Manifest man(g, command_line);
        int code = 0;
        if (*label) {
            run_label(g, label_args, man);
        } else if (*refine) {
            code = run_refine(g, refine_args, man);
        } else if (*eval) {
            if (eval_args.gt.empty() == eval_args.gt_csv.empty())
                throw UsageError("eval needs exactly one of --gt or --gt-csv");
            if (eval_args.pred.empty() == eval_args.pred_labels.empty())
                throw UsageError("eval needs exactly one of --pred or --pred-labels");
            run_eval(g, eval_args, man);
        } else if (*create) {
            run_study_create(g, create_args, man);
        } else if (*analyze) {
            run_study_analyze(g, analyze_args, man);
        }
        man.finish();
        return code;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
