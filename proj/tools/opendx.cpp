// opendx command-line driver.
//
//   opendx gen-cohort  --out cohort.jsonl
//   opendx split       --cohort cohort.jsonl --out split.json
//   opendx train       --cohort cohort.jsonl --split split.json --out model.json [--stage 1|2|all]
//   opendx label-exams --cohort cohort.jsonl --split split.json --model model.json --out labels.jsonl
//   opendx fit-openmax --cohort cohort.jsonl --split split.json --model model.json --out openmax.json
//   opendx evaluate    --cohort ... --split ... --model ... --openmax ... --out report.json
//   opendx simulate    --out report.json            (generate, train, fit, evaluate in one go)
//   opendx serve       --model model.json --openmax openmax.json --port 8080
//
// Exit status: 0 success, 2 invalid input or missing artifact, 1 runtime failure.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "opendx/cohort_io.hpp"
#include "opendx/errors.hpp"
#include "opendx/pipeline.hpp"
#include "opendx/service.hpp"

// After Eigen: <resolv.h>, pulled in here, defines a `_res` macro.
#include <httplib.h>

namespace fs = std::filesystem;
using namespace opendx;

namespace {

class UsageError : public Error {
public:
    using Error::Error;
};

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string mode;
    std::string out;
    std::string cohort, split, model, labels, openmax, indicators, traces, audit_log, artifacts;
    std::string stage = "all";
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t threads = 0;
    bool quiet = false;
};

fs::path require_file(const std::string& path, const char* what, const char* hint) {
    if (path.empty()) throw UsageError(std::string("missing --") + what + " (" + hint + ")");
    if (!fs::exists(path)) throw UsageError(std::string(what) + " artifact not found: " + path + " (" + hint + ")");
    return path;
}

fs::path require_out(const Options& o) {
    if (o.out.empty()) throw UsageError("missing --out");
    return o.out;
}

PipelineConfig load_config(const Options& o) {
    PipelineConfig c;
    if (!o.config.empty())
        c = pipeline_config_from_json(read_json_file(require_file(o.config, "config", "check the --config path")));
    if (o.seed) reseed(c, *o.seed);
    if (!o.mode.empty()) {
        const auto m = parse_mode(o.mode);
        if (!m) throw UsageError("--mode must be real-world or closed");
        c.mode = *m;
        c.evaluation.mode = *m;
    }
    if (o.threads) c.evaluation.threads = o.threads;
    c.validate();
    return c;
}

IndicatorTable load_table(const Options& o) {
    return o.indicators.empty() ? IndicatorTable::defaults() : load_indicator_table(o.indicators);
}

EpochObserver progress(const Options& o) {
    if (o.quiet) return {};
    return [](int stage, std::size_t epoch, double loss) {
        std::cerr << "stage " << stage << " epoch " << epoch << " loss " << loss << '\n';
    };
}

Cohort load_cohort_arg(const Options& o) {
    return load_cohort(require_file(o.cohort, "cohort", "run `opendx gen-cohort` first"));
}

SplitSpec load_split_arg(const Options& o) {
    return split_from_json(read_json_file(require_file(o.split, "split", "run `opendx split` first")));
}

ModelBundle load_model_arg(const Options& o) {
    return load_bundle(require_file(o.model, "model", "run `opendx train` first"));
}

OpenMaxModel load_openmax_arg(const Options& o) {
    return openmax_from_json(read_json_file(require_file(o.openmax, "openmax", "run `opendx fit-openmax` first")));
}

template <class Fn>
void write_text_file(const fs::path& path, Fn&& fn) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    fn(out);
    if (!out) throw Error("write failed: " + path.string());
}

void cmd_gen_cohort(const Options& o) {
    const auto c = load_config(o);
    const auto out = require_out(o);
    const Cohort cohort = generate_cohort(c.cohort, load_table(o));
    save_cohort(out, cohort);
    std::cout << "wrote " << cohort.subjects.size() << " subjects / " << cohort.visit_count() << " visits to " << out.string() << '\n';
}

void cmd_split(const Options& o) {
    const auto c = load_config(o);
    const auto out = require_out(o);
    const SplitSpec split = split_clinical_aibench(load_cohort_arg(o), c.mode, c.split_seed);
    write_json_file(out, split_to_json(split));
    std::cout << "train " << split.count(Partition::Train) << ", validation " << split.count(Partition::Validation)
              << ", test " << split.count(Partition::Test) << '\n';
}

void cmd_train(const Options& o) {
    const auto c = load_config(o);
    const auto out = require_out(o);
    const Cohort cohort = load_cohort_arg(o);
    const SplitSpec split = load_split_arg(o);
    ModelBundle bundle;
    if (o.stage == "1") {
        bundle = train_stage1_bundle(cohort, split, c.train, c.first_visit_variant, progress(o));
    } else if (o.stage == "2") {
        std::ifstream in(require_file(o.labels, "labels", "run `opendx label-exams` first"));
        bundle = train_stage2_bundle(load_model_arg(o), cohort, read_labeled(in), c.train, progress(o));
    } else if (o.stage == "all") {
        auto result = train_system(cohort, split, c.train, c.first_visit_variant, progress(o));
        bundle = std::move(result.bundle);
        if (!o.labels.empty()) write_text_file(o.labels, [&](std::ostream& s) { write_labeled(s, result.labels); });
    } else {
        throw UsageError("--stage must be 1, 2 or all");
    }
    save_bundle(out, bundle);
    std::cout << "wrote model to " << out.string() << '\n';
}

void cmd_label_exams(const Options& o) {
    const auto out = require_out(o);
    const auto labels = label_bundle(load_model_arg(o), load_cohort_arg(o), load_split_arg(o));
    write_text_file(out, [&](std::ostream& s) { write_labeled(s, labels); });
    std::cout << "wrote " << labels.size() << " label records to " << out.string() << '\n';
}

void cmd_fit_openmax(const Options& o) {
    const auto c = load_config(o);
    const auto out = require_out(o);
    const auto model = fit_openmax_for(load_model_arg(o), load_cohort_arg(o), load_split_arg(o), load_table(o), c.openmax);
    write_json_file(out, openmax_to_json(model));
    std::cout << "wrote OpenMax model to " << out.string() << '\n';
}

void emit_report(const Options& o, const EvaluationReport& report) {
    write_json_file(require_out(o), report_to_json(report));
    if (!o.traces.empty()) write_text_file(o.traces, [&](std::ostream& s) { write_traces_csv(s, report); });
    write_report_text(std::cout, report);
}

void cmd_evaluate(const Options& o) {
    const auto c = load_config(o);
    require_out(o);
    const auto table = load_table(o);
    ModelBundle bundle = load_model_arg(o);
    const OpenSetModel model(std::move(bundle), load_openmax_arg(o), table);
    const Cohort cohort = load_cohort_arg(o);
    const SplitSpec split = load_split_arg(o);
    const PolicyEngine engine(model, c.policy, table);
    EvaluationOptions eval = c.evaluation;
    eval.mode = split.mode;
    emit_report(o, evaluate_system(split, cohort, engine, eval));
}

void cmd_simulate(const Options& o) {
    const auto c = load_config(o);
    require_out(o);
    const auto table = load_table(o);
    const PipelineResult r = run_pipeline(c, table, progress(o));
    if (!o.artifacts.empty()) {
        const fs::path dir = o.artifacts;
        fs::create_directories(dir);
        save_cohort(dir / "cohort.jsonl", r.cohort);
        write_json_file(dir / "split.json", split_to_json(r.split));
        save_bundle(dir / "model.json", r.bundle);
        write_json_file(dir / "openmax.json", openmax_to_json(r.openmax));
    }
    emit_report(o, r.report);
}

void cmd_serve(const Options& o) {
    const auto c = load_config(o);
    const auto table = load_table(o);
    ModelBundle bundle = load_model_arg(o);
    const OpenSetModel model(std::move(bundle), load_openmax_arg(o), table);
    const PolicyEngine engine(model, c.policy, table);
    SessionRegistry registry(engine, table,
                             o.audit_log.empty() ? std::nullopt : std::optional<fs::path>(o.audit_log));

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    httplib::Server server;
    install_routes(server, registry);
    if (!server.bind_to_port(o.host, o.port)) throw Error("cannot bind " + o.host + ":" + std::to_string(o.port));
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        server.stop();
    });
    std::cout << "serving on http://" << o.host << ':' << o.port << "/v1" << std::endl;
    server.listen_after_bind();
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"opendx: open-set staged diagnosis toolkit"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--config", o.config, "pipeline configuration JSON");
    app.add_option("--seed", o.seed, "master seed, overrides every seed of the configuration");
    app.add_option("--mode", o.mode, "setting: real-world or closed");
    app.add_option("--out", o.out, "output path");
    app.add_option("--indicators", o.indicators, "indicator range table JSON");
    app.add_flag("--quiet", o.quiet, "no training progress on stderr");

    auto add_inputs = [&](CLI::App* sub, bool cohort, bool split, bool model) {
        if (cohort) sub->add_option("--cohort", o.cohort, "cohort JSONL");
        if (split) sub->add_option("--split", o.split, "split JSON");
        if (model) sub->add_option("--model", o.model, "model bundle JSON");
    };
    auto* gen = app.add_subcommand("gen-cohort", "generate a synthetic cohort");
    auto* split = app.add_subcommand("split", "assign subjects to train / validation / test");
    add_inputs(split, true, false, false);
    auto* train = app.add_subcommand("train", "train the backbone");
    add_inputs(train, true, true, true);
    train->add_option("--stage", o.stage, "1, 2 or all")->check(CLI::IsMember({"1", "2", "all"}));
    train->add_option("--labels", o.labels, "exam labels (input for stage 2, output for all)");
    auto* label = app.add_subcommand("label-exams", "derive next-exam labels from a stage-1 model");
    add_inputs(label, true, true, true);
    auto* fit = app.add_subcommand("fit-openmax", "fit OpenMax calibration");
    add_inputs(fit, true, true, true);
    auto* eval = app.add_subcommand("evaluate", "replay test sessions and report metrics");
    add_inputs(eval, true, true, true);
    auto* sim = app.add_subcommand("simulate", "run the whole pipeline from the configuration");
    sim->add_option("--artifacts", o.artifacts, "directory for cohort, split, model and OpenMax files");
    for (auto* sub : {eval, sim}) {
        sub->add_option("--openmax", o.openmax, "OpenMax model JSON");
        sub->add_option("--traces", o.traces, "per-session CSV");
        sub->add_option("--threads", o.threads, "evaluation threads");
    }
    auto* serve = app.add_subcommand("serve", "serve the /v1 session API");
    add_inputs(serve, false, false, true);
    serve->add_option("--openmax", o.openmax, "OpenMax model JSON");
    serve->add_option("--host", o.host, "bind address");
    serve->add_option("--port", o.port, "port");
    serve->add_option("--audit-log", o.audit_log, "append session events as JSONL");
    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*gen) cmd_gen_cohort(o);
        else if (*split) cmd_split(o);
        else if (*train) cmd_train(o);
        else if (*label) cmd_label_exams(o);
        else if (*fit) cmd_fit_openmax(o);
        else if (*eval) cmd_evaluate(o);
        else if (*sim) cmd_simulate(o);
        else if (*serve) cmd_serve(o);
        return 0;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const SchemaError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return 2;
    } catch (const DegenerateSplit& e) {
        std::cerr << "invalid split: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
