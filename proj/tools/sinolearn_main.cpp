// Command line front end: gen-data -> simulate -> train -> eval -> report.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "sino/pipeline.hpp"

using namespace sino;
namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

/// Returns the JSON value at key if the option was not given on the command
/// line, so flags override the config file.
template <class T>
void apply_config(const nlohmann::json& cfg, const CLI::Option* opt, const char* key, T& value) {
    if (opt != nullptr && opt->count() > 0) return;
    if (cfg.contains(key)) value = cfg.at(key).get<T>();
}

nlohmann::json load_config(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::ifstream is(path);
    if (!is) throw io::FormatError("config: cannot open " + path);
    auto j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) throw io::FormatError("config: malformed JSON in " + path);
    return j;
}

int run(int argc, char** argv) {
    CLI::App app{"Sinogram-space learning pipeline for simulated parallel-beam CT"};
    app.require_subcommand(1);

    // ---- gen-data -------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "Generate a seeded phantom dataset");
    std::string gen_task = "lesion", gen_out;
    int gen_cases = 100, gen_spc = 2, gen_side = 128, gen_views = 180;
    std::uint64_t gen_seed = 1;
    double gen_train = 0.7, gen_val = 0.15, gen_test = 0.15;
    gen->add_option("--task", gen_task, "region | lesion | slvariant");
    gen->add_option("--cases", gen_cases, "number of cases")->check(CLI::PositiveNumber);
    gen->add_option("--slices-per-case", gen_spc)->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed);
    gen->add_option("--side", gen_side)->check(CLI::PositiveNumber);
    gen->add_option("--views", gen_views)->check(CLI::PositiveNumber);
    gen->add_option("--train-frac", gen_train);
    gen->add_option("--val-frac", gen_val);
    gen->add_option("--test-frac", gen_test);
    gen->add_option("--out", gen_out, "output directory")->required();

    // ---- simulate -------------------------------------------------------
    auto* sim = app.add_subcommand("simulate", "Emit the four representations per slice");
    std::string sim_manifest, sim_sparsity = "full", sim_out, sim_fbpconvnet;
    sim->add_option("--manifest", sim_manifest, "manifest.json from gen-data")->required();
    sim->add_option("--sparsity", sim_sparsity, "full | x3 | x9");
    sim->add_option("--fbpconvnet", sim_fbpconvnet, "checkpoint for learned sparse reconstruction");
    sim->add_option("--out", sim_out)->required();

    // ---- train ----------------------------------------------------------
    auto* train = app.add_subcommand("train", "Train a model on one representation");
    std::string tr_config, tr_manifest, tr_rep = "wsino", tr_model = "auto", tr_out, tr_init, tr_precision = "f64";
    int tr_epochs = 15, tr_batch = 16, tr_decay_every = 5, tr_threads = 0;
    double tr_lr = 1e-3, tr_decay = 10.0, tr_width = 1.0;
    std::uint64_t tr_seed = 1;
    train->add_option("--config", tr_config, "JSON config; flags override");
    auto* o_manifest = train->add_option("--manifest", tr_manifest);
    auto* o_rep = train->add_option("--representation", tr_rep, "recon | sino | wrecon | wsino");
    auto* o_model = train->add_option("--model", tr_model, "auto | sinonet | baseline | fbpconvnet");
    auto* o_epochs = train->add_option("--epochs", tr_epochs)->check(CLI::PositiveNumber);
    auto* o_batch = train->add_option("--batch-size", tr_batch)->check(CLI::PositiveNumber);
    auto* o_lr = train->add_option("--lr", tr_lr);
    auto* o_decay = train->add_option("--decay-factor", tr_decay);
    auto* o_decay_every = train->add_option("--decay-every", tr_decay_every)->check(CLI::PositiveNumber);
    auto* o_seed = train->add_option("--seed", tr_seed);
    auto* o_width = train->add_option("--width", tr_width, "sinonet width multiplier");
    auto* o_init = train->add_option("--init-from", tr_init, "transfer-init checkpoint");
    auto* o_precision = train->add_option("--precision", tr_precision, "f64 | f32");
    auto* o_out = train->add_option("--out", tr_out);
    train->add_option("--threads", tr_threads, "OpenMP threads (0 = default)");

    // ---- eval -----------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
    std::string ev_manifest, ev_checkpoint, ev_rep = "wsino", ev_model = "auto", ev_split = "test", ev_out,
                ev_precision = "f64";
    double ev_width = 1.0;
    std::uint64_t ev_bootstrap_seed = 2000;
    eval->add_option("--manifest", ev_manifest)->required();
    eval->add_option("--checkpoint", ev_checkpoint)->required();
    eval->add_option("--representation", ev_rep);
    eval->add_option("--model", ev_model);
    eval->add_option("--split", ev_split, "train | validation | test");
    eval->add_option("--width", ev_width);
    eval->add_option("--bootstrap-seed", ev_bootstrap_seed);
    eval->add_option("--precision", ev_precision);
    eval->add_option("--out", ev_out, "eval report JSON path")->required();

    // ---- report ---------------------------------------------------------
    auto* rep = app.add_subcommand("report", "Join eval reports into the comparison table");
    std::vector<std::string> rep_inputs;
    std::string rep_out;
    rep->add_option("--out", rep_out)->required();
    rep->add_option("reports", rep_inputs, "eval report JSON files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints the message or help text
        return code == 0 ? 0 : kExitUsage;
    }

    if (gen->parsed()) {
        pipe::GenOptions opt;
        opt.task = pipe::gen_task_from_string(gen_task);
        opt.n_cases = gen_cases;
        opt.slices_per_case = gen_spc;
        opt.fractions = {gen_train, gen_val, gen_test};
        opt.seed = gen_seed;
        opt.side = gen_side;
        opt.n_views = gen_views;
        auto manifest = pipe::run_gen_data(opt, gen_out);
        std::printf("wrote %zu slices to %s\n", manifest.entries.size(), gen_out.c_str());
        return 0;
    }
    if (sim->parsed()) {
        pipe::SimulateOptions opt;
        opt.sparsity = pipe::sparsity_from_string(sim_sparsity);
        if (!sim_fbpconvnet.empty()) opt.fbpconvnet = sim_fbpconvnet;
        auto manifest = pipe::run_simulate(pipe::load_manifest(sim_manifest), opt, sim_out);
        std::printf("simulated %zu slices at %s into %s\n", manifest.entries.size(), sim_sparsity.c_str(),
                    sim_out.c_str());
        return 0;
    }
    if (train->parsed()) {
        const auto cfg = load_config(tr_config);
        apply_config(cfg, o_manifest, "manifest", tr_manifest);
        apply_config(cfg, o_rep, "representation", tr_rep);
        apply_config(cfg, o_model, "model", tr_model);
        apply_config(cfg, o_epochs, "epochs", tr_epochs);
        apply_config(cfg, o_batch, "batch_size", tr_batch);
        apply_config(cfg, o_lr, "lr", tr_lr);
        apply_config(cfg, o_decay, "decay_factor", tr_decay);
        apply_config(cfg, o_decay_every, "decay_every", tr_decay_every);
        apply_config(cfg, o_seed, "seed", tr_seed);
        apply_config(cfg, o_width, "width", tr_width);
        apply_config(cfg, o_init, "init_from", tr_init);
        apply_config(cfg, o_precision, "precision", tr_precision);
        apply_config(cfg, o_out, "out", tr_out);
        if (tr_manifest.empty() || tr_out.empty())
            throw CLI::ValidationError("train", "--manifest and --out are required (flag or config)");
#ifdef _OPENMP
        if (tr_threads > 0) omp_set_num_threads(tr_threads);
#endif
        pipe::TrainOptions opt;
        opt.model = tr_model;
        opt.rep = pipe::representation_from_string(tr_rep);
        opt.train.epochs = tr_epochs;
        opt.train.batch_size = tr_batch;
        opt.train.base_lr = tr_lr;
        opt.train.decay_factor = tr_decay;
        opt.train.decay_every_epochs = tr_decay_every;
        opt.train.seed = tr_seed;
        opt.width_multiplier = tr_width;
        if (!tr_init.empty()) opt.init_from = tr_init;
        opt.f64 = tr_precision != "f32";
        auto summary = pipe::run_train(pipe::load_manifest(tr_manifest), opt, tr_out);
        std::printf("trained %zu-parameter model; best val loss %.6g at epoch %d; checkpoint %s\n",
                    summary.parameters, summary.best_val_loss, summary.best_epoch,
                    summary.checkpoint.string().c_str());
        return 0;
    }
    if (eval->parsed()) {
        pipe::EvalOptions opt;
        opt.rep = pipe::representation_from_string(ev_rep);
        opt.split = phantom::split_from_string(ev_split);
        opt.model = ev_model;
        opt.width_multiplier = ev_width;
        opt.bootstrap_seed = ev_bootstrap_seed;
        opt.f64 = ev_precision != "f32";
        auto report = pipe::run_eval(pipe::load_manifest(ev_manifest), ev_checkpoint, opt, ev_out);
        std::printf("%s %s on %s/%s: %s = %.4f [%.4f, %.4f]\n", report.model_id.c_str(),
                    report.representation.c_str(), report.task.c_str(), report.split.c_str(),
                    report.metric.c_str(), report.value, report.ci_lo, report.ci_hi);
        return 0;
    }
    if (rep->parsed()) {
        std::vector<fs::path> paths(rep_inputs.begin(), rep_inputs.end());
        for (const auto& p : paths)
            if (!fs::exists(p)) throw io::FormatError("report: no such file: " + p.string());
        auto summary = pipe::run_report(paths, rep_out);
        std::printf("wrote summary for %zu models and %zu paired tests to %s\n", summary.models.size(),
                    summary.pairs.size(), rep_out.c_str());
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const sino::io::UnsupportedVersion& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const sino::io::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const sino::nn::NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
