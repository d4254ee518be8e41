#include "prototsnet/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "prototsnet/checkpoint.hpp"
#include "prototsnet/config.hpp"
#include "prototsnet/evaluation.hpp"
#include "prototsnet/explanation.hpp"
#include "prototsnet/stats.hpp"
#include "prototsnet/svg.hpp"

namespace prototsnet {

namespace {

std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

RunConfig config_or_default(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

TimeSeriesDataset load_dataset(const std::string& path) {
    TimeSeriesDataset d = parse_ts(path);
    if (d.meta.padded) std::clog << "note: '" << path << "' has unequal lengths; right-padded with zeros\n";
    if (d.meta.missing_filled) std::clog << "note: '" << path << "' has missing values; replaced by zeros\n";
    return d;
}

FitOptions progress_options(std::ostream& err, bool quiet) {
    FitOptions o;
    if (!quiet) {
        o.on_epoch = [&err](const EpochRecord& r) {
            err << stage_name(r.stage) << " epoch " << r.epoch << " loss " << fixed(r.loss.total);
            if (r.train_acc) err << " acc " << fixed(*r.train_acc, 4);
            err << '\n';
        };
    }
    return o;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"ProtoTSNet: interpretable multivariate time-series classification with prototypes", "prototsnet"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    // synth
    auto* synth = app.add_subcommand("synth", "Write the synthetic saw/rectangle dataset as a .ts file");
    std::string synth_out, synth_csv;
    SyntheticSpec spec;
    synth->add_option("--out", synth_out, "Output .ts path")->required();
    synth->add_option("--csv", synth_csv, "Also write a long-format CSV");
    synth->add_option("--n-per-class", spec.n_per_class, "Series per class")->check(CLI::PositiveNumber);
    synth->add_option("--noise", spec.noise_std, "White-noise standard deviation")->check(CLI::NonNegativeNumber);
    synth->add_option("--seed", spec.seed, "Generator seed");

    // pretrain / train
    std::string dataset, config_path, model_out, history_out, init_model, ckpt_dir;
    bool quiet = false;
    auto* pre = app.add_subcommand("pretrain", "Run only the autoencoder pretraining phase");
    pre->add_option("--dataset", dataset, "Training .ts file")->required()->check(CLI::ExistingFile);
    pre->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    pre->add_option("--out", model_out, "Output checkpoint")->required();
    pre->add_option("--history", history_out, "Training history CSV");
    pre->add_flag("--quiet", quiet, "No per-epoch progress");

    auto* train = app.add_subcommand("train", "Train a model (pretraining, warm, joint/projection/last cycles)");
    train->add_option("--dataset", dataset, "Training .ts file")->required()->check(CLI::ExistingFile);
    train->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    train->add_option("--out", model_out, "Output checkpoint")->required();
    train->add_option("--history", history_out, "Training history CSV");
    train->add_option("--init", init_model, "Start from a pretrained checkpoint and skip pretraining")->check(CLI::ExistingFile);
    train->add_option("--checkpoint-dir", ckpt_dir, "Write a checkpoint at every projection");
    train->add_flag("--quiet", quiet, "No per-epoch progress");

    // eval
    std::string model_path;
    auto* eval = app.add_subcommand("eval", "Accuracy of a trained model on a labelled .ts file");
    eval->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
    eval->add_option("--dataset", dataset, "Evaluation .ts file")->required()->check(CLI::ExistingFile);

    // explain
    std::string train_path, report_dir;
    std::vector<int> instances;
    int top_k = 3, count = 5;
    auto* explain = app.add_subcommand("explain", "Export prototype cards and instance explanations (JSON + SVG)");
    explain->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
    explain->add_option("--train", train_path, "Training .ts file the model was projected on")->required()->check(CLI::ExistingFile);
    explain->add_option("--dataset", dataset, "Instances to explain (.ts)")->required()->check(CLI::ExistingFile);
    explain->add_option("--out", report_dir, "Report directory")->required();
    explain->add_option("--instances", instances, "Instance indices (comma separated)")->delimiter(',');
    explain->add_option("--count", count, "Explain the first N instances when --instances is absent")->check(CLI::PositiveNumber);
    explain->add_option("--top-k", top_k, "Prototypes listed per instance")->check(CLI::PositiveNumber);

    // importance
    std::string svg_out;
    auto* imp = app.add_subcommand("importance", "Print global feature importance");
    imp->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
    imp->add_option("--svg", svg_out, "Also write a bar chart");

    // gridsearch
    std::string test_path, runs_path;
    GridSpec grid;
    auto* gs = app.add_subcommand("gridsearch", "Cross-validated grid search over reception r and prototype length L");
    gs->add_option("--dataset", dataset, "Training .ts file")->required()->check(CLI::ExistingFile);
    gs->add_option("--test", test_path, "Held-out .ts file; the best cell is refit and scored on it")->check(CLI::ExistingFile);
    gs->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    gs->add_option("--receptions", grid.receptions, "Reception values")->delimiter(',');
    gs->add_option("--fractions", grid.proto_fractions, "Prototype length fractions")->delimiter(',');
    gs->add_option("--folds", grid.folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
    gs->add_option("--seeds", grid.seeds, "Seeds")->delimiter(',');
    gs->add_option("--runs", runs_path, "Append-only results CSV");

    // ablation
    std::vector<std::string> variants{"GE/P", "GE/NP", "RE/P", "RE/NP"};
    std::string results_out;
    auto* abl = app.add_subcommand("ablation", "Train and score the four encoder/pretraining variants");
    abl->add_option("--train", train_path, "Training .ts file")->required()->check(CLI::ExistingFile);
    abl->add_option("--test", test_path, "Test .ts file")->required()->check(CLI::ExistingFile);
    abl->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    abl->add_option("--variants", variants, "Variants to run")->delimiter(',')->check(CLI::IsMember({"GE/P", "GE/NP", "RE/P", "RE/NP"}));
    abl->add_option("--out", results_out, "Write a one-row results CSV (stats input format)");

    // stats
    std::string table_path, ties = "average";
    double alpha = 0.05;
    auto* st = app.add_subcommand("stats", "Average ranks, wins/ties and Friedman/Nemenyi critical difference");
    st->add_option("--table", table_path, "CSV: dataset column then one column per method; empty cell = missing")
        ->required()
        ->check(CLI::ExistingFile);
    st->add_option("--alpha", alpha, "Significance level (0.05 or 0.10)");
    st->add_option("--ties", ties, "Tie policy")->check(CLI::IsMember({"average", "min"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const CLI::App* failing = &app;
        for (const CLI::App* sub : app.get_subcommands()) failing = sub;
        err << failing->help();
        return 2;
    }

    try {
        if (synth->parsed()) {
            const TimeSeriesDataset d = generate_synthetic(spec);
            write_ts(d, synth_out);
            if (!synth_csv.empty()) write_dataset_csv(d, synth_csv);
            out << "wrote " << d.size() << " series to " << synth_out << '\n';
        } else if (pre->parsed()) {
            const RunConfig cfg = config_or_default(config_path);
            TimeSeriesDataset d = load_dataset(dataset);
            std::optional<Normalization> stats;
            if (cfg.normalize) {
                stats = fit_normalization(d);
                d = apply_normalization(d, *stats);
            }
            ProtoTSNetModel model = create_model_for(cfg.model, d);
            model.normalization = stats;
            TrainHistory h = pretrain(model, d, cfg.train);
            save_checkpoint(model, model_out);
            if (!history_out.empty()) write_history_csv(h, history_out);
            out << "pretrained " << h.epochs.size() << " epochs, saved " << model_out << '\n';
        } else if (train->parsed()) {
            const RunConfig cfg = config_or_default(config_path);
            const TimeSeriesDataset d = load_dataset(dataset);
            FitOptions opts = progress_options(err, quiet);
            opts.checkpoint_dir = ckpt_dir;
            TrainedRun run;
            if (!init_model.empty()) {
                run.model = load_checkpoint(init_model);
                opts.skip_pretrain = true;
                run.history = fit(run.model, prepare_input(run.model, d), cfg.train, opts);
            } else {
                run = train_model(d, cfg, opts);
            }
            save_checkpoint(run.model, model_out);
            if (!history_out.empty()) write_history_csv(run.history, history_out);
            out << "train accuracy " << fixed(evaluate(run.model, d)) << ", saved " << model_out << '\n';
        } else if (eval->parsed()) {
            const ProtoTSNetModel model = load_checkpoint(model_path);
            out << "accuracy " << fixed(evaluate(model, load_dataset(dataset))) << '\n';
        } else if (explain->parsed()) {
            const ProtoTSNetModel model = load_checkpoint(model_path);
            const TimeSeriesDataset tr = prepare_input(model, load_dataset(train_path));
            const TimeSeriesDataset ds = prepare_input(model, load_dataset(dataset));
            if (instances.empty()) {
                instances.resize(static_cast<std::size_t>(std::min(count, ds.size())));
                std::iota(instances.begin(), instances.end(), 0);
            }
            std::vector<ClassificationExplanation> ex;
            for (int i : instances) {
                if (i < 0 || i >= ds.size()) throw std::out_of_range("instance " + std::to_string(i) + " outside the dataset");
                ex.push_back(explain_instance(model, ds.series(i), i, top_k, ds.labels[static_cast<std::size_t>(i)]));
            }
            export_report(model, build_prototype_cards(model, tr), ex, feature_importance(model), report_dir);
            out << "wrote report for " << ex.size() << " instances to " << report_dir << '\n';
        } else if (imp->parsed()) {
            const ProtoTSNetModel model = load_checkpoint(model_path);
            const auto importance = feature_importance(model);
            out << "feature,importance\n";
            for (std::size_t m = 0; m < importance.size(); ++m) out << m << ',' << fixed(importance[m], 9) << '\n';
            if (!svg_out.empty()) {
                std::ofstream f(svg_out);
                if (!f) throw std::runtime_error("cannot write '" + svg_out + "'");
                f << importance_svg(importance);
            }
        } else if (gs->parsed()) {
            const RunConfig cfg = config_or_default(config_path);
            const TimeSeriesDataset d = load_dataset(dataset);
            std::vector<int> pool(static_cast<std::size_t>(d.size()));
            std::iota(pool.begin(), pool.end(), 0);
            GridOptions opts;
            opts.dataset_name = d.name;
            opts.runs_csv = runs_path;
            const GridResult res = grid_search_cv(d, pool, grid, cfg, opts);
            out << "r,L,mean_val_acc,status\n";
            for (const auto& c : res.cells) {
                out << c.r << ',' << c.L << ',' << (c.valid ? fixed(c.mean_val_acc) : "") << ','
                    << (c.valid ? "ok" : "invalid: " + c.reason) << '\n';
            }
            out << "best r=" << res.best.r << " L=" << res.best.L << " mean_val_acc=" << fixed(res.best.mean_val_acc) << '\n';
            if (!test_path.empty()) {
                RunConfig best = cfg;
                best.model.reception = res.best.r;
                best.model.proto_fraction = res.best.L;
                const TrainedRun run = train_model(d, best);
                RunRecord rec;
                rec.dataset = d.name;
                rec.r = res.best.r;
                rec.L = res.best.L;
                rec.fold = -1;
                rec.seed = best.train.seed;
                rec.val_acc = res.best.mean_val_acc;
                rec.test_acc = evaluate(run.model, load_dataset(test_path));
                if (!runs_path.empty()) append_run(runs_path, rec);
                out << "test accuracy " << fixed(*rec.test_acc) << '\n';
            }
        } else if (abl->parsed()) {
            const RunConfig cfg = config_or_default(config_path);
            const TimeSeriesDataset tr = load_dataset(train_path);
            const TimeSeriesDataset te = load_dataset(test_path);
            std::ostringstream row;
            row << tr.name;
            out << "variant,test_acc\n";
            for (const auto& name : variants) {
                const AblationResult r = run_ablation(tr, te, variant_from_name(name), cfg);
                out << name << ',' << fixed(r.test_acc) << '\n';
                row << ',' << fixed(100.0 * r.test_acc, 2);
            }
            if (!results_out.empty()) {
                std::ofstream f(results_out);
                if (!f) throw std::runtime_error("cannot write '" + results_out + "'");
                f << "dataset";
                for (const auto& name : variants) f << ',' << name;
                f << '\n' << row.str() << '\n';
            }
        } else if (st->parsed()) {
            const RankTable table = average_ranks(load_results_csv(table_path), ties == "min" ? TiePolicy::Min : TiePolicy::Average);
            if (table.methods.size() >= 3 && table.datasets.size() >= 2) {
                const FriedmanResult f = friedman_nemenyi(table, alpha);
                out << format_rank_report(table, &f);
            } else {
                out << format_rank_report(table);
            }
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

int cli_dispatch(int argc, const char* const* argv) { return cli_dispatch(argc, argv, std::cout, std::cerr); }

}  // namespace prototsnet
