#include "prototsnet/evaluation.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <omp.h>

#include "prototsnet/masks.hpp"

namespace prototsnet {

ProtoTSNetModel create_model_for(const ModelConfig& config, const TimeSeriesDataset& data) {
    data.validate();
    ProtoTSNetModel model = create_model(config, data.features(), data.length(), data.num_classes());
    model.class_names = data.class_names;
    return model;
}

TrainedRun train_model(const TimeSeriesDataset& train, const RunConfig& config, const FitOptions& options) {
    TrainedRun run;
    if (config.normalize) {
        Normalization stats = fit_normalization(train);
        const TimeSeriesDataset normed = apply_normalization(train, stats);
        run.model = create_model_for(config.model, normed);
        run.model.normalization = std::move(stats);
        run.history = fit(run.model, normed, config.train, options);
    } else {
        run.model = create_model_for(config.model, train);
        run.history = fit(run.model, train, config.train, options);
    }
    return run;
}

TimeSeriesDataset prepare_input(const ProtoTSNetModel& model, const TimeSeriesDataset& data) {
    if (data.features() != model.features) {
        throw ShapeError("dataset has " + std::to_string(data.features()) + " features, model expects " + std::to_string(model.features));
    }
    return model.normalization ? apply_normalization(data, *model.normalization) : data;
}

double evaluate(const ProtoTSNetModel& model, const TimeSeriesDataset& data) {
    return accuracy(model, prepare_input(model, data));
}

void GridSpec::validate() const {
    if (receptions.empty() || proto_fractions.empty()) throw std::invalid_argument("grid needs at least one r and one L");
    if (seeds.empty()) throw std::invalid_argument("grid needs at least one seed");
    if (folds < 2) throw std::invalid_argument("grid search needs at least 2 folds");
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string run_key(const std::string& dataset, double r, double L, int fold, std::uint64_t seed) {
    return dataset + "|" + fmt(r) + "|" + fmt(L) + "|" + std::to_string(fold) + "|" + std::to_string(seed);
}

std::string cell_invalid_reason(const TimeSeriesDataset& data, const RunConfig& base, double r, double L) {
    RunConfig c = base;
    c.model.reception = r;
    c.model.proto_fraction = L;
    try {
        c.model.validate();
        if (c.model.encoder.grouped) kept_feature_count(data.features(), r);
    } catch (const std::invalid_argument& e) {
        return e.what();
    }
    return "";
}

struct Task {
    std::size_t cell = 0;
    std::uint64_t seed = 0;
    int fold = 0;
    const Fold* split = nullptr;
};

}  // namespace

std::string runs_csv_header() { return "dataset,r,L,fold,seed,val_acc,test_acc,wall_s"; }

std::string format_run(const RunRecord& run) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%d,%llu,%.9g,", run.dataset.c_str(), fmt(run.r).c_str(), fmt(run.L).c_str(),
                  run.fold, static_cast<unsigned long long>(run.seed), run.val_acc);
    std::string line = buf;
    if (run.test_acc) {
        std::snprintf(buf, sizeof buf, "%.9g", *run.test_acc);
        line += buf;
    }
    std::snprintf(buf, sizeof buf, ",%.3f", run.wall_s);
    return line + buf;
}

std::vector<RunRecord> load_runs_csv(const std::string& path) {
    std::vector<RunRecord> runs;
    std::ifstream f(path);
    if (!f) return runs;
    std::string line;
    bool header = true;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            if (line != runs_csv_header()) throw std::runtime_error("'" + path + "' is not a runs CSV");
            header = false;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.emplace_back();
        if (cells.size() != 8) throw std::runtime_error("malformed row in '" + path + "': " + line);
        RunRecord r;
        try {
            r.dataset = cells[0];
            r.r = std::stod(cells[1]);
            r.L = std::stod(cells[2]);
            r.fold = std::stoi(cells[3]);
            r.seed = std::stoull(cells[4]);
            r.val_acc = std::stod(cells[5]);
            if (!cells[6].empty()) r.test_acc = std::stod(cells[6]);
            r.wall_s = std::stod(cells[7]);
        } catch (const std::exception&) {
            throw std::runtime_error("malformed row in '" + path + "': " + line);
        }
        runs.push_back(r);
    }
    return runs;
}

void append_run(const std::string& path, const RunRecord& run) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream f(path, std::ios::app);
    if (!f) throw std::runtime_error("cannot append to '" + path + "'");
    if (fresh) f << runs_csv_header() << '\n';
    f << format_run(run) << '\n';
}

GridResult grid_search_cv(const TimeSeriesDataset& data, std::span<const int> pool, const GridSpec& grid,
                          const RunConfig& base, const GridOptions& options) {
    grid.validate();
    data.validate();
    if (pool.empty()) throw std::invalid_argument("grid search needs a non-empty training pool");
    for (int i : pool) {
        if (i < 0 || i >= data.size()) throw std::out_of_range("pool index " + std::to_string(i) + " outside the dataset");
    }
    std::vector<int> pool_labels;
    for (int i : pool) pool_labels.push_back(data.labels[static_cast<std::size_t>(i)]);

    std::map<std::uint64_t, std::vector<Fold>> folds_by_seed;
    for (std::uint64_t seed : grid.seeds) {
        std::vector<Fold> folds = kfold_splits(pool_labels, grid.folds, seed);
        for (Fold& f : folds) {
            for (int& i : f.train) i = pool[static_cast<std::size_t>(i)];
            for (int& i : f.val) i = pool[static_cast<std::size_t>(i)];
        }
        folds_by_seed[seed] = std::move(folds);
    }

    GridResult result;
    for (double r : grid.receptions) {
        for (double L : grid.proto_fractions) {
            GridCell cell;
            cell.r = r;
            cell.L = L;
            cell.reason = cell_invalid_reason(data, base, r, L);
            cell.valid = cell.reason.empty();
            result.cells.push_back(cell);
        }
    }

    std::map<std::string, double> done;
    if (!options.runs_csv.empty()) {
        for (const RunRecord& run : load_runs_csv(options.runs_csv)) {
            done[run_key(run.dataset, run.r, run.L, run.fold, run.seed)] = run.val_acc;
        }
    }

    std::vector<Task> tasks;
    for (std::size_t c = 0; c < result.cells.size(); ++c) {
        if (!result.cells[c].valid) continue;
        for (std::uint64_t seed : grid.seeds) {
            const auto& folds = folds_by_seed[seed];
            for (int f = 0; f < static_cast<int>(folds.size()); ++f) tasks.push_back({c, seed, f, &folds[static_cast<std::size_t>(f)]});
        }
    }
    std::vector<double> acc(tasks.size(), 0.0);
    std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic)
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const Task& task = tasks[t];
        const GridCell& cell = result.cells[task.cell];
        const std::string key = run_key(options.dataset_name, cell.r, cell.L, task.fold, task.seed);
        try {
            auto hit = done.find(key);
            if (hit != done.end()) {
                acc[t] = hit->second;
                continue;
            }
            if (options.access_audit) {
#pragma omp critical(prototsnet_audit)
                {
                    options.access_audit(task.split->train);
                    options.access_audit(task.split->val);
                }
            }
            const auto start = std::chrono::steady_clock::now();
            RunConfig cfg = base;
            cfg.model.reception = cell.r;
            cfg.model.proto_fraction = cell.L;
            const std::uint64_t stream = derive_seed(derive_seed(task.seed, task.cell), static_cast<std::uint64_t>(task.fold));
            cfg.model.seed = derive_seed(stream, 0);
            cfg.train.seed = derive_seed(stream, 1);
            TrainedRun run = train_model(data.subset(task.split->train), cfg);
            acc[t] = evaluate(run.model, data.subset(task.split->val));
            RunRecord rec;
            rec.dataset = options.dataset_name;
            rec.r = cell.r;
            rec.L = cell.L;
            rec.fold = task.fold;
            rec.seed = task.seed;
            rec.val_acc = acc[t];
            rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            if (!options.runs_csv.empty()) {
#pragma omp critical(prototsnet_runs_csv)
                append_run(options.runs_csv, rec);
            }
        } catch (...) {
#pragma omp critical(prototsnet_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    for (std::size_t t = 0; t < tasks.size(); ++t) result.cells[tasks[t].cell].fold_acc.push_back(acc[t]);
    bool have_best = false;
    for (GridCell& cell : result.cells) {
        if (!cell.valid) continue;
        double s = 0.0;
        for (double a : cell.fold_acc) s += a;
        cell.mean_val_acc = s / static_cast<double>(cell.fold_acc.size());
        const bool better = !have_best || cell.mean_val_acc > result.best.mean_val_acc ||
                            (cell.mean_val_acc == result.best.mean_val_acc &&
                             (cell.r < result.best.r || (cell.r == result.best.r && cell.L < result.best.L)));
        if (better) {
            result.best = cell;
            have_best = true;
        }
    }
    if (!have_best) throw std::invalid_argument("no grid cell is valid for this dataset");
    return result;
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::GroupedPretrained: return "GE/P";
        case Variant::GroupedNoPretrain: return "GE/NP";
        case Variant::RegularPretrained: return "RE/P";
        case Variant::RegularNoPretrain: return "RE/NP";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    for (Variant v : all_variants()) {
        if (variant_name(v) == name) return v;
    }
    throw std::invalid_argument("unknown variant '" + name + "' (expected GE/P, GE/NP, RE/P or RE/NP)");
}

std::vector<Variant> all_variants() {
    return {Variant::GroupedPretrained, Variant::GroupedNoPretrain, Variant::RegularPretrained, Variant::RegularNoPretrain};
}

RunConfig variant_config(const RunConfig& base, Variant v) {
    RunConfig c = base;
    c.model.encoder.grouped = v == Variant::GroupedPretrained || v == Variant::GroupedNoPretrain;
    if (v == Variant::GroupedNoPretrain || v == Variant::RegularNoPretrain) c.train.pretrain_epochs = 0;
    return c;
}

AblationResult run_ablation(const TimeSeriesDataset& train, const TimeSeriesDataset& test, Variant variant,
                            const RunConfig& base) {
    AblationResult r;
    r.variant = variant;
    r.run = train_model(train, variant_config(base, variant));
    r.test_acc = evaluate(r.run.model, test);
    return r;
}

}  // namespace prototsnet
