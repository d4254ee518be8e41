#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prototsnet/config.hpp"
#include "prototsnet/dataset.hpp"
#include "prototsnet/model.hpp"
#include "prototsnet/trainer.hpp"

namespace prototsnet {

// Model sized for `data`, with its class names.
ProtoTSNetModel create_model_for(const ModelConfig& config, const TimeSeriesDataset& data);

struct TrainedRun {
    ProtoTSNetModel model;
    TrainHistory history;
};

// Optional normalization fitted on `train` and stored in the model.
TrainedRun train_model(const TimeSeriesDataset& train, const RunConfig& config, const FitOptions& options = {});

// Applies the model's stored normalization, if any.
TimeSeriesDataset prepare_input(const ProtoTSNetModel& model, const TimeSeriesDataset& data);
double evaluate(const ProtoTSNetModel& model, const TimeSeriesDataset& data);

struct GridSpec {
    std::vector<double> receptions{0.25, 0.5, 0.75, 0.9};
    std::vector<double> proto_fractions{0.01, 0.1, 0.25, 0.5, 1.0};
    int folds = 5;
    std::vector<std::uint64_t> seeds{0};

    void validate() const;
};

struct RunRecord {
    std::string dataset;
    double r = 0.0;
    double L = 0.0;
    int fold = 0;  // -1 marks a final refit evaluated on the test split
    std::uint64_t seed = 0;
    double val_acc = 0.0;
    std::optional<double> test_acc;
    double wall_s = 0.0;
};

std::string runs_csv_header();
std::string format_run(const RunRecord& run);
std::vector<RunRecord> load_runs_csv(const std::string& path);
void append_run(const std::string& path, const RunRecord& run);

struct GridCell {
    double r = 0.0;
    double L = 0.0;
    bool valid = true;
    std::string reason;  // why an invalid cell was skipped
    double mean_val_acc = 0.0;
    std::vector<double> fold_acc;  // per (seed, fold)
};

struct GridResult {
    std::vector<GridCell> cells;  // receptions-major, in grid order
    GridCell best;
};

struct GridOptions {
    std::string dataset_name = "dataset";
    std::string runs_csv;  // appended to; rows already present are reused
    // Receives the row indices of `data` each training or validation step reads.
    std::function<void(std::span<const int>)> access_audit;
};

// Cross-validates every (r, L) cell over the rows `pool` of `data`. Cells the
// data cannot support (floor(r * d) == 0) are marked invalid. The best valid
// cell maximizes mean validation accuracy, ties going to smaller r, then L.
GridResult grid_search_cv(const TimeSeriesDataset& data, std::span<const int> pool, const GridSpec& grid,
                          const RunConfig& base, const GridOptions& options = {});

enum class Variant { GroupedPretrained, GroupedNoPretrain, RegularPretrained, RegularNoPretrain };
std::string variant_name(Variant v);  // "GE/P", ...
Variant variant_from_name(const std::string& name);
std::vector<Variant> all_variants();

// Adjusts a configuration to the variant: RE drops grouping (one group
// convolution on the raw input, all-ones masks), NP sets E_P = 0.
RunConfig variant_config(const RunConfig& base, Variant v);

struct AblationResult {
    Variant variant = Variant::GroupedPretrained;
    double test_acc = 0.0;
    TrainedRun run;
};

AblationResult run_ablation(const TimeSeriesDataset& train, const TimeSeriesDataset& test, Variant variant,
                            const RunConfig& base);

}  // namespace prototsnet
