#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "prototsnet/dataset.hpp"
#include "prototsnet/model.hpp"

namespace prototsnet {

struct TrainConfig {
    int pretrain_epochs = 50;  // E_P
    int warm_epochs = 10;      // E_W
    int joint_epochs = 80;     // I_P, per cycle
    int last_epochs = 7;       // E_L, per cycle
    int cycles = 4;

    double lambda_clst = 0.8;
    double lambda_sep = 0.08;
    double lambda_conv = 1e-3;
    double lambda_last = 1e-4;

    double pretrain_lr = 1e-2;
    double warm_lr = 1e-2;
    double base_lr = 1e-2;  // joint-stage peak
    double last_lr = 1e-2;
    double lr_floor = 0.1;
    int lr_cycle_len = 80;  // joint epochs per learning-rate cycle
    double lr_decay = 0.5;
    double momentum = 0.9;

    int batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const;
    int main_epochs() const { return warm_epochs + cycles * (joint_epochs + last_epochs); }
};

enum class Stage { Pretrain, Warm, Joint, Last };
std::string stage_name(Stage s);

struct LossBreakdown {
    double total = 0.0;
    double ce = 0.0;
    double clst = 0.0;
    double sep = 0.0;
    double l1_conv = 0.0;
    double l1_last = 0.0;
};

// Combines the parts the way the given stage's objective does.
double compose_total(Stage stage, const LossBreakdown& parts, const TrainConfig& config);

// ---- standalone loss terms (no graph) ----

// Min over own-class prototypes of min over offsets of squared distance,
// averaged over the batch. z is [B, l, T].
double loss_clst(const Tensor& z, std::span<const int> labels, const ProtoTSNetModel& model);
// Negated average of the min over other-class prototypes.
double loss_sep(const Tensor& z, std::span<const int> labels, const ProtoTSNetModel& model);
double loss_l1_conv(const ProtoTSNetModel& model);
double loss_l1_last(const ProtoTSNetModel& model);

// Same terms on a graph, starting from per-prototype min distances [B, m].
Var loss_clst_graph(Graph& g, Var min_dist, std::span<const int> labels, const ProtoTSNetModel& model);
Var loss_sep_graph(Graph& g, Var min_dist, std::span<const int> labels, const ProtoTSNetModel& model);

struct StageLoss {
    Var total;
    LossBreakdown parts;
};

// Builds the stage objective for a batch on `g` using already-bound vars.
StageLoss stage_loss(Graph& g, Stage stage, const ProtoTSNetModel& model, const ModelVars& vars,
                     const ForwardVars& fwd, std::span<const int> labels, const TrainConfig& config);

Trainables stage_trainables(Stage stage);

// Replaces each prototype by its nearest same-class latent patch over the
// training set. Ties resolve to the smallest (series, offset).
void project_prototypes(ProtoTSNetModel& model, const Tensor& train_latents, std::span<const int> labels);

// Triangular cycle between base_lr*lr_floor and a peak of base_lr*lr_decay^cycle,
// never below the floor.
double lr_schedule(int step, const TrainConfig& config);

struct EpochRecord {
    std::string phase;  // "pretrain" or "main"
    Stage stage = Stage::Pretrain;
    int epoch = 0;      // global epoch counter
    LossBreakdown loss;
    std::optional<double> train_acc;
    double lr = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::vector<EpochRecord> of_phase(const std::string& phase) const;
};

std::string history_csv(const TrainHistory& history);
void write_history_csv(const TrainHistory& history, const std::string& path);

struct FitOptions {
    std::string checkpoint_dir;  // written at every projection boundary when set
    bool skip_pretrain = false;
    std::function<void(const EpochRecord&)> on_epoch;
};

TrainHistory fit(ProtoTSNetModel& model, const TimeSeriesDataset& train, const TrainConfig& config,
                 const FitOptions& options = {});

// Autoencoder reconstruction epochs only; the decoder is discarded afterwards.
TrainHistory pretrain(ProtoTSNetModel& model, const TimeSeriesDataset& train, const TrainConfig& config);

double accuracy(const ProtoTSNetModel& model, const TimeSeriesDataset& data);

}  // namespace prototsnet
