#include "prototsnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "prototsnet/checkpoint.hpp"
#include "prototsnet/kernels.hpp"

namespace prototsnet {

void TrainConfig::validate() const {
    if (pretrain_epochs < 0 || warm_epochs < 0 || joint_epochs < 0 || last_epochs < 0 || cycles < 0) {
        throw std::invalid_argument("epoch counts must be non-negative");
    }
    if (lambda_clst < 0 || lambda_sep < 0 || lambda_conv < 0 || lambda_last < 0) {
        throw std::invalid_argument("loss weights must be non-negative");
    }
    if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
    if (lr_cycle_len < 1) throw std::invalid_argument("lr_cycle_len must be at least 1");
    if (!(lr_floor > 0.0) || lr_floor > 1.0) throw std::invalid_argument("lr_floor must lie in (0, 1]");
    if (!(lr_decay > 0.0)) throw std::invalid_argument("lr_decay must be positive");
    for (double lr : {pretrain_lr, warm_lr, base_lr, last_lr}) {
        if (!(lr > 0.0)) throw std::invalid_argument("learning rates must be positive");
    }
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must lie in [0, 1)");
}

std::string stage_name(Stage s) {
    switch (s) {
        case Stage::Pretrain: return "pretrain";
        case Stage::Warm: return "warm";
        case Stage::Joint: return "joint";
        case Stage::Last: return "last";
    }
    return "?";
}

double compose_total(Stage stage, const LossBreakdown& p, const TrainConfig& c) {
    switch (stage) {
        case Stage::Pretrain: return p.total;
        case Stage::Warm:
        case Stage::Joint: return p.ce + c.lambda_clst * p.clst + c.lambda_sep * p.sep + c.lambda_conv * p.l1_conv;
        case Stage::Last: return p.ce + c.lambda_last * p.l1_last;
    }
    return p.total;
}

Trainables stage_trainables(Stage stage) {
    Trainables t;
    switch (stage) {
        case Stage::Pretrain:
            t.encoder = t.mixing = true;
            break;
        case Stage::Warm:
            t.prototypes = t.mixing = true;
            break;
        case Stage::Joint:
            t.encoder = t.mixing = t.prototypes = true;
            break;
        case Stage::Last:
            t.last_layer = true;
            break;
    }
    return t;
}

namespace {

// rows[b][j] == 1 when prototype j belongs (own == true) or does not belong
// to the class of sample b
std::vector<std::vector<char>> class_mask(std::span<const int> labels, const ProtoTSNetModel& model, bool own) {
    std::vector<std::vector<char>> mask(labels.size(), std::vector<char>(static_cast<std::size_t>(model.num_prototypes()), 0));
    for (std::size_t b = 0; b < labels.size(); ++b) {
        bool any = false;
        for (int j = 0; j < model.num_prototypes(); ++j) {
            const bool same = model.proto_classes[static_cast<std::size_t>(j)] == labels[b];
            if (same == own) {
                mask[b][static_cast<std::size_t>(j)] = 1;
                any = true;
            }
        }
        if (!any) {
            throw std::invalid_argument(own ? "class " + std::to_string(labels[b]) + " has no prototypes"
                                            : std::string("separation needs prototypes of at least two classes"));
        }
    }
    return mask;
}

Tensor min_distances(const Tensor& z, const ProtoTSNetModel& model) {
    if (z.rank() != 3 || z.dim(1) != model.latent_channels()) throw ShapeError("latent batch shape mismatch");
    kernels::SlideDims d;
    d.batch = z.dim(0);
    d.channels = z.dim(1);
    d.length = z.dim(2);
    d.protos = model.num_prototypes();
    d.proto_len = model.proto_len;
    if (d.proto_len > d.length) throw ShapeError("prototype longer than series");
    Tensor dist(Shape{d.batch, d.protos, d.windows()});
    kernels::omp::sliding_sq_l2_forward(d, z.data(), model.prototypes.data(), dist.data());
    Tensor out(Shape{d.batch, d.protos});
    for (int b = 0; b < d.batch; ++b) {
        for (int j = 0; j < d.protos; ++j) {
            double v = dist.at(b, j, 0);
            for (int s = 1; s < d.windows(); ++s) v = std::min(v, dist.at(b, j, s));
            out.at(b, j) = v;
        }
    }
    return out;
}

double masked_mean_min(const Tensor& mind, const std::vector<std::vector<char>>& mask) {
    double acc = 0.0;
    for (int b = 0; b < mind.dim(0); ++b) {
        double v = std::numeric_limits<double>::infinity();
        for (int j = 0; j < mind.dim(1); ++j) {
            if (mask[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)]) v = std::min(v, mind.at(b, j));
        }
        acc += v;
    }
    return acc / mind.dim(0);
}

}  // namespace

double loss_clst(const Tensor& z, std::span<const int> labels, const ProtoTSNetModel& model) {
    if (labels.size() != static_cast<std::size_t>(z.dim(0))) throw ShapeError("label count mismatch");
    return masked_mean_min(min_distances(z, model), class_mask(labels, model, true));
}

double loss_sep(const Tensor& z, std::span<const int> labels, const ProtoTSNetModel& model) {
    if (labels.size() != static_cast<std::size_t>(z.dim(0))) throw ShapeError("label count mismatch");
    return -masked_mean_min(min_distances(z, model), class_mask(labels, model, false));
}

double loss_l1_conv(const ProtoTSNetModel& model) {
    double acc = 0.0;
    for (double w : model.mix_weight.data()) acc += std::abs(w);
    return acc;
}

double loss_l1_last(const ProtoTSNetModel& model) {
    double acc = 0.0;
    for (double w : model.last_weight.data()) acc += w < 0.0 ? -w : 0.0;
    return acc;
}

Var loss_clst_graph(Graph& g, Var min_dist, std::span<const int> labels, const ProtoTSNetModel& model) {
    return ops::mean(g, ops::masked_row_min(g, min_dist, class_mask(labels, model, true)));
}

Var loss_sep_graph(Graph& g, Var min_dist, std::span<const int> labels, const ProtoTSNetModel& model) {
    Var m = ops::mean(g, ops::masked_row_min(g, min_dist, class_mask(labels, model, false)));
    return ops::weighted_sum(g, {{-1.0, m}});
}

StageLoss stage_loss(Graph& g, Stage stage, const ProtoTSNetModel& model, const ModelVars& vars,
                     const ForwardVars& fwd, std::span<const int> labels, const TrainConfig& config) {
    if (stage == Stage::Pretrain) throw std::invalid_argument("stage_loss: pretraining uses the reconstruction loss");
    StageLoss out;
    Var ce = ops::softmax_cross_entropy(g, fwd.logits, labels);
    Var clst = loss_clst_graph(g, fwd.min_dist, labels, model);
    Var sep = loss_sep_graph(g, fwd.min_dist, labels, model);
    Var l1c = ops::abs_sum(g, vars.mix_weight);
    Var l1l = ops::negative_part_sum(g, vars.last_weight);
    out.parts.ce = g.value(ce).item();
    out.parts.clst = g.value(clst).item();
    out.parts.sep = g.value(sep).item();
    out.parts.l1_conv = g.value(l1c).item();
    out.parts.l1_last = g.value(l1l).item();
    if (stage == Stage::Last) {
        out.total = ops::weighted_sum(g, {{1.0, ce}, {config.lambda_last, l1l}});
    } else {
        out.total = ops::weighted_sum(
            g, {{1.0, ce}, {config.lambda_clst, clst}, {config.lambda_sep, sep}, {config.lambda_conv, l1c}});
    }
    out.parts.total = g.value(out.total).item();
    return out;
}

void project_prototypes(ProtoTSNetModel& model, const Tensor& train_latents, std::span<const int> labels) {
    if (train_latents.rank() != 3 || train_latents.dim(0) == 0) throw std::invalid_argument("projection needs training latents");
    if (labels.size() != static_cast<std::size_t>(train_latents.dim(0))) throw ShapeError("label count mismatch");
    const int n = train_latents.dim(0), l = train_latents.dim(1), len = train_latents.dim(2);
    const int plen = model.proto_len;
    if (l != model.latent_channels() || plen > len) throw ShapeError("latent shape does not fit the prototypes");

    kernels::SlideDims d;
    d.batch = n;
    d.channels = l;
    d.length = len;
    d.protos = model.num_prototypes();
    d.proto_len = plen;
    Tensor dist(Shape{n, d.protos, d.windows()});
    kernels::omp::sliding_sq_l2_forward(d, train_latents.data(), model.prototypes.data(), dist.data());

    std::vector<ProtoSource> sources(static_cast<std::size_t>(d.protos));
    for (int j = 0; j < d.protos; ++j) {
        const int cls = model.proto_classes[static_cast<std::size_t>(j)];
        double best = std::numeric_limits<double>::infinity();
        ProtoSource src{-1, -1};
        for (int i = 0; i < n; ++i) {
            if (labels[static_cast<std::size_t>(i)] != cls) continue;
            for (int s = 0; s < d.windows(); ++s) {
                if (dist.at(i, j, s) < best) {
                    best = dist.at(i, j, s);
                    src = {i, s};
                }
            }
        }
        if (src.series < 0) throw std::invalid_argument("no training series of class " + std::to_string(cls) + " to project onto");
        for (int c = 0; c < l; ++c) {
            for (int tau = 0; tau < plen; ++tau) model.prototypes.at(j, c, tau) = train_latents.at(src.series, c, src.offset + tau);
        }
        sources[static_cast<std::size_t>(j)] = src;
    }
    model.proto_sources = std::move(sources);
}

double lr_schedule(int step, const TrainConfig& config) {
    if (step < 0) throw std::invalid_argument("lr_schedule: negative step");
    const int cycle = step / config.lr_cycle_len;
    const double pos = static_cast<double>(step % config.lr_cycle_len) / config.lr_cycle_len;
    const double tri = 1.0 - std::abs(2.0 * pos - 1.0);
    const double floor = config.base_lr * config.lr_floor;
    const double peak = std::max(floor, config.base_lr * std::pow(config.lr_decay, cycle));
    return floor + (peak - floor) * tri;
}

std::vector<EpochRecord> TrainHistory::of_phase(const std::string& phase) const {
    std::vector<EpochRecord> out;
    for (const auto& e : epochs) {
        if (e.phase == phase) out.push_back(e);
    }
    return out;
}

std::string history_csv(const TrainHistory& history) {
    std::ostringstream os;
    os << "phase,stage,epoch,total,ce,clst,sep,l1_conv,l1_last,train_acc,lr\n";
    char buf[512];
    for (const auto& e : history.epochs) {
        const LossBreakdown& l = e.loss;
        std::snprintf(buf, sizeof buf, "%s,%s,%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,", e.phase.c_str(),
                      stage_name(e.stage).c_str(), e.epoch, l.total, l.ce, l.clst, l.sep, l.l1_conv, l.l1_last);
        os << buf;
        if (e.train_acc) {
            std::snprintf(buf, sizeof buf, "%.12g", *e.train_acc);
            os << buf;
        }
        std::snprintf(buf, sizeof buf, ",%.12g\n", e.lr);
        os << buf;
    }
    return os.str();
}

void write_history_csv(const TrainHistory& history, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << history_csv(history);
}

namespace {

class Sgd {
public:
    explicit Sgd(double momentum) : momentum_(momentum) {}

    void step(const std::string& key, Tensor& param, const Tensor& grad, double lr) {
        auto [it, fresh] = velocity_.try_emplace(key, param.shape(), 0.0);
        Tensor& v = it->second;
        for (std::size_t i = 0; i < param.size(); ++i) {
            v[i] = momentum_ * v[i] + grad[i];
            param[i] -= lr * v[i];
        }
    }

private:
    double momentum_;
    std::map<std::string, Tensor> velocity_;
};

struct Optimizers {
    explicit Optimizers(double momentum) : pretrain(momentum), warm(momentum), joint(momentum), last(momentum) {}
    Sgd pretrain, warm, joint, last;
};

void apply_updates(Graph& g, ProtoTSNetModel& model, const ModelVars& vars, Sgd& opt, double lr) {
    for (std::size_t i = 0; i < model.encoder.size(); ++i) {
        if (g.requires_grad(vars.enc_weight[i])) opt.step("enc.w" + std::to_string(i), model.encoder[i].weight, g.grad(vars.enc_weight[i]), lr);
        if (g.requires_grad(vars.enc_bias[i])) opt.step("enc.b" + std::to_string(i), model.encoder[i].bias, g.grad(vars.enc_bias[i]), lr);
    }
    if (g.requires_grad(vars.mix_weight)) opt.step("mix.w", model.mix_weight, g.grad(vars.mix_weight), lr);
    if (g.requires_grad(vars.mix_bias)) opt.step("mix.b", model.mix_bias, g.grad(vars.mix_bias), lr);
    if (g.requires_grad(vars.prototypes)) opt.step("protos", model.prototypes, g.grad(vars.prototypes), lr);
    if (g.requires_grad(vars.last_weight)) opt.step("last.w", model.last_weight, g.grad(vars.last_weight), lr);
}

Tensor gather(const Tensor& all, std::span<const int> idx) {
    const std::size_t span = all.size() / static_cast<std::size_t>(all.dim(0));
    std::vector<double> out;
    out.reserve(span * idx.size());
    for (int i : idx) {
        const auto begin = all.storage().begin() + static_cast<std::ptrdiff_t>(span * static_cast<std::size_t>(i));
        out.insert(out.end(), begin, begin + static_cast<std::ptrdiff_t>(span));
    }
    Shape shape = all.shape();
    shape[0] = static_cast<int>(idx.size());
    return Tensor(std::move(shape), std::move(out));
}

std::vector<std::vector<int>> make_batches(int n, int batch_size, std::mt19937_64& rng) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<int>> batches;
    for (int s = 0; s < n; s += batch_size) {
        batches.emplace_back(order.begin() + s, order.begin() + std::min(n, s + batch_size));
    }
    return batches;
}

void accumulate(LossBreakdown& acc, const LossBreakdown& b, double w) {
    acc.total += w * b.total;
    acc.ce += w * b.ce;
    acc.clst += w * b.clst;
    acc.sep += w * b.sep;
    acc.l1_conv += w * b.l1_conv;
    acc.l1_last += w * b.l1_last;
}

int count_correct(const Tensor& logits, std::span<const int> labels) {
    int correct = 0;
    for (int b = 0; b < logits.dim(0); ++b) {
        int best = 0;
        for (int c = 1; c < logits.dim(1); ++c) {
            if (logits.at(b, c) > logits.at(b, best)) best = c;
        }
        if (best == labels[static_cast<std::size_t>(b)]) ++correct;
    }
    return correct;
}

class Runner {
public:
    Runner(ProtoTSNetModel& model, const TimeSeriesDataset& train, const TrainConfig& config, const FitOptions& options)
        : model_(model), train_(train), config_(config), options_(options), rng_(config.seed), opt_(config.momentum) {
        inputs_ = encoder_input(model_, train_.x);
    }

    void pretrain_phase() {
        if (config_.pretrain_epochs == 0) return;
        Decoder decoder = create_decoder(model_, config_.seed);
        for (int e = 0; e < config_.pretrain_epochs; ++e) {
            LossBreakdown acc;
            for (const auto& idx : make_batches(train_.size(), config_.batch_size, rng_)) {
                Graph g;
                ModelVars vars = bind_model(g, model_, stage_trainables(Stage::Pretrain));
                DecoderVars dvars = bind_decoder(g, decoder, true);
                Var z = encode_graph(g, model_, vars, g.constant(gather(inputs_, idx)));
                Var recon = decode_graph(g, decoder, dvars, z);
                Var loss = ops::mse(g, recon, g.constant(gather(train_.x, idx)));
                g.backward(loss);
                LossBreakdown b;
                b.total = g.value(loss).item();
                accumulate(acc, b, static_cast<double>(idx.size()) / train_.size());
                apply_updates(g, model_, vars, opt_.pretrain, config_.pretrain_lr);
                for (std::size_t i = 0; i < decoder.layers.size(); ++i) {
                    opt_.pretrain.step("dec.w" + std::to_string(i), decoder.layers[i].weight, g.grad(dvars.weight[i]), config_.pretrain_lr);
                    opt_.pretrain.step("dec.b" + std::to_string(i), decoder.layers[i].bias, g.grad(dvars.bias[i]), config_.pretrain_lr);
                }
            }
            record("pretrain", Stage::Pretrain, acc, std::nullopt, config_.pretrain_lr);
        }
        // the decoder goes out of scope here; only encoder weights carry over
    }

    void stage_epoch(Stage stage, Sgd& opt, double lr) {
        LossBreakdown acc;
        int correct = 0;
        for (const auto& idx : make_batches(train_.size(), config_.batch_size, rng_)) {
            const std::vector<int> labels = train_.batch_labels(idx);
            Graph g;
            ModelVars vars = bind_model(g, model_, stage_trainables(stage));
            ForwardVars fwd = forward_graph(g, model_, vars, g.constant(gather(inputs_, idx)));
            StageLoss sl = stage_loss(g, stage, model_, vars, fwd, labels, config_);
            correct += count_correct(g.value(fwd.logits), labels);
            g.backward(sl.total);
            accumulate(acc, sl.parts, static_cast<double>(idx.size()) / train_.size());
            apply_updates(g, model_, vars, opt, lr);
        }
        record("main", stage, acc, static_cast<double>(correct) / train_.size(), lr);
    }

    // Encoder and prototypes are frozen during the last-layer stage, so the
    // similarity activations and distances are computed once per phase.
    void last_phase() {
        if (config_.last_epochs == 0) return;
        Graph g0;
        ModelVars v0 = bind_model(g0, model_, Trainables{});
        ForwardVars f0 = forward_graph(g0, model_, v0, g0.constant(inputs_));
        const Tensor sims = g0.value(f0.similarity);
        const Tensor all_labels_min = g0.value(f0.min_dist);
        const double l1_conv = loss_l1_conv(model_);

        for (int e = 0; e < config_.last_epochs; ++e) {
            LossBreakdown acc;
            int correct = 0;
            for (const auto& idx : make_batches(train_.size(), config_.batch_size, rng_)) {
                const std::vector<int> labels = train_.batch_labels(idx);
                Graph g;
                Var w = g.parameter(model_.last_weight);
                Var logits = ops::linear(g, g.constant(gather(sims, idx)), w);
                Var ce = ops::softmax_cross_entropy(g, logits, labels);
                Var l1l = ops::negative_part_sum(g, w);
                Var total = ops::weighted_sum(g, {{1.0, ce}, {config_.lambda_last, l1l}});
                const Tensor mind = gather(all_labels_min, idx);
                LossBreakdown b;
                b.ce = g.value(ce).item();
                b.l1_last = g.value(l1l).item();
                b.l1_conv = l1_conv;
                b.clst = masked_mean_min(mind, class_mask(labels, model_, true));
                b.sep = -masked_mean_min(mind, class_mask(labels, model_, false));
                b.total = g.value(total).item();
                correct += count_correct(g.value(logits), labels);
                g.backward(total);
                accumulate(acc, b, static_cast<double>(idx.size()) / train_.size());
                opt_.last.step("last.w", model_.last_weight, g.grad(w), config_.last_lr);
            }
            record("main", Stage::Last, acc, static_cast<double>(correct) / train_.size(), config_.last_lr);
        }
    }

    void main_phase() {
        for (int e = 0; e < config_.warm_epochs; ++e) stage_epoch(Stage::Warm, opt_.warm, config_.warm_lr);
        int joint_step = 0;
        for (int cycle = 0; cycle < config_.cycles; ++cycle) {
            for (int e = 0; e < config_.joint_epochs; ++e) {
                stage_epoch(Stage::Joint, opt_.joint, lr_schedule(joint_step++, config_));
            }
            project_prototypes(model_, encode_batch(train_.x, model_), train_.labels);
            if (!options_.checkpoint_dir.empty()) {
                std::filesystem::create_directories(options_.checkpoint_dir);
                save_checkpoint(model_, (std::filesystem::path(options_.checkpoint_dir) /
                                         ("push_" + std::to_string(cycle) + ".ckpt")).string());
            }
            last_phase();
        }
    }

    TrainHistory history;

private:
    void record(const std::string& phase, Stage stage, const LossBreakdown& loss, std::optional<double> acc, double lr) {
        EpochRecord r;
        r.phase = phase;
        r.stage = stage;
        r.epoch = static_cast<int>(history.epochs.size());
        r.loss = loss;
        r.train_acc = acc;
        r.lr = lr;
        for (double v : {loss.total, loss.ce, loss.clst, loss.sep, loss.l1_conv, loss.l1_last}) {
            if (!std::isfinite(v)) throw NumericError("non-finite loss in " + stage_name(stage) + " epoch " + std::to_string(r.epoch));
        }
        history.epochs.push_back(r);
        if (options_.on_epoch) options_.on_epoch(r);
    }

    ProtoTSNetModel& model_;
    const TimeSeriesDataset& train_;
    const TrainConfig& config_;
    const FitOptions& options_;
    std::mt19937_64 rng_;
    Optimizers opt_;
    Tensor inputs_;
};

void check_training_set(const ProtoTSNetModel& model, const TimeSeriesDataset& train) {
    train.validate();
    if (train.features() != model.features) throw ShapeError("dataset feature count does not match the model");
    if (train.length() < model.proto_len) throw ShapeError("series shorter than the prototype length");
    const auto counts = train.class_counts();
    if (static_cast<int>(counts.size()) != model.classes) throw std::invalid_argument("dataset class count does not match the model");
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) throw std::invalid_argument("class '" + train.class_names[c] + "' is absent from the training set");
    }
}

}  // namespace

TrainHistory fit(ProtoTSNetModel& model, const TimeSeriesDataset& train, const TrainConfig& config,
                 const FitOptions& options) {
    config.validate();
    check_training_set(model, train);
    Runner runner(model, train, config, options);
    if (!options.skip_pretrain) runner.pretrain_phase();
    runner.main_phase();
    return std::move(runner.history);
}

TrainHistory pretrain(ProtoTSNetModel& model, const TimeSeriesDataset& train, const TrainConfig& config) {
    config.validate();
    check_training_set(model, train);
    FitOptions options;
    Runner runner(model, train, config, options);
    runner.pretrain_phase();
    return std::move(runner.history);
}

double accuracy(const ProtoTSNetModel& model, const TimeSeriesDataset& data) {
    data.validate();
    int correct = 0;
    constexpr int chunk = 64;
    for (int s = 0; s < data.size(); s += chunk) {
        std::vector<int> idx(static_cast<std::size_t>(std::min(chunk, data.size() - s)));
        std::iota(idx.begin(), idx.end(), s);
        const auto results = forward_batch(data.batch(idx), model);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (results[k].predicted() == data.labels[static_cast<std::size_t>(idx[k])]) ++correct;
        }
    }
    return static_cast<double>(correct) / data.size();
}

}  // namespace prototsnet
