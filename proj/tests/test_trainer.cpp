#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <unistd.h>

#include "prototsnet/checkpoint.hpp"
#include "prototsnet/trainer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace prototsnet;
using testing_support::random_tensor;
using testing_support::oracle_min_term;
using testing_support::patch_sqdist;

namespace {

ProtoTSNetModel toy_model(std::uint64_t seed, int classes = 2) {
    return create_model(testing_support::toy_model_config(seed), 3, 12, classes);
}

bool same_encoder(const ProtoTSNetModel& a, const ProtoTSNetModel& b) {
    for (std::size_t i = 0; i < a.encoder.size(); ++i) {
        if (!(a.encoder[i].weight == b.encoder[i].weight) || !(a.encoder[i].bias == b.encoder[i].bias)) return false;
    }
    return a.mix_weight == b.mix_weight && a.mix_bias == b.mix_bias;
}

}  // namespace

TEST(TrainConfig, DefaultsAndValidation) {
    TrainConfig c;
    EXPECT_EQ(c.main_epochs(), 358);
    EXPECT_NO_THROW(c.validate());
    c.momentum = 1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = TrainConfig{};
    c.lambda_sep = -1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Losses, HandExample) {
    ProtoTSNetModel model = toy_model(1);
    model.prototypes.fill(0.0);
    Tensor z(Shape{2, 4, 12});
    for (int t = 0; t < 12; ++t) {
        for (int c = 0; c < 4; ++c) {
            z.at(0, c, t) = 1.0;
            z.at(1, c, t) = 2.0;
        }
    }
    model.prototypes.at(1, 0, 0) = 1.0;  // class 1 prototype differs in one cell
    const std::vector<int> labels{0, 1};
    // series 0: own-class (proto 0) 4*3*1 = 12; other (proto 1) 11
    // series 1: own-class (proto 1) 4*3*4 - 4 + 1 = 45; other 48
    EXPECT_DOUBLE_EQ(loss_clst(z, labels, model), (12.0 + 45.0) / 2.0);
    EXPECT_DOUBLE_EQ(loss_sep(z, labels, model), -(11.0 + 48.0) / 2.0);
}

TEST(Losses, RegularisersExample) {
    ProtoTSNetModel model = toy_model(1);
    model.mix_weight.fill(0.0);
    model.mix_weight.at(0, 1) = -2.0;
    model.mix_weight.at(3, 2) = 0.5;
    EXPECT_DOUBLE_EQ(loss_l1_conv(model), 2.5);
    model.last_weight.fill(0.0);
    model.last_weight.at(0, 0) = 1.0;
    model.last_weight.at(1, 0) = -0.5;
    model.last_weight.at(0, 1) = -0.25;
    EXPECT_DOUBLE_EQ(loss_l1_last(model), 0.75);
}

TEST(Losses, MatchTripleLoopOracle) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const int classes = 2 + static_cast<int>(rng() % 3);
        ProtoTSNetModel model = toy_model(static_cast<std::uint64_t>(trial), classes);
        model.prototypes = random_tensor(model.prototypes.shape(), 1000 + trial);
        const int batch = 1 + static_cast<int>(rng() % 6);
        const Tensor z = random_tensor(Shape{batch, 4, 12}, 2000 + trial, -2.0, 2.0);
        std::vector<int> labels(static_cast<std::size_t>(batch));
        for (int& y : labels) y = static_cast<int>(rng() % classes);
        ASSERT_NEAR(loss_clst(z, labels, model), oracle_min_term(z, labels, model, true), 1e-10);
        ASSERT_NEAR(loss_sep(z, labels, model), -oracle_min_term(z, labels, model, false), 1e-10);

        Graph g;
        Var md = ops::min_over_time(g, ops::sliding_sq_l2(g, g.constant(z), g.constant(model.prototypes)));
        ASSERT_NEAR(g.value(loss_clst_graph(g, md, labels, model)).item(), oracle_min_term(z, labels, model, true), 1e-10);
        ASSERT_NEAR(g.value(loss_sep_graph(g, md, labels, model)).item(), -oracle_min_term(z, labels, model, false), 1e-10);
    }
}

TEST(Losses, ClassWithoutPrototypesIsAnError) {
    ProtoTSNetModel model = toy_model(1);
    const Tensor z = random_tensor(Shape{1, 4, 12}, 3);
    const std::vector<int> labels{0};
    model.proto_classes = {1, 1};
    EXPECT_THROW(loss_clst(z, labels, model), std::invalid_argument);
    EXPECT_THROW(loss_sep(z, std::vector<int>{1}, model), std::invalid_argument);
}

TEST(StageLoss, ComposesParts) {
    const ProtoTSNetModel model = toy_model(3);
    const Tensor x = random_tensor(Shape{4, 3, 12}, 9);
    const std::vector<int> labels{0, 1, 1, 0};
    TrainConfig cfg;
    for (Stage stage : {Stage::Warm, Stage::Joint, Stage::Last}) {
        Graph g;
        ModelVars vars = bind_model(g, model, stage_trainables(stage));
        ForwardVars fwd = forward_graph(g, model, vars, g.constant(encoder_input(model, x)));
        const StageLoss sl = stage_loss(g, stage, model, vars, fwd, labels, cfg);
        EXPECT_NEAR(sl.parts.total, compose_total(stage, sl.parts, cfg), 1e-12);
        EXPECT_NEAR(sl.parts.clst, loss_clst(encode_batch(x, model), labels, model), 1e-10);
        EXPECT_NEAR(sl.parts.l1_conv, loss_l1_conv(model), 1e-12);
        EXPECT_NEAR(sl.parts.l1_last, loss_l1_last(model), 1e-12);
    }
    TrainConfig zero = cfg;
    zero.lambda_clst = zero.lambda_sep = zero.lambda_conv = zero.lambda_last = 0.0;
    for (Stage stage : {Stage::Warm, Stage::Joint, Stage::Last}) {
        Graph g;
        ModelVars vars = bind_model(g, model, stage_trainables(stage));
        ForwardVars fwd = forward_graph(g, model, vars, g.constant(encoder_input(model, x)));
        const StageLoss sl = stage_loss(g, stage, model, vars, fwd, labels, zero);
        EXPECT_DOUBLE_EQ(sl.parts.total, sl.parts.ce);
    }
    Graph g;
    ModelVars vars = bind_model(g, model, {});
    ForwardVars fwd = forward_graph(g, model, vars, g.constant(encoder_input(model, x)));
    EXPECT_THROW(stage_loss(g, Stage::Pretrain, model, vars, fwd, labels, cfg), std::invalid_argument);
}

TEST(StageTrainables, Sets) {
    const Trainables p = stage_trainables(Stage::Pretrain);
    EXPECT_TRUE(p.encoder && p.mixing && !p.prototypes && !p.last_layer);
    const Trainables w = stage_trainables(Stage::Warm);
    EXPECT_TRUE(!w.encoder && w.mixing && w.prototypes && !w.last_layer);
    const Trainables j = stage_trainables(Stage::Joint);
    EXPECT_TRUE(j.encoder && j.mixing && j.prototypes && !j.last_layer);
    const Trainables l = stage_trainables(Stage::Last);
    EXPECT_TRUE(!l.encoder && !l.mixing && !l.prototypes && l.last_layer);
}

TEST(Projection, CopiesNearestOwnClassPatch) {
    for (int trial = 0; trial < 20; ++trial) {
        ProtoTSNetModel model = toy_model(static_cast<std::uint64_t>(trial));
        const Tensor z = random_tensor(Shape{6, 4, 12}, 50 + trial);
        const std::vector<int> labels{0, 1, 0, 1, 1, 0};
        const Tensor before = model.prototypes;
        project_prototypes(model, z, labels);
        ASSERT_TRUE(model.proto_sources.has_value());
        for (int j = 0; j < model.num_prototypes(); ++j) {
            const ProtoSource src = (*model.proto_sources)[static_cast<std::size_t>(j)];
            EXPECT_EQ(labels[static_cast<std::size_t>(src.series)], model.proto_classes[static_cast<std::size_t>(j)]);
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < 6; ++i) {
                if (labels[static_cast<std::size_t>(i)] != model.proto_classes[static_cast<std::size_t>(j)]) continue;
                for (int s = 0; s + model.proto_len <= 12; ++s) best = std::min(best, patch_sqdist(z, i, before, j, s));
            }
            EXPECT_NEAR(patch_sqdist(z, src.series, before, j, src.offset), best, 1e-12);
            EXPECT_LE(patch_sqdist(z, src.series, model.prototypes, j, src.offset), 1e-10);
            for (int c = 0; c < 4; ++c) {
                for (int t = 0; t < model.proto_len; ++t) EXPECT_EQ(model.prototypes.at(j, c, t), z.at(src.series, c, src.offset + t));
            }
        }
        const SimilarityResult sim = similarity(Tensor(Shape{4, 12}, std::vector<double>(z.data().begin() + 48 * (*model.proto_sources)[0].series,
                                                                                       z.data().begin() + 48 * ((*model.proto_sources)[0].series + 1))),
                                                model);
        EXPECT_NEAR(sim.similarity[0], std::log((0.0 + 1.0) / (0.0 + model.config.epsilon)), 1e-6);
    }
}

TEST(Projection, TiesResolveToSmallestSeriesAndOffset) {
    ProtoTSNetModel model = toy_model(2);
    model.prototypes.fill(5.0);
    Tensor z(Shape{3, 4, 12});  // all zeros: every patch ties
    project_prototypes(model, z, std::vector<int>{1, 0, 0});
    EXPECT_EQ((*model.proto_sources)[0], (ProtoSource{1, 0}));
    EXPECT_EQ((*model.proto_sources)[1], (ProtoSource{0, 0}));
}

TEST(Projection, MissingClassIsAnError) {
    ProtoTSNetModel model = toy_model(2);
    const Tensor z = random_tensor(Shape{2, 4, 12}, 1);
    EXPECT_THROW(project_prototypes(model, z, std::vector<int>{0, 0}), std::invalid_argument);
}

TEST(LrSchedule, TriangularCyclesWithDecay) {
    TrainConfig c;
    EXPECT_NEAR(lr_schedule(0, c), 1e-3, 1e-15);
    EXPECT_NEAR(lr_schedule(20, c), 5.5e-3, 1e-15);
    EXPECT_NEAR(lr_schedule(40, c), 1e-2, 1e-15);
    EXPECT_NEAR(lr_schedule(80, c), 1e-3, 1e-15);
    EXPECT_NEAR(lr_schedule(120, c), 5e-3, 1e-15);
    EXPECT_NEAR(lr_schedule(200, c), 2.5e-3, 1e-15);
    for (int s = 0; s < 400; ++s) {
        const double lr = lr_schedule(s, c);
        EXPECT_GE(lr, c.base_lr * c.lr_floor * (1 - 1e-12));
        EXPECT_LE(lr, std::max(c.base_lr * c.lr_floor, c.base_lr * std::pow(c.lr_decay, s / c.lr_cycle_len)) + 1e-15);
    }
    EXPECT_NEAR(lr_schedule(360, c), 1e-3, 1e-15);
    EXPECT_THROW(lr_schedule(-1, c), std::invalid_argument);
}

TEST(Fit, WarmStageFreezesEncoderAndLastLayer) {
    const TimeSeriesDataset data = testing_support::small_synthetic(0, 4);
    ProtoTSNetModel model = create_model(testing_support::small_synthetic_config(), 3, 100, 4);
    const ProtoTSNetModel start = model;
    TrainConfig cfg = testing_support::short_train_config();
    cfg.pretrain_epochs = 0;
    cfg.cycles = 0;
    const TrainHistory h = fit(model, data, cfg);
    ASSERT_EQ(h.epochs.size(), 2u);
    for (std::size_t i = 0; i < model.encoder.size(); ++i) {
        EXPECT_EQ(model.encoder[i].weight, start.encoder[i].weight);
        EXPECT_EQ(model.encoder[i].bias, start.encoder[i].bias);
    }
    EXPECT_EQ(model.last_weight, start.last_weight);
    EXPECT_FALSE(model.mix_weight == start.mix_weight);
    EXPECT_FALSE(model.prototypes == start.prototypes);
}

TEST(Fit, LastStageOnlyTouchesLastLayer) {
    const TimeSeriesDataset data = testing_support::small_synthetic(0, 4);
    ProtoTSNetModel model = create_model(testing_support::small_synthetic_config(), 3, 100, 4);
    ProtoTSNetModel expected = model;
    project_prototypes(expected, encode_batch(data.x, expected), data.labels);
    TrainConfig cfg = testing_support::short_train_config();
    cfg.pretrain_epochs = 0;
    cfg.warm_epochs = 0;
    cfg.joint_epochs = 0;
    cfg.cycles = 1;
    fit(model, data, cfg);
    EXPECT_TRUE(same_encoder(model, expected));
    EXPECT_EQ(model.prototypes, expected.prototypes);
    EXPECT_FALSE(model.last_weight == expected.last_weight);
}

TEST(Fit, DegenerateScheduleLeavesModelUnchanged) {
    const TimeSeriesDataset data = testing_support::small_synthetic(0, 3);
    ProtoTSNetModel model = create_model(testing_support::small_synthetic_config(), 3, 100, 4);
    const ProtoTSNetModel start = model;
    TrainConfig cfg;
    cfg.pretrain_epochs = cfg.warm_epochs = cfg.cycles = 0;
    const TrainHistory h = fit(model, data, cfg);
    EXPECT_TRUE(h.epochs.empty());
    EXPECT_TRUE(same_encoder(model, start));
    EXPECT_EQ(model.prototypes, start.prototypes);
    EXPECT_EQ(model.last_weight, start.last_weight);
}

TEST(Fit, PretrainReducesReconstructionLoss) {
    const TimeSeriesDataset data = testing_support::small_synthetic(4, 4);
    ProtoTSNetModel model = create_model(testing_support::small_synthetic_config(), 3, 100, 4);
    const ProtoTSNetModel start = model;
    TrainConfig cfg = testing_support::short_train_config();
    cfg.pretrain_epochs = 8;
    const TrainHistory h = pretrain(model, data, cfg);
    ASSERT_EQ(h.epochs.size(), 8u);
    for (const auto& e : h.epochs) EXPECT_EQ(e.phase, "pretrain");
    EXPECT_LT(h.epochs.back().loss.total, h.epochs.front().loss.total);
    EXPECT_FALSE(same_encoder(model, start));
    EXPECT_EQ(model.prototypes, start.prototypes);
    EXPECT_EQ(model.last_weight, start.last_weight);
}

TEST(Fit, DeterministicAndRecordsEveryEpoch) {
    const TimeSeriesDataset data = testing_support::small_synthetic(5, 3);
    const TrainConfig cfg = testing_support::short_train_config(7);
    ProtoTSNetModel a = create_model(testing_support::small_synthetic_config(3), 3, 100, 4);
    ProtoTSNetModel b = a;
    int callbacks = 0;
    FitOptions opts;
    opts.on_epoch = [&](const EpochRecord&) { ++callbacks; };
    const TrainHistory ha = fit(a, data, cfg, opts);
    const TrainHistory hb = fit(b, data, cfg);
    EXPECT_EQ(history_csv(ha), history_csv(hb));
    EXPECT_EQ(serialize_model(a), serialize_model(b));
    EXPECT_EQ(static_cast<int>(ha.epochs.size()), cfg.pretrain_epochs + cfg.main_epochs());
    EXPECT_EQ(callbacks, static_cast<int>(ha.epochs.size()));
    EXPECT_EQ(static_cast<int>(ha.of_phase("main").size()), cfg.main_epochs());
    for (const auto& e : ha.of_phase("main")) {
        EXPECT_TRUE(e.train_acc.has_value());
        EXPECT_NEAR(e.loss.total, compose_total(e.stage, e.loss, cfg), 1e-9);
    }
    EXPECT_TRUE(a.proto_sources.has_value());
}

TEST(Fit, HistoryCsvLayout) {
    TrainHistory h;
    EpochRecord r;
    r.phase = "pretrain";
    r.loss.total = 0.5;
    r.lr = 0.01;
    h.epochs.push_back(r);
    r.phase = "main";
    r.stage = Stage::Joint;
    r.epoch = 1;
    r.train_acc = 0.75;
    h.epochs.push_back(r);
    EXPECT_EQ(history_csv(h),
              "phase,stage,epoch,total,ce,clst,sep,l1_conv,l1_last,train_acc,lr\n"
              "pretrain,pretrain,0,0.5,0,0,0,0,0,,0.01\n"
              "main,joint,1,0.5,0,0,0,0,0,0.75,0.01\n");
}

TEST(Fit, WritesCheckpointAtEveryProjection) {
    const TimeSeriesDataset data = testing_support::small_synthetic(6, 3);
    ProtoTSNetModel model = create_model(testing_support::small_synthetic_config(), 3, 100, 4);
    const auto dir = std::filesystem::temp_directory_path() / ("prototsnet_ckpt_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    FitOptions opts;
    opts.checkpoint_dir = dir.string();
    TrainConfig cfg = testing_support::short_train_config();
    fit(model, data, cfg, opts);
    for (int c = 0; c < cfg.cycles; ++c) {
        const auto path = dir / ("push_" + std::to_string(c) + ".ckpt");
        ASSERT_TRUE(std::filesystem::exists(path)) << path;
        const ProtoTSNetModel loaded = load_checkpoint(path.string());
        EXPECT_TRUE(loaded.proto_sources.has_value());
    }
    std::filesystem::remove_all(dir);
}

TEST(Fit, RejectsMismatchedData) {
    const TimeSeriesDataset data = testing_support::small_synthetic(0, 2);
    ProtoTSNetModel model = create_model(testing_support::small_synthetic_config(), 3, 100, 5);
    EXPECT_THROW(fit(model, data, testing_support::short_train_config()), std::invalid_argument);
    ProtoTSNetModel two_features = create_model(testing_support::small_synthetic_config(), 2, 100, 4);
    EXPECT_THROW(fit(two_features, data, testing_support::short_train_config()), ShapeError);
}

TEST(Fit, NonFiniteLossIsReported) {
    const TimeSeriesDataset data = testing_support::small_synthetic(0, 2);
    ProtoTSNetModel model = create_model(testing_support::small_synthetic_config(), 3, 100, 4);
    model.mix_weight.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg = testing_support::short_train_config();
    cfg.pretrain_epochs = 0;
    EXPECT_THROW(fit(model, data, cfg), NumericError);
}
