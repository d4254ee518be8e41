#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <unistd.h>

#include "prototsnet/evaluation.hpp"
#include "support.hpp"

using namespace prototsnet;

namespace {

RunConfig tiny_run(std::uint64_t seed = 0) {
    RunConfig c;
    c.model = testing_support::small_synthetic_config(seed);
    c.model.encoder.groups = 4;
    c.train = testing_support::short_train_config(seed);
    c.train.pretrain_epochs = 1;
    c.train.warm_epochs = 1;
    c.train.joint_epochs = 1;
    c.train.last_epochs = 1;
    c.train.cycles = 1;
    return c;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("prototsnet_eval_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(Evaluation, TrainAndEvaluate) {
    const TimeSeriesDataset train = testing_support::small_synthetic(0, 3);
    RunConfig cfg = tiny_run();
    cfg.normalize = true;
    const TrainedRun run = train_model(train, cfg);
    ASSERT_TRUE(run.model.normalization.has_value());
    EXPECT_EQ(run.model.class_names, train.class_names);
    const double acc = evaluate(run.model, train);
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
    const TimeSeriesDataset prepared = prepare_input(run.model, train);
    EXPECT_NEAR(prepared.x.at(0, 0, 0), (train.x.at(0, 0, 0) - run.model.normalization->mean[0]) / run.model.normalization->stddev[0], 1e-12);
}

TEST(GridSearch, SingleCellAndRowCount) {
    const TimeSeriesDataset data = testing_support::small_synthetic(1, 4);
    std::vector<int> pool(static_cast<std::size_t>(data.size()));
    std::iota(pool.begin(), pool.end(), 0);
    GridSpec grid;
    grid.receptions = {0.75};
    grid.proto_fractions = {0.2};
    grid.folds = 2;
    grid.seeds = {0, 1};
    const auto runs = temp_file("runs1.csv");
    std::filesystem::remove(runs);
    GridOptions opts;
    opts.runs_csv = runs.string();
    const GridResult res = grid_search_cv(data, pool, grid, tiny_run(), opts);
    ASSERT_EQ(res.cells.size(), 1u);
    EXPECT_TRUE(res.cells[0].valid);
    EXPECT_EQ(res.cells[0].fold_acc.size(), 4u);
    EXPECT_NEAR(res.cells[0].mean_val_acc,
                std::accumulate(res.cells[0].fold_acc.begin(), res.cells[0].fold_acc.end(), 0.0) / 4.0, 1e-12);
    EXPECT_EQ(res.best.r, 0.75);
    EXPECT_EQ(load_runs_csv(runs.string()).size(), 4u);
    std::ifstream f(runs);
    std::string header;
    std::getline(f, header);
    EXPECT_EQ(header, runs_csv_header());
    std::filesystem::remove(runs);
}

TEST(GridSearch, ReadsOnlyThePool) {
    const TimeSeriesDataset data = testing_support::small_synthetic(2, 5);
    std::vector<int> pool;
    for (int i = 0; i < data.size(); ++i) {
        if (i % 3 != 2) pool.push_back(i);
    }
    GridSpec grid;
    grid.receptions = {0.75};
    grid.proto_fractions = {0.1, 0.2};
    grid.folds = 2;
    std::set<int> touched;
    std::mutex mu;
    GridOptions opts;
    opts.access_audit = [&](std::span<const int> rows) {
        std::lock_guard<std::mutex> lock(mu);
        touched.insert(rows.begin(), rows.end());
    };
    grid_search_cv(data, pool, grid, tiny_run(), opts);
    ASSERT_FALSE(touched.empty());
    const std::set<int> allowed(pool.begin(), pool.end());
    for (int i : touched) EXPECT_TRUE(allowed.count(i)) << "row " << i << " is outside the pool";
}

TEST(GridSearch, InvalidCellsAreSkipped) {
    const TimeSeriesDataset data = testing_support::small_synthetic(3, 3);
    std::vector<int> pool(static_cast<std::size_t>(data.size()));
    std::iota(pool.begin(), pool.end(), 0);
    GridSpec grid;
    grid.receptions = {0.25, 0.75};  // floor(0.25 * 3) = 0
    grid.proto_fractions = {0.2};
    grid.folds = 2;
    const GridResult res = grid_search_cv(data, pool, grid, tiny_run(), {});
    ASSERT_EQ(res.cells.size(), 2u);
    EXPECT_FALSE(res.cells[0].valid);
    EXPECT_FALSE(res.cells[0].reason.empty());
    EXPECT_TRUE(res.cells[1].valid);
    EXPECT_EQ(res.best.r, 0.75);
}

TEST(GridSearch, ResumesFromRunsCsv) {
    const TimeSeriesDataset data = testing_support::small_synthetic(4, 3);
    std::vector<int> pool(static_cast<std::size_t>(data.size()));
    std::iota(pool.begin(), pool.end(), 0);
    GridSpec grid;
    grid.receptions = {0.75};
    grid.proto_fractions = {0.2};
    grid.folds = 2;
    const auto runs = temp_file("runs2.csv");
    std::filesystem::remove(runs);
    GridOptions opts;
    opts.dataset_name = "synth";
    opts.runs_csv = runs.string();
    // a pre-existing record for fold 0 with a sentinel accuracy
    RunRecord rec;
    rec.dataset = "synth";
    rec.r = 0.75;
    rec.L = 0.2;
    rec.fold = 0;
    rec.seed = 0;
    rec.val_acc = 0.125;
    append_run(runs.string(), rec);
    int audits = 0;
    opts.access_audit = [&](std::span<const int>) { ++audits; };
    const GridResult res = grid_search_cv(data, pool, grid, tiny_run(), opts);
    EXPECT_EQ(res.cells[0].fold_acc[0], 0.125);
    EXPECT_EQ(load_runs_csv(runs.string()).size(), 2u);
    const int first_audits = audits;
    EXPECT_GT(first_audits, 0);
    const GridResult again = grid_search_cv(data, pool, grid, tiny_run(), opts);
    EXPECT_EQ(audits, first_audits);
    ASSERT_EQ(again.cells[0].fold_acc.size(), res.cells[0].fold_acc.size());
    for (std::size_t i = 0; i < res.cells[0].fold_acc.size(); ++i) EXPECT_NEAR(again.cells[0].fold_acc[i], res.cells[0].fold_acc[i], 1e-9);
    EXPECT_EQ(load_runs_csv(runs.string()).size(), 2u);
    std::filesystem::remove(runs);
}

TEST(RunsCsv, RoundTrip) {
    RunRecord r;
    r.dataset = "d";
    r.r = 0.5;
    r.L = 0.25;
    r.fold = -1;
    r.seed = 3;
    r.val_acc = 0.75;
    r.test_acc = 0.5;
    r.wall_s = 1.5;
    const auto path = temp_file("runs3.csv");
    std::filesystem::remove(path);
    append_run(path.string(), r);
    const auto back = load_runs_csv(path.string());
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].fold, -1);
    EXPECT_EQ(back[0].test_acc, 0.5);
    EXPECT_EQ(back[0].seed, 3u);
    std::filesystem::remove(path);
}

TEST(Ablation, VariantNames) {
    for (Variant v : all_variants()) EXPECT_EQ(variant_from_name(variant_name(v)), v);
    EXPECT_EQ(variant_name(Variant::RegularNoPretrain), "RE/NP");
    EXPECT_THROW(variant_from_name("XX"), std::invalid_argument);
}

TEST(Ablation, NoPretrainHasEmptyPretrainHistory) {
    const TimeSeriesDataset train = testing_support::small_synthetic(5, 3);
    const TimeSeriesDataset test = testing_support::small_synthetic(6, 2);
    const AblationResult np = run_ablation(train, test, Variant::GroupedNoPretrain, tiny_run());
    EXPECT_TRUE(np.run.history.of_phase("pretrain").empty());
    EXPECT_EQ(static_cast<int>(np.run.history.of_phase("main").size()), tiny_run().train.main_epochs());
    const AblationResult p = run_ablation(train, test, Variant::GroupedPretrained, tiny_run());
    EXPECT_EQ(p.run.history.of_phase("pretrain").size(), 1u);
    EXPECT_NEAR(p.test_acc, evaluate(p.run.model, test), 1e-12);
}

TEST(Ablation, RegularEncoderImportanceIsUniform) {
    const TimeSeriesDataset train = testing_support::small_synthetic(7, 3);
    const TimeSeriesDataset test = testing_support::small_synthetic(8, 2);
    const AblationResult re = run_ablation(train, test, Variant::RegularPretrained, tiny_run());
    const ProtoTSNetModel& m = re.run.model;
    EXPECT_FALSE(m.config.encoder.grouped);
    const std::vector<double> imp = feature_importance(m);
    double expected = 0.0;
    for (int j = 0; j < m.mix_weight.dim(0); ++j) {
        double s = 0.0;
        for (int i = 0; i < m.mix_weight.dim(1); ++i) s += m.mix_weight.at(j, i);
        expected += std::abs(s);
    }
    ASSERT_EQ(imp.size(), 3u);
    for (double v : imp) EXPECT_NEAR(v, expected, 1e-12);
}
