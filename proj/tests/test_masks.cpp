#include <gtest/gtest.h>

#include "prototsnet/masks.hpp"
#include "prototsnet/model.hpp"
#include "support.hpp"

using namespace prototsnet;
using testing_support::random_tensor;

TEST(Masks, PaperExampleKeepsHalf) {
    const MaskSet m = generate_masks(10, 4, 0.5, 7);
    ASSERT_EQ(m.delta.size(), 40u);
    for (int i = 0; i < 4; ++i) {
        int kept = 0;
        for (int f = 0; f < 10; ++f) kept += m.at(i, f);
        EXPECT_EQ(kept, 5);
    }
}

TEST(Masks, SmallAndFullReception) {
    const MaskSet one = generate_masks(2, 1, 0.5, 0);
    EXPECT_EQ(one.at(0, 0) + one.at(0, 1), 1);
    const MaskSet full = generate_masks(5, 3, 1.0, 0);
    for (auto v : full.delta) EXPECT_EQ(v, 1);
}

TEST(Masks, RejectsInvalidReception) {
    EXPECT_THROW(generate_masks(3, 2, 0.25, 0), std::invalid_argument);
    EXPECT_THROW(generate_masks(3, 2, 0.0, 0), std::invalid_argument);
    EXPECT_THROW(generate_masks(3, 2, 1.5, 0), std::invalid_argument);
    EXPECT_THROW(generate_masks(0, 2, 0.5, 0), std::invalid_argument);
    EXPECT_THROW(generate_masks(3, 0, 0.5, 0), std::invalid_argument);
}

TEST(Masks, CardinalityPropertyOverManySettings) {
    for (int d = 1; d <= 12; ++d) {
        for (double r : {0.1, 0.25, 0.5, 0.75, 0.9, 1.0}) {
            const int kept = static_cast<int>(r * d + 1e-9);
            if (kept < 1) continue;
            for (std::uint64_t seed = 0; seed < 5; ++seed) {
                const MaskSet m = generate_masks(d, 7, r, seed);
                for (int i = 0; i < 7; ++i) {
                    int row = 0;
                    for (int f = 0; f < d; ++f) {
                        ASSERT_TRUE(m.at(i, f) == 0 || m.at(i, f) == 1);
                        row += m.at(i, f);
                    }
                    ASSERT_EQ(row, kept) << "d=" << d << " r=" << r;
                }
            }
        }
    }
}

TEST(Masks, SeedDeterminism) {
    EXPECT_EQ(generate_masks(9, 32, 0.5, 42), generate_masks(9, 32, 0.5, 42));
    EXPECT_NE(generate_masks(9, 32, 0.5, 42).delta, generate_masks(9, 32, 0.5, 43).delta);
}

TEST(Masks, PackedBitsRoundTrip) {
    const MaskSet m = generate_masks(6, 5, 0.5, 3);
    EXPECT_EQ(MaskSet::from_packed(6, 5, 0.5, 3, m.packed_bits()), m);
}

TEST(Masks, OrphansAndDuplicates) {
    MaskSet m;
    m.features = 3;
    m.groups = 2;
    m.reception = 0.34;
    m.delta = {1, 0, 0, 1, 0, 0};
    EXPECT_EQ(m.orphans(), (std::vector<int>{1, 2}));
    ASSERT_EQ(m.duplicate_rows().size(), 1u);
    Tensor w(Shape{2, 2}, {1, 2, 3, 4});
    const auto importance = feature_importance(m, w);
    EXPECT_EQ(importance[1], 0.0);
    EXPECT_EQ(importance[2], 0.0);
}

TEST(ApplyMasks, AllOnesStacksCopies) {
    const Tensor x = random_tensor(Shape{3, 5}, 1);
    const Tensor y = apply_masks(x, all_ones_masks(3, 2));
    ASSERT_EQ(y.shape(), (Shape{6, 5}));
    for (int i = 0; i < 2; ++i) {
        for (int m = 0; m < 3; ++m) {
            for (int t = 0; t < 5; ++t) EXPECT_EQ(y.at(i * 3 + m, t), x.at(m, t));
        }
    }
}

TEST(ApplyMasks, HandEnumeration) {
    const Tensor x(Shape{3, 2}, {1, 2, 3, 4, 5, 6});
    MaskSet m;
    m.features = 3;
    m.groups = 2;
    m.reception = 0.5;
    m.delta = {1, 0, 1, 0, 1, 0};
    const Tensor y = apply_masks(x, m);
    EXPECT_EQ(y.storage(), (std::vector<double>{1, 2, 0, 0, 5, 6, 0, 0, 3, 4, 0, 0}));
    m.delta = {0, 0, 0, 1, 1, 1};
    const Tensor z = apply_masks(x, m);
    for (int r = 0; r < 3; ++r) EXPECT_EQ(z.at(r, 0), 0.0);
    EXPECT_THROW(apply_masks(Tensor(Shape{2, 2}), m), ShapeError);
}

TEST(ApplyMasks, GroupedEncoderOnlySeesRoutedFeatures) {
    ModelConfig c = testing_support::toy_model_config(5);
    c.encoder.groups = 6;
    c.reception = 0.34;
    const ProtoTSNetModel model = create_model(c, 3, 10, 2);
    const Tensor x = random_tensor(Shape{1, 3, 10}, 2);
    Graph g0;
    ModelVars v0 = bind_model(g0, model, {});
    // pre-mix encoder output: run the conv stack only
    auto encoder_out = [&](const Tensor& in) {
        Graph g;
        ModelVars v = bind_model(g, model, {});
        Var h = g.constant(encoder_input(model, in));
        for (std::size_t i = 0; i < model.encoder.size(); ++i) {
            h = ops::grouped_conv1d(g, h, v.enc_weight[i], v.enc_bias[i], model.encoder[i].groups);
            if (i + 1 < model.encoder.size()) h = ops::activation(g, h, c.encoder.activation);
        }
        return g.value(h);
    };
    const Tensor base = encoder_out(x);
    for (int m = 0; m < 3; ++m) {
        Tensor xp = x;
        for (int t = 0; t < 10; ++t) xp.at(0, m, t) = 0.0;
        const Tensor out = encoder_out(xp);
        for (int i = 0; i < 6; ++i) {
            bool changed = false;
            for (int t = 0; t < 10; ++t) changed |= out.at(0, i, t) != base.at(0, i, t);
            if (!model.masks.at(i, m)) EXPECT_FALSE(changed) << "group " << i << " feature " << m;
        }
    }
}
