#pragma once

#include <cstdint>
#include <random>

#include "prototsnet/dataset.hpp"
#include "prototsnet/model.hpp"
#include "prototsnet/tensor.hpp"
#include "prototsnet/trainer.hpp"

namespace testing_support {

using namespace prototsnet;

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : t.data()) v = u(rng);
    return t;
}

// d=3, l=4, two classes, one prototype each; small enough for
// finite-difference checks.
inline ModelConfig toy_model_config(std::uint64_t seed = 1) {
    ModelConfig c;
    c.encoder.groups = 4;
    c.encoder.kernels = {3, 3};
    c.encoder.channels_per_group = {2, 1};
    c.encoder.activation = Activation::Tanh;
    c.reception = 0.67;
    c.proto_fraction = 0.25;
    c.protos_per_class = 1;
    c.seed = seed;
    return c;
}

inline TrainConfig short_train_config(std::uint64_t seed = 0) {
    TrainConfig t;
    t.pretrain_epochs = 2;
    t.warm_epochs = 2;
    t.joint_epochs = 3;
    t.last_epochs = 2;
    t.cycles = 2;
    t.lr_cycle_len = 3;
    t.batch_size = 8;
    t.seed = seed;
    return t;
}

// A small synthetic set with fewer groups so training runs in well under a second.
inline ModelConfig small_synthetic_config(std::uint64_t seed = 0) {
    ModelConfig c;
    c.encoder.groups = 8;
    c.reception = 0.75;
    c.proto_fraction = 0.2;
    c.protos_per_class = 1;
    c.seed = seed;
    return c;
}

inline TimeSeriesDataset small_synthetic(std::uint64_t seed = 0, int n_per_class = 6) {
    SyntheticSpec s;
    s.n_per_class = n_per_class;
    s.seed = seed;
    return generate_synthetic(s);
}

}  // namespace testing_support
