#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prototsnet/tensor.hpp"

namespace prototsnet {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Header fields and ingestion flags of a parsed `.ts` file.
struct SourceMeta {
    std::map<std::string, std::string> header;  // lower-cased keys
    bool padded = false;        // unequal lengths right-padded with 0
    bool missing_filled = false; // '?' or NaN replaced by 0
    std::vector<int> original_lengths;
};

struct TimeSeriesDataset {
    std::string name;
    Tensor x;  // [n, d, T]
    std::vector<int> labels;
    std::vector<std::string> class_names;
    SourceMeta meta;

    int size() const { return static_cast<int>(labels.size()); }
    int features() const { return x.empty() ? 0 : x.dim(1); }
    int length() const { return x.empty() ? 0 : x.dim(2); }
    int num_classes() const { return static_cast<int>(class_names.size()); }

    Tensor series(int i) const;                       // [d, T]
    Tensor batch(std::span<const int> indices) const; // [B, d, T]
    std::vector<int> batch_labels(std::span<const int> indices) const;
    TimeSeriesDataset subset(std::span<const int> indices) const;
    std::vector<int> class_counts() const;
    void validate() const;
};

TimeSeriesDataset parse_ts(const std::string& path);
TimeSeriesDataset parse_ts_text(const std::string& text, const std::string& name = "dataset");

// Values are written with 9 significant digits.
std::string format_ts(const TimeSeriesDataset& data);
void write_ts(const TimeSeriesDataset& data, const std::string& path);

// Long-format CSV: series,feature,t,value,label
void write_dataset_csv(const TimeSeriesDataset& data, const std::string& path);

struct SyntheticSpec {
    int n_per_class = 25;
    double noise_std = 0.05;
    std::uint64_t seed = 0;
};

constexpr int kSyntheticLength = 100;
constexpr int kSyntheticSignificant = 40;

// Four classes over three features. Features 0 and 1 carry saw/rectangle
// patterns in steps [0, 40); feature 2 and the remaining steps are
// class-independent uniform noise.
TimeSeriesDataset generate_synthetic(const SyntheticSpec& spec);

struct Normalization {
    std::vector<double> mean;
    std::vector<double> stddev;
};

// Per-feature statistics over all series and time steps; zero spread is
// replaced by 1.
Normalization fit_normalization(const TimeSeriesDataset& data);
TimeSeriesDataset apply_normalization(const TimeSeriesDataset& data, const Normalization& stats);
std::pair<TimeSeriesDataset, Normalization> znormalize(const TimeSeriesDataset& data);

struct Fold {
    std::vector<int> train;
    std::vector<int> val;
};

// Stratified when every class has at least k members, otherwise a plain
// shuffled split (with a warning).
std::vector<Fold> kfold_splits(std::span<const int> labels, int k, std::uint64_t seed);

}  // namespace prototsnet
