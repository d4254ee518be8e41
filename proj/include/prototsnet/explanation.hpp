#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "prototsnet/dataset.hpp"
#include "prototsnet/model.hpp"

namespace prototsnet {

struct PrototypeCard {
    int proto_id = 0;
    int class_id = 0;
    std::string class_name;
    int source_series = 0;
    int latent_offset = 0;
    std::pair<int, int> input_segment;  // closed interval
    Tensor waveform;                    // [d, t_e - t_s + 1]
    std::vector<double> class_weights;  // W_last[:, proto_id]
    Tensor source;                      // full source series [d, T], for plotting
};

// Requires projected prototypes.
std::vector<PrototypeCard> build_prototype_cards(const ProtoTSNetModel& model, const TimeSeriesDataset& train);

struct PrototypeMatch {
    int proto_id = 0;
    int proto_class = 0;
    double similarity = 0.0;
    int latent_offset = 0;
    std::pair<int, int> input_segment;
    double contribution = 0.0;  // similarity * W_last[predicted, proto_id]
};

struct ClassificationExplanation {
    int instance_id = 0;
    int predicted = 0;
    std::optional<int> label;
    std::vector<double> logits;
    std::vector<double> similarity;  // all prototypes
    std::vector<PrototypeMatch> top;  // by contribution desc, then proto_id
    Tensor series;                    // the explained input [d, T]
};

ClassificationExplanation explain_instance(const ProtoTSNetModel& model, const Tensor& x, int instance_id = 0,
                                           int top_k = 3, std::optional<int> label = std::nullopt);

// Rounds to 9 significant digits, the precision of every float in the report.
double round9(double v);

nlohmann::json report_json(const ProtoTSNetModel& model, const std::vector<PrototypeCard>& cards,
                           const std::vector<ClassificationExplanation>& explanations,
                           const std::vector<double>& importance);

std::string prototype_svg(const PrototypeCard& card);
std::string instance_svg(const ClassificationExplanation& e, const std::vector<std::string>& class_names);
// Bars in descending importance, each tagged with data-feature and data-value.
std::string importance_svg(const std::vector<double>& importance);

// Writes report.json, proto_<id>.svg, instance_<id>.svg and importance.svg
// into `dir` (created if needed).
void export_report(const ProtoTSNetModel& model, const std::vector<PrototypeCard>& cards,
                   const std::vector<ClassificationExplanation>& explanations, const std::vector<double>& importance,
                   const std::string& dir);

}  // namespace prototsnet
