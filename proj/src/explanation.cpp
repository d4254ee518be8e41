#include "prototsnet/explanation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "prototsnet/config.hpp"
#include "prototsnet/svg.hpp"

namespace prototsnet {

namespace {

using nlohmann::json;

std::string class_label(const std::vector<std::string>& names, int c) {
    return c >= 0 && c < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(c)] : std::to_string(c);
}

json rounded(const std::vector<double>& v) {
    json out = json::array();
    for (double x : v) out.push_back(round9(x));
    return out;
}

json rounded(const Tensor& t) {
    json out = json::array();
    for (int i = 0; i < t.dim(0); ++i) {
        json row = json::array();
        for (int j = 0; j < t.dim(1); ++j) row.push_back(round9(t.at(i, j)));
        out.push_back(row);
    }
    return out;
}

constexpr double kPanelW = 640.0, kPanelH = 90.0, kMarginL = 48.0, kMarginT = 28.0, kGap = 14.0;

// One line plot per feature, with the given closed intervals shaded.
std::string series_plot(const Tensor& x, const std::string& title,
                        const std::vector<std::pair<std::pair<int, int>, double>>& shaded) {
    const int d = x.dim(0), len = x.dim(1);
    SvgDocument svg(kMarginL + kPanelW + 16.0, kMarginT + d * (kPanelH + kGap) + 8.0);
    svg.text(kMarginL, 18.0, title, 13.0);
    const double dx = len > 1 ? kPanelW / (len - 1) : 0.0;
    for (int m = 0; m < d; ++m) {
        const double top = kMarginT + m * (kPanelH + kGap);
        double lo = x.at(m, 0), hi = x.at(m, 0);
        for (int t = 0; t < len; ++t) {
            lo = std::min(lo, x.at(m, t));
            hi = std::max(hi, x.at(m, t));
        }
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
        svg.rect(kMarginL, top, kPanelW, kPanelH, "#ffffff", 1.0, "stroke=\"#cccccc\"");
        for (const auto& [seg, opacity] : shaded) {
            const double x0 = kMarginL + seg.first * dx - (len > 1 ? dx / 2 : 0.0);
            const double w = (seg.second - seg.first) * dx + (len > 1 ? dx : kPanelW);
            svg.rect(std::max(kMarginL, x0), top, std::min(w, kMarginL + kPanelW - std::max(kMarginL, x0)), kPanelH,
                     "#f2c14e", opacity, "class=\"segment\" data-start=\"" + std::to_string(seg.first) +
                                             "\" data-end=\"" + std::to_string(seg.second) + "\"");
        }
        std::vector<double> xs, ys;
        for (int t = 0; t < len; ++t) {
            xs.push_back(kMarginL + t * dx);
            ys.push_back(top + kPanelH - (x.at(m, t) - lo) / (hi - lo) * kPanelH);
        }
        svg.polyline(xs, ys, palette_color(m), "data-feature=\"" + std::to_string(m) + "\"");
        svg.text(kMarginL - 6.0, top + kPanelH / 2 + 4.0, "f" + std::to_string(m), 11.0, "end");
    }
    return svg.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
    f << text;
    if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

}  // namespace

double round9(double v) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in report");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::strtod(buf, nullptr);
}

std::vector<PrototypeCard> build_prototype_cards(const ProtoTSNetModel& model, const TimeSeriesDataset& train) {
    if (!model.proto_sources) throw std::invalid_argument("prototype cards need projected prototypes (run training first)");
    if (train.features() != model.features) throw ShapeError("training set feature count does not match the model");
    std::vector<PrototypeCard> cards;
    for (int j = 0; j < model.num_prototypes(); ++j) {
        const ProtoSource& src = (*model.proto_sources)[static_cast<std::size_t>(j)];
        if (src.series < 0 || src.series >= train.size()) {
            throw std::invalid_argument("prototype " + std::to_string(j) + " refers to series " + std::to_string(src.series) +
                                        " outside the training set");
        }
        PrototypeCard c;
        c.proto_id = j;
        c.class_id = model.proto_classes[static_cast<std::size_t>(j)];
        c.class_name = class_label(model.class_names, c.class_id);
        c.source_series = src.series;
        c.latent_offset = src.offset;
        c.input_segment = receptive_window(src.offset, src.offset + model.proto_len - 1, model.config.encoder, train.length());
        c.source = train.series(src.series);
        const int len = c.input_segment.second - c.input_segment.first + 1;
        c.waveform = Tensor(Shape{model.features, len});
        for (int m = 0; m < model.features; ++m) {
            for (int t = 0; t < len; ++t) c.waveform.at(m, t) = c.source.at(m, c.input_segment.first + t);
        }
        for (int k = 0; k < model.classes; ++k) c.class_weights.push_back(model.last_weight.at(k, j));
        cards.push_back(std::move(c));
    }
    return cards;
}

ClassificationExplanation explain_instance(const ProtoTSNetModel& model, const Tensor& x, int instance_id, int top_k,
                                           std::optional<int> label) {
    if (x.rank() != 2 || x.dim(0) != model.features) {
        throw ShapeError("explain_instance expects [" + std::to_string(model.features) + ", T], got " + shape_string(x.shape()));
    }
    if (top_k < 1) throw std::invalid_argument("top_k must be at least 1");
    const ForwardResult r = forward(x, model);
    ClassificationExplanation e;
    e.instance_id = instance_id;
    e.predicted = r.predicted();
    e.label = label;
    e.logits = r.logits;
    e.similarity = r.similarity;
    e.series = x;
    std::vector<PrototypeMatch> all;
    for (int j = 0; j < model.num_prototypes(); ++j) {
        PrototypeMatch p;
        p.proto_id = j;
        p.proto_class = model.proto_classes[static_cast<std::size_t>(j)];
        p.similarity = r.similarity[static_cast<std::size_t>(j)];
        p.latent_offset = r.best_offset[static_cast<std::size_t>(j)];
        p.input_segment = receptive_window(p.latent_offset, p.latent_offset + model.proto_len - 1, model.config.encoder, x.dim(1));
        p.contribution = p.similarity * model.last_weight.at(e.predicted, j);
        all.push_back(p);
    }
    std::stable_sort(all.begin(), all.end(), [](const PrototypeMatch& a, const PrototypeMatch& b) {
        if (a.contribution != b.contribution) return a.contribution > b.contribution;
        return a.proto_id < b.proto_id;
    });
    all.resize(std::min(all.size(), static_cast<std::size_t>(top_k)));
    e.top = std::move(all);
    return e;
}

json report_json(const ProtoTSNetModel& model, const std::vector<PrototypeCard>& cards,
                 const std::vector<ClassificationExplanation>& explanations, const std::vector<double>& importance) {
    json protos = json::array();
    for (const auto& c : cards) {
        protos.push_back({{"proto_id", c.proto_id},
                          {"class_id", c.class_id},
                          {"class_name", c.class_name},
                          {"source_series", c.source_series},
                          {"latent_offset", c.latent_offset},
                          {"input_segment", {c.input_segment.first, c.input_segment.second}},
                          {"waveform", rounded(c.waveform)},
                          {"class_weights", rounded(c.class_weights)}});
    }
    json instances = json::array();
    for (const auto& e : explanations) {
        json top = json::array();
        for (const auto& p : e.top) {
            top.push_back({{"proto_id", p.proto_id},
                           {"proto_class", p.proto_class},
                           {"similarity", round9(p.similarity)},
                           {"latent_offset", p.latent_offset},
                           {"input_segment", {p.input_segment.first, p.input_segment.second}},
                           {"contribution", round9(p.contribution)}});
        }
        instances.push_back({{"instance_id", e.instance_id},
                             {"predicted", e.predicted},
                             {"predicted_name", class_label(model.class_names, e.predicted)},
                             {"label", e.label ? json(*e.label) : json(nullptr)},
                             {"logits", rounded(e.logits)},
                             {"similarity", rounded(e.similarity)},
                             {"top", top}});
    }
    json cfg = to_json(model.config);
    return json{{"model", {{"config", cfg},
                           {"features", model.features},
                           {"classes", model.class_names},
                           {"proto_len", model.proto_len},
                           {"importance", rounded(importance)}}},
                {"prototypes", protos},
                {"instances", instances}};
}

std::string prototype_svg(const PrototypeCard& card) {
    return series_plot(card.source,
                       "prototype " + std::to_string(card.proto_id) + " (" + card.class_name + "), series " +
                           std::to_string(card.source_series) + ", steps " + std::to_string(card.input_segment.first) +
                           "-" + std::to_string(card.input_segment.second),
                       {{card.input_segment, 0.45}});
}

std::string instance_svg(const ClassificationExplanation& e, const std::vector<std::string>& class_names) {
    std::vector<std::pair<std::pair<int, int>, double>> shaded;
    double opacity = 0.45;
    for (const auto& p : e.top) {
        shaded.push_back({p.input_segment, opacity});
        opacity *= 0.5;
    }
    std::string title = "instance " + std::to_string(e.instance_id) + ": predicted " + class_label(class_names, e.predicted);
    if (!e.top.empty()) title += ", top prototype " + std::to_string(e.top.front().proto_id);
    return series_plot(e.series, title, shaded);
}

std::string importance_svg(const std::vector<double>& importance) {
    std::vector<int> order(importance.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return importance[static_cast<std::size_t>(a)] > importance[static_cast<std::size_t>(b)];
    });
    const double bar_h = 18.0, width = 420.0, left = 60.0;
    SvgDocument svg(left + width + 80.0, 36.0 + order.size() * (bar_h + 6.0));
    svg.text(left, 18.0, "feature importance", 13.0);
    double peak = 0.0;
    for (double v : importance) peak = std::max(peak, v);
    for (std::size_t k = 0; k < order.size(); ++k) {
        const int m = order[k];
        const double v = importance[static_cast<std::size_t>(m)];
        const double y = 28.0 + k * (bar_h + 6.0);
        const double w = peak > 0.0 ? v / peak * width : 0.0;
        char value[32];
        std::snprintf(value, sizeof value, "%.9g", v);
        svg.rect(left, y, w, bar_h, palette_color(m), 1.0,
                 "class=\"bar\" data-feature=\"" + std::to_string(m) + "\" data-value=\"" + value + "\"");
        svg.text(left - 6.0, y + 13.0, "f" + std::to_string(m), 11.0, "end");
        svg.text(left + w + 6.0, y + 13.0, value, 11.0);
    }
    return svg.str();
}

void export_report(const ProtoTSNetModel& model, const std::vector<PrototypeCard>& cards,
                   const std::vector<ClassificationExplanation>& explanations, const std::vector<double>& importance,
                   const std::string& dir) {
    if (cards.empty() || explanations.empty() || importance.empty()) {
        throw std::invalid_argument("export_report needs prototypes, explanations and importance scores");
    }
    const std::filesystem::path out(dir);
    std::filesystem::create_directories(out);
    write_text(out / "report.json", report_json(model, cards, explanations, importance).dump(2) + "\n");
    for (const auto& c : cards) write_text(out / ("proto_" + std::to_string(c.proto_id) + ".svg"), prototype_svg(c));
    for (const auto& e : explanations) {
        write_text(out / ("instance_" + std::to_string(e.instance_id) + ".svg"), instance_svg(e, model.class_names));
    }
    write_text(out / "importance.svg", importance_svg(importance));
}

}  // namespace prototsnet
