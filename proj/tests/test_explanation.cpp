#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <unistd.h>

#include "prototsnet/explanation.hpp"
#include "prototsnet/svg.hpp"
#include "prototsnet/trainer.hpp"
#include "support.hpp"

using namespace prototsnet;
using nlohmann::json;

namespace {

struct Fixture {
    TimeSeriesDataset train;
    ProtoTSNetModel model;
};

Fixture projected_fixture() {
    Fixture f{testing_support::small_synthetic(2, 3), {}};
    f.model = create_model(testing_support::small_synthetic_config(1), 3, 100, 4);
    f.model.class_names = f.train.class_names;
    f.model.last_weight = testing_support::random_tensor(f.model.last_weight.shape(), 4);
    project_prototypes(f.model, encode_batch(f.train.x, f.model), f.train.labels);
    return f;
}

// Subset of JSON Schema: type, required, properties, additionalProperties,
// items, minItems, maxItems, minimum.
bool type_matches(const json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "integer") return v.is_number_integer();
    if (t == "number") return v.is_number();
    if (t == "null") return v.is_null();
    if (t == "boolean") return v.is_boolean();
    return false;
}

void validate(const json& v, const json& schema, const std::string& path, std::vector<std::string>& errors) {
    if (schema.contains("type")) {
        bool ok = false;
        if (schema["type"].is_array()) {
            for (const auto& t : schema["type"]) ok |= type_matches(v, t.get<std::string>());
        } else {
            ok = type_matches(v, schema["type"].get<std::string>());
        }
        if (!ok) {
            errors.push_back(path + ": wrong type");
            return;
        }
    }
    if (schema.contains("minimum") && v.is_number() && v.get<double>() < schema["minimum"].get<double>()) {
        errors.push_back(path + ": below minimum");
    }
    if (v.is_object()) {
        for (const auto& r : schema.value("required", json::array())) {
            if (!v.contains(r.get<std::string>())) errors.push_back(path + ": missing " + r.get<std::string>());
        }
        const json props = schema.value("properties", json::object());
        for (auto it = v.begin(); it != v.end(); ++it) {
            if (props.contains(it.key())) {
                validate(it.value(), props[it.key()], path + "." + it.key(), errors);
            } else if (schema.contains("additionalProperties") && schema["additionalProperties"] == false) {
                errors.push_back(path + ": unexpected " + it.key());
            }
        }
    }
    if (v.is_array()) {
        if (schema.contains("minItems") && v.size() < schema["minItems"].get<std::size_t>()) errors.push_back(path + ": too few items");
        if (schema.contains("maxItems") && v.size() > schema["maxItems"].get<std::size_t>()) errors.push_back(path + ": too many items");
        if (schema.contains("items")) {
            for (std::size_t i = 0; i < v.size(); ++i) validate(v[i], schema["items"], path + "[" + std::to_string(i) + "]", errors);
        }
    }
}

// Checks tag nesting of a self-produced SVG; returns the element names in order.
std::vector<std::string> xml_elements(const std::string& doc, bool& well_formed) {
    std::vector<std::string> names, stack;
    well_formed = true;
    std::size_t pos = 0;
    while ((pos = doc.find('<', pos)) != std::string::npos) {
        const std::size_t end = doc.find('>', pos);
        if (end == std::string::npos) {
            well_formed = false;
            break;
        }
        std::string tag = doc.substr(pos + 1, end - pos - 1);
        pos = end + 1;
        if (tag.empty() || tag[0] == '?' || tag[0] == '!') continue;
        if (tag[0] == '/') {
            if (stack.empty() || stack.back() != tag.substr(1)) well_formed = false;
            if (!stack.empty()) stack.pop_back();
            continue;
        }
        const bool self_closing = tag.back() == '/';
        const std::string name = tag.substr(0, tag.find_first_of(" /"));
        names.push_back(name);
        if (!self_closing) stack.push_back(name);
    }
    if (!stack.empty()) well_formed = false;
    return names;
}

std::vector<std::string> attribute_values(const std::string& doc, const std::string& attr) {
    std::vector<std::string> out;
    const std::regex re(attr + "=\"([^\"]*)\"");
    for (std::sregex_iterator it(doc.begin(), doc.end(), re), end; it != end; ++it) out.push_back((*it)[1]);
    return out;
}

}  // namespace

TEST(PrototypeCards, SliceSourceSeriesOverReceptiveWindow) {
    const Fixture f = projected_fixture();
    const auto cards = build_prototype_cards(f.model, f.train);
    ASSERT_EQ(static_cast<int>(cards.size()), f.model.num_prototypes());
    for (const auto& c : cards) {
        const ProtoSource src = (*f.model.proto_sources)[static_cast<std::size_t>(c.proto_id)];
        EXPECT_EQ(c.source_series, src.series);
        EXPECT_EQ(c.class_id, f.train.labels[static_cast<std::size_t>(src.series)]);
        EXPECT_EQ(c.class_name, f.train.class_names[static_cast<std::size_t>(c.class_id)]);
        const auto window = receptive_window(src.offset, src.offset + f.model.proto_len - 1, f.model.config.encoder, 100);
        EXPECT_EQ(c.input_segment, window);
        EXPECT_LE(c.input_segment.first, src.offset);
        EXPECT_GE(c.input_segment.second, src.offset + f.model.proto_len - 1);
        ASSERT_EQ(c.waveform.dim(1), window.second - window.first + 1);
        for (int m = 0; m < 3; ++m) {
            for (int t = 0; t < c.waveform.dim(1); ++t) EXPECT_EQ(c.waveform.at(m, t), f.train.x.at(src.series, m, window.first + t));
        }
        for (int k = 0; k < 4; ++k) EXPECT_EQ(c.class_weights[static_cast<std::size_t>(k)], f.model.last_weight.at(k, c.proto_id));
    }
}

TEST(PrototypeCards, RequireProjection) {
    Fixture f = projected_fixture();
    f.model.proto_sources.reset();
    EXPECT_THROW(build_prototype_cards(f.model, f.train), std::invalid_argument);
}

TEST(Explain, LogitsDecomposeIntoSimilarityTimesWeight) {
    const Fixture f = projected_fixture();
    for (int i = 0; i < f.train.size(); ++i) {
        const auto e = explain_instance(f.model, f.train.series(i), i, f.model.num_prototypes(), f.train.labels[static_cast<std::size_t>(i)]);
        for (int k = 0; k < 4; ++k) {
            double acc = 0.0;
            for (int j = 0; j < f.model.num_prototypes(); ++j) acc += e.similarity[static_cast<std::size_t>(j)] * f.model.last_weight.at(k, j);
            EXPECT_NEAR(e.logits[static_cast<std::size_t>(k)], acc, 1e-6);
        }
        double total = 0.0;
        for (const auto& p : e.top) total += p.contribution;
        EXPECT_NEAR(total, e.logits[static_cast<std::size_t>(e.predicted)], 1e-6);
        for (std::size_t k = 1; k < e.top.size(); ++k) {
            const bool ordered = e.top[k - 1].contribution > e.top[k].contribution ||
                                 (e.top[k - 1].contribution == e.top[k].contribution && e.top[k - 1].proto_id < e.top[k].proto_id);
            EXPECT_TRUE(ordered);
        }
    }
}

TEST(Explain, TopKTiesBreakByPrototypeId) {
    Fixture f = projected_fixture();
    f.model.last_weight.fill(0.0);
    const auto e = explain_instance(f.model, f.train.series(0), 0, 3);
    ASSERT_EQ(e.top.size(), 3u);
    EXPECT_EQ(e.top[0].proto_id, 0);
    EXPECT_EQ(e.top[1].proto_id, 1);
    EXPECT_EQ(e.top[2].proto_id, 2);
    EXPECT_THROW(explain_instance(f.model, f.train.series(0), 0, 0), std::invalid_argument);
    EXPECT_THROW(explain_instance(f.model, Tensor(Shape{2, 100}), 0, 1), ShapeError);
}

TEST(Explain, MatchSegmentsCoverBestOffset) {
    const Fixture f = projected_fixture();
    const auto e = explain_instance(f.model, f.train.series(1), 1, 4);
    for (const auto& p : e.top) {
        EXPECT_EQ(p.input_segment,
                  receptive_window(p.latent_offset, p.latent_offset + f.model.proto_len - 1, f.model.config.encoder, 100));
        EXPECT_EQ(p.similarity, e.similarity[static_cast<std::size_t>(p.proto_id)]);
    }
}

TEST(Report, ValidatesAgainstSchema) {
    const Fixture f = projected_fixture();
    std::ifstream sf(std::string(PROTOTSNET_DOCS) + "/report.schema.json");
    ASSERT_TRUE(sf.good());
    const json schema = json::parse(sf);
    const auto cards = build_prototype_cards(f.model, f.train);
    std::vector<ClassificationExplanation> ex;
    ex.push_back(explain_instance(f.model, f.train.series(0), 0, 3, 0));
    ex.push_back(explain_instance(f.model, f.train.series(5), 5, 3));
    const json report = report_json(f.model, cards, ex, feature_importance(f.model));
    std::vector<std::string> errors;
    validate(report, schema, "$", errors);
    EXPECT_TRUE(errors.empty()) << errors.front();
    EXPECT_TRUE(report["instances"][1]["label"].is_null());

    json broken = report;
    broken["instances"][0].erase("top");
    broken["model"]["extra"] = 1;
    errors.clear();
    validate(broken, schema, "$", errors);
    EXPECT_EQ(errors.size(), 2u);
}

TEST(Report, FloatsRoundTripAtNineDigits) {
    const Fixture f = projected_fixture();
    const auto cards = build_prototype_cards(f.model, f.train);
    std::vector<ClassificationExplanation> ex{explain_instance(f.model, f.train.series(0), 0, 3)};
    const json report = report_json(f.model, cards, ex, feature_importance(f.model));
    const json back = json::parse(report.dump());
    EXPECT_EQ(back, report);
    for (std::size_t j = 0; j < ex[0].similarity.size(); ++j) {
        const double v = back["instances"][0]["similarity"][j].get<double>();
        EXPECT_NEAR(v, ex[0].similarity[j], 5e-9 * std::abs(ex[0].similarity[j]));
        EXPECT_EQ(v, round9(v));
    }
    EXPECT_EQ(round9(0.1234567891234), 0.123456789);
    EXPECT_EQ(round9(12345678912.0), 12345678900.0);
    EXPECT_THROW(round9(std::nan("")), NumericError);
}

TEST(Svg, PlotsAreWellFormedWithOnePolylinePerFeature) {
    const Fixture f = projected_fixture();
    const auto cards = build_prototype_cards(f.model, f.train);
    for (const std::string& doc : {prototype_svg(cards[0]), instance_svg(explain_instance(f.model, f.train.series(2), 2, 3), f.model.class_names)}) {
        bool ok = false;
        const auto names = xml_elements(doc, ok);
        EXPECT_TRUE(ok);
        ASSERT_FALSE(names.empty());
        EXPECT_EQ(names.front(), "svg");
        EXPECT_EQ(std::count(names.begin(), names.end(), "polyline"), 3);
        EXPECT_EQ(attribute_values(doc, "data-feature"), (std::vector<std::string>{"0", "1", "2"}));
    }
    const std::string proto = prototype_svg(cards[0]);
    const auto starts = attribute_values(proto, "data-start");
    ASSERT_FALSE(starts.empty());
    EXPECT_EQ(std::stoi(starts[0]), cards[0].input_segment.first);
    EXPECT_EQ(std::stoi(attribute_values(proto, "data-end")[0]), cards[0].input_segment.second);
}

TEST(Svg, ImportanceBarsDescend) {
    const std::string doc = importance_svg({0.5, 2.0, 0.0, 1.25});
    bool ok = false;
    xml_elements(doc, ok);
    EXPECT_TRUE(ok);
    EXPECT_EQ(attribute_values(doc, "data-feature"), (std::vector<std::string>{"1", "3", "0", "2"}));
    EXPECT_EQ(attribute_values(doc, "data-value"), (std::vector<std::string>{"2", "1.25", "0.5", "0"}));
}

TEST(Svg, EscapesText) {
    EXPECT_EQ(xml_escape("a<b & \"c\">"), "a&lt;b &amp; &quot;c&quot;&gt;");
    SvgDocument svg(10, 10);
    svg.text(0, 0, "x < y");
    EXPECT_NE(svg.str().find("x &lt; y"), std::string::npos);
}

TEST(Report, ExportWritesAllFiles) {
    const Fixture f = projected_fixture();
    const auto cards = build_prototype_cards(f.model, f.train);
    std::vector<ClassificationExplanation> ex{explain_instance(f.model, f.train.series(3), 3, 2)};
    const auto dir = std::filesystem::temp_directory_path() / ("prototsnet_report_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    export_report(f.model, cards, ex, feature_importance(f.model), dir.string());
    EXPECT_TRUE(std::filesystem::exists(dir / "report.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "importance.svg"));
    EXPECT_TRUE(std::filesystem::exists(dir / "instance_3.svg"));
    for (const auto& c : cards) EXPECT_TRUE(std::filesystem::exists(dir / ("proto_" + std::to_string(c.proto_id) + ".svg")));
    std::ifstream rf(dir / "report.json");
    EXPECT_EQ(json::parse(rf)["instances"][0]["instance_id"], 3);
    std::filesystem::remove_all(dir);
    EXPECT_THROW(export_report(f.model, {}, ex, {1.0}, dir.string()), std::invalid_argument);
}
