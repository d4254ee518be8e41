#include "prototsnet/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

namespace prototsnet {

Tensor TimeSeriesDataset::series(int i) const {
    if (i < 0 || i >= size()) throw std::out_of_range("series index " + std::to_string(i) + " out of range");
    const std::size_t span = static_cast<std::size_t>(features()) * length();
    const auto begin = x.storage().begin() + static_cast<std::ptrdiff_t>(span * static_cast<std::size_t>(i));
    return Tensor(Shape{features(), length()}, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(span)));
}

Tensor TimeSeriesDataset::batch(std::span<const int> indices) const {
    if (indices.empty()) throw std::invalid_argument("empty batch");
    const std::size_t span = static_cast<std::size_t>(features()) * length();
    std::vector<double> out;
    out.reserve(span * indices.size());
    for (int i : indices) {
        if (i < 0 || i >= size()) throw std::out_of_range("series index " + std::to_string(i) + " out of range");
        const auto begin = x.storage().begin() + static_cast<std::ptrdiff_t>(span * static_cast<std::size_t>(i));
        out.insert(out.end(), begin, begin + static_cast<std::ptrdiff_t>(span));
    }
    return Tensor(Shape{static_cast<int>(indices.size()), features(), length()}, std::move(out));
}

std::vector<int> TimeSeriesDataset::batch_labels(std::span<const int> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (int i : indices) out.push_back(labels.at(static_cast<std::size_t>(i)));
    return out;
}

TimeSeriesDataset TimeSeriesDataset::subset(std::span<const int> indices) const {
    TimeSeriesDataset out;
    out.name = name;
    out.class_names = class_names;
    out.meta = meta;
    out.meta.original_lengths.clear();
    out.x = batch(indices);
    out.labels = batch_labels(indices);
    return out;
}

std::vector<int> TimeSeriesDataset::class_counts() const {
    std::vector<int> counts(class_names.size(), 0);
    for (int y : labels) counts.at(static_cast<std::size_t>(y))++;
    return counts;
}

void TimeSeriesDataset::validate() const {
    if (labels.empty()) throw std::invalid_argument("dataset '" + name + "' is empty");
    if (x.rank() != 3 || x.dim(0) != size()) throw ShapeError("dataset tensor does not match label count");
    for (int y : labels) {
        if (y < 0 || y >= num_classes()) throw std::invalid_argument("label " + std::to_string(y) + " has no class name");
    }
    for (const auto& c : class_names) {
        if (c.empty()) throw std::invalid_argument("empty class name");
        if (std::any_of(c.begin(), c.end(), [](unsigned char ch) { return std::isspace(ch) || ch == ':' || ch == ','; })) {
            throw std::invalid_argument("class name '" + c + "' contains a separator character");
        }
    }
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<std::string> words(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
}

bool parse_bool(const std::string& key, const std::string& value, int line) {
    const std::string v = lower(trim(value));
    if (v == "true") return true;
    if (v == "false") return false;
    throw FormatError("line " + std::to_string(line) + ": @" + key + " expects true/false, got '" + value + "'");
}

int parse_positive(const std::string& key, const std::string& value, int line) {
    const std::string v = trim(value);
    char* end = nullptr;
    const long n = std::strtol(v.c_str(), &end, 10);
    if (v.empty() || *end != '\0' || n < 1) {
        throw FormatError("line " + std::to_string(line) + ": @" + key + " expects a positive integer, got '" + value + "'");
    }
    return static_cast<int>(n);
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

TimeSeriesDataset parse_ts_text(const std::string& text, const std::string& name) {
    TimeSeriesDataset ds;
    ds.name = name;

    bool in_data = false;
    bool has_class_label = false;
    int declared_dims = 0;
    bool timestamps = false;
    std::vector<std::vector<std::vector<double>>> records;  // [n][d][len]
    std::vector<std::string> raw_labels;

    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;

        if (!in_data) {
            if (t[0] != '@') throw FormatError("line " + std::to_string(lineno) + ": data before @data");
            const std::size_t sp = t.find_first_of(" \t");
            const std::string key = lower(t.substr(1, sp == std::string::npos ? std::string::npos : sp - 1));
            const std::string value = sp == std::string::npos ? "" : trim(t.substr(sp));
            if (key == "data") {
                in_data = true;
                continue;
            }
            if (key.empty()) throw FormatError("line " + std::to_string(lineno) + ": empty header directive");
            ds.meta.header[key] = value;
            if (key == "problemname") {
                if (value.empty()) throw FormatError("line " + std::to_string(lineno) + ": @problemName without a name");
                ds.name = value;
            } else if (key == "timestamps") {
                timestamps = parse_bool(key, value, lineno);
            } else if (key == "missing" || key == "equallength") {
                parse_bool(key, value, lineno);
            } else if (key == "univariate") {
                if (parse_bool(key, value, lineno)) declared_dims = 1;
            } else if (key == "dimension" || key == "dimensions") {
                declared_dims = parse_positive(key, value, lineno);
            } else if (key == "serieslength") {
                parse_positive(key, value, lineno);
            } else if (key == "classlabel") {
                const auto toks = words(value);
                if (toks.empty()) throw FormatError("line " + std::to_string(lineno) + ": @classLabel without a value");
                if (!parse_bool(key, toks[0], lineno)) throw FormatError("datasets without class labels are not supported");
                if (toks.size() < 2) throw FormatError("line " + std::to_string(lineno) + ": @classLabel true lists no labels");
                ds.class_names.assign(toks.begin() + 1, toks.end());
                has_class_label = true;
            } else if (key == "targetlabel") {
                if (parse_bool(key, value, lineno)) throw FormatError("regression datasets are not supported");
            }
            continue;
        }

        if (timestamps) throw FormatError("time-stamped series are not supported");
        auto fields = split(t, ':');
        if (fields.size() < 2) throw FormatError("line " + std::to_string(lineno) + ": record without a class label");
        raw_labels.push_back(trim(fields.back()));
        fields.pop_back();
        const int dims = static_cast<int>(fields.size());
        if (declared_dims == 0) declared_dims = dims;
        if (dims != declared_dims) {
            throw FormatError("line " + std::to_string(lineno) + ": record has " + std::to_string(dims) +
                              " dimensions, expected " + std::to_string(declared_dims));
        }
        std::vector<std::vector<double>> rec;
        for (const std::string& f : fields) {
            std::vector<double> values;
            for (const std::string& tok : split(f, ',')) {
                const std::string v = trim(tok);
                if (v == "?" || lower(v) == "nan") {
                    values.push_back(0.0);
                    ds.meta.missing_filled = true;
                    continue;
                }
                char* end = nullptr;
                const double d = std::strtod(v.c_str(), &end);
                if (v.empty() || *end != '\0') {
                    throw FormatError("line " + std::to_string(lineno) + ": bad value '" + v + "'");
                }
                values.push_back(d);
            }
            rec.push_back(std::move(values));
        }
        records.push_back(std::move(rec));
    }

    if (!has_class_label) throw FormatError("missing @classLabel header");
    if (!in_data) throw FormatError("missing @data section");
    if (records.empty()) throw FormatError("empty data section");

    std::size_t len = 0;
    for (const auto& rec : records) {
        std::size_t rec_len = 0;
        for (const auto& dim : rec) rec_len = std::max(rec_len, dim.size());
        ds.meta.original_lengths.push_back(static_cast<int>(rec_len));
        for (const auto& dim : rec) {
            if (dim.size() != rec.front().size()) ds.meta.padded = true;
        }
        if (len != 0 && rec_len != len) ds.meta.padded = true;
        len = std::max(len, rec_len);
    }

    const int n = static_cast<int>(records.size());
    ds.x = Tensor(Shape{n, declared_dims, static_cast<int>(len)});
    for (int i = 0; i < n; ++i) {
        for (int m = 0; m < declared_dims; ++m) {
            const auto& v = records[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)];
            for (std::size_t t = 0; t < v.size(); ++t) ds.x.at(i, m, static_cast<int>(t)) = v[t];
        }
        const std::string& lab = raw_labels[static_cast<std::size_t>(i)];
        const auto it = std::find(ds.class_names.begin(), ds.class_names.end(), lab);
        if (it == ds.class_names.end()) throw FormatError("record " + std::to_string(i) + ": unknown class label '" + lab + "'");
        ds.labels.push_back(static_cast<int>(it - ds.class_names.begin()));
    }
    return ds;
}

TimeSeriesDataset parse_ts(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    std::string name = path;
    const std::size_t slash = name.find_last_of('/');
    if (slash != std::string::npos) name = name.substr(slash + 1);
    return parse_ts_text(ss.str(), name);
}

std::string format_ts(const TimeSeriesDataset& data) {
    data.validate();
    std::ostringstream os;
    os << "# written by prototsnet\n";
    os << "@problemName " << (data.name.empty() ? "dataset" : data.name) << "\n";
    os << "@timeStamps false\n";
    os << "@missing false\n";
    os << "@univariate " << (data.features() == 1 ? "true" : "false") << "\n";
    if (data.features() > 1) os << "@dimensions " << data.features() << "\n";
    os << "@equalLength true\n";
    os << "@seriesLength " << data.length() << "\n";
    os << "@classLabel true";
    for (const auto& c : data.class_names) os << ' ' << c;
    os << "\n@data\n";
    for (int i = 0; i < data.size(); ++i) {
        for (int m = 0; m < data.features(); ++m) {
            for (int t = 0; t < data.length(); ++t) {
                if (t) os << ',';
                os << format_double(data.x.at(i, m, t));
            }
            os << ':';
        }
        os << data.class_names[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])] << '\n';
    }
    return os.str();
}

void write_ts(const TimeSeriesDataset& data, const std::string& path) {
    const std::string text = format_ts(data);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << text;
    if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

void write_dataset_csv(const TimeSeriesDataset& data, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << "series,feature,t,value,label\n";
    for (int i = 0; i < data.size(); ++i) {
        const std::string& label = data.class_names[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])];
        for (int m = 0; m < data.features(); ++m) {
            for (int t = 0; t < data.length(); ++t) {
                f << i << ',' << m << ',' << t << ',' << format_double(data.x.at(i, m, t)) << ',' << label << '\n';
            }
        }
    }
    if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

namespace {

double saw(int t) { return static_cast<double>(t % 10) / 9.0; }
double rect(int t) { return (t % 10) < 5 ? 1.0 : 0.0; }

}  // namespace

TimeSeriesDataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_per_class < 1) throw std::invalid_argument("n_per_class must be positive");
    if (spec.noise_std < 0.0) throw std::invalid_argument("noise_std must be non-negative");
    constexpr int classes = 4, d = 3, len = kSyntheticLength;
    // (feature 0, feature 1) pattern per class, true = saw
    constexpr bool saw_pattern[classes][2] = {{true, false}, {false, true}, {true, true}, {false, false}};

    TimeSeriesDataset ds;
    ds.name = "Synthetic";
    ds.class_names = {"saw-rect", "rect-saw", "saw-saw", "rect-rect"};
    const int n = classes * spec.n_per_class;
    ds.x = Tensor(Shape{n, d, len});
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        const int c = i % classes;
        ds.labels.push_back(c);
        for (int m = 0; m < d; ++m) {
            for (int t = 0; t < len; ++t) {
                double v;
                if (m < 2 && t < kSyntheticSignificant) {
                    v = saw_pattern[c][m] ? saw(t) : rect(t);
                } else {
                    v = uniform(rng);
                }
                ds.x.at(i, m, t) = v + spec.noise_std * noise(rng);
            }
        }
    }
    ds.meta.header["problemname"] = ds.name;
    return ds;
}

Normalization fit_normalization(const TimeSeriesDataset& data) {
    Normalization stats;
    const int d = data.features();
    const double count = static_cast<double>(data.size()) * data.length();
    for (int m = 0; m < d; ++m) {
        double sum = 0.0;
        for (int i = 0; i < data.size(); ++i) {
            for (int t = 0; t < data.length(); ++t) sum += data.x.at(i, m, t);
        }
        const double mean = sum / count;
        double sq = 0.0;
        for (int i = 0; i < data.size(); ++i) {
            for (int t = 0; t < data.length(); ++t) {
                const double diff = data.x.at(i, m, t) - mean;
                sq += diff * diff;
            }
        }
        double sd = std::sqrt(sq / count);
        if (!(sd > 0.0)) sd = 1.0;
        stats.mean.push_back(mean);
        stats.stddev.push_back(sd);
    }
    return stats;
}

TimeSeriesDataset apply_normalization(const TimeSeriesDataset& data, const Normalization& stats) {
    if (stats.mean.size() != static_cast<std::size_t>(data.features())) {
        throw ShapeError("normalization has " + std::to_string(stats.mean.size()) + " features, dataset has " +
                         std::to_string(data.features()));
    }
    TimeSeriesDataset out = data;
    for (int i = 0; i < data.size(); ++i) {
        for (int m = 0; m < data.features(); ++m) {
            for (int t = 0; t < data.length(); ++t) {
                out.x.at(i, m, t) = (data.x.at(i, m, t) - stats.mean[static_cast<std::size_t>(m)]) /
                                    stats.stddev[static_cast<std::size_t>(m)];
            }
        }
    }
    return out;
}

std::pair<TimeSeriesDataset, Normalization> znormalize(const TimeSeriesDataset& data) {
    Normalization stats = fit_normalization(data);
    return {apply_normalization(data, stats), stats};
}

std::vector<Fold> kfold_splits(std::span<const int> labels, int k, std::uint64_t seed) {
    const int n = static_cast<int>(labels.size());
    if (k < 2) throw std::invalid_argument("k-fold needs k >= 2");
    if (k > n) throw std::invalid_argument("k-fold with k=" + std::to_string(k) + " exceeds " + std::to_string(n) + " samples");

    std::mt19937_64 rng(seed);
    std::vector<std::vector<int>> by_class;
    for (int i = 0; i < n; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0) throw std::invalid_argument("negative label");
        if (static_cast<std::size_t>(y) >= by_class.size()) by_class.resize(static_cast<std::size_t>(y) + 1);
        by_class[static_cast<std::size_t>(y)].push_back(i);
    }
    bool stratified = true;
    for (const auto& members : by_class) {
        if (!members.empty() && static_cast<int>(members.size()) < k) stratified = false;
    }
    if (!stratified) {
        std::clog << "warning: a class has fewer than " << k << " members; folds are not stratified\n";
        std::vector<int> all(static_cast<std::size_t>(n));
        std::iota(all.begin(), all.end(), 0);
        by_class = {all};
    }

    std::vector<std::vector<int>> val(static_cast<std::size_t>(k));
    int next = 0;
    for (auto& members : by_class) {
        std::shuffle(members.begin(), members.end(), rng);
        for (int idx : members) {
            val[static_cast<std::size_t>(next)].push_back(idx);
            next = (next + 1) % k;
        }
    }

    std::vector<Fold> folds(static_cast<std::size_t>(k));
    for (int f = 0; f < k; ++f) {
        Fold& fold = folds[static_cast<std::size_t>(f)];
        fold.val = val[static_cast<std::size_t>(f)];
        std::sort(fold.val.begin(), fold.val.end());
        for (int g = 0; g < k; ++g) {
            if (g != f) fold.train.insert(fold.train.end(), val[static_cast<std::size_t>(g)].begin(), val[static_cast<std::size_t>(g)].end());
        }
        std::sort(fold.train.begin(), fold.train.end());
    }
    return folds;
}

}  // namespace prototsnet
