#include "prototsnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "prototsnet/config.hpp"

namespace prototsnet {

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'P', 'T', 'S', 'N', 'C', 'K', 'P', 'T'};

class BlobWriter {
public:
    json add_f32(const std::string& name, const Tensor& t) {
        const std::size_t offset = blob.size();
        for (double v : t.data()) {
            const float f = static_cast<float>(v);
            std::uint8_t bytes[4];
            std::memcpy(bytes, &f, 4);
            blob.insert(blob.end(), bytes, bytes + 4);
        }
        return json{{"name", name}, {"shape", t.shape()}, {"dtype", "f32le"}, {"offset", offset}, {"bytes", blob.size() - offset}};
    }

    json add_u8(const std::string& name, const std::vector<std::uint8_t>& data) {
        const std::size_t offset = blob.size();
        blob.insert(blob.end(), data.begin(), data.end());
        return json{{"name", name}, {"shape", {static_cast<int>(data.size())}}, {"dtype", "u8"}, {"offset", offset}, {"bytes", data.size()}};
    }

    std::vector<std::uint8_t> blob;
};

struct Entry {
    Shape shape;
    std::string dtype;
    std::size_t offset = 0;
    std::size_t bytes = 0;
};

class BlobReader {
public:
    BlobReader(const json& tensors, const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {
        for (const auto& t : tensors) {
            Entry e;
            e.shape = t.at("shape").get<Shape>();
            e.dtype = t.at("dtype").get<std::string>();
            e.offset = t.at("offset").get<std::size_t>();
            e.bytes = t.at("bytes").get<std::size_t>();
            if (e.offset > size_ || e.bytes > size_ - e.offset) throw CheckpointError("tensor '" + t.at("name").get<std::string>() + "' lies outside the blob");
            entries_[t.at("name").get<std::string>()] = e;
        }
    }

    Tensor f32(const std::string& name) const {
        const Entry& e = find(name, "f32le");
        const std::size_t n = shape_size(e.shape);
        if (e.bytes != 4 * n) throw CheckpointError("tensor '" + name + "' size does not match its shape");
        std::vector<double> values(n);
        for (std::size_t i = 0; i < n; ++i) {
            float f;
            std::memcpy(&f, data_ + e.offset + 4 * i, 4);
            values[i] = f;
        }
        return Tensor(e.shape, std::move(values));
    }

    std::vector<std::uint8_t> u8(const std::string& name) const {
        const Entry& e = find(name, "u8");
        return {data_ + e.offset, data_ + e.offset + e.bytes};
    }

private:
    const Entry& find(const std::string& name, const std::string& dtype) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw CheckpointError("checkpoint lacks tensor '" + name + "'");
        if (it->second.dtype != dtype) throw CheckpointError("tensor '" + name + "' has dtype " + it->second.dtype);
        return it->second;
    }

    const std::uint8_t* data_;
    std::size_t size_;
    std::map<std::string, Entry> entries_;
};

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t pos) {
    if (pos + sizeof(T) > in.size()) throw CheckpointError("truncated checkpoint");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    return v;
}

struct Split {
    json manifest;
    std::size_t blob_start = 0;
};

Split split(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw CheckpointError("not a ProtoTSNet checkpoint");
    const auto version = get<std::uint32_t>(bytes, 8);
    if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const auto len = get<std::uint64_t>(bytes, 12);
    if (len > bytes.size() - 20) throw CheckpointError("truncated checkpoint manifest");
    Split s;
    try {
        s.manifest = json::parse(bytes.begin() + 20, bytes.begin() + 20 + static_cast<std::ptrdiff_t>(len));
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("corrupt manifest: ") + e.what());
    }
    s.blob_start = 20 + len;
    return s;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const ProtoTSNetModel& model) {
    BlobWriter w;
    json tensors = json::array();
    json layers = json::array();
    for (std::size_t i = 0; i < model.encoder.size(); ++i) {
        const std::string p = "encoder." + std::to_string(i);
        tensors.push_back(w.add_f32(p + ".weight", model.encoder[i].weight));
        tensors.push_back(w.add_f32(p + ".bias", model.encoder[i].bias));
        layers.push_back(json{{"groups", model.encoder[i].groups}});
    }
    tensors.push_back(w.add_f32("mix.weight", model.mix_weight));
    tensors.push_back(w.add_f32("mix.bias", model.mix_bias));
    tensors.push_back(w.add_f32("prototypes", model.prototypes));
    tensors.push_back(w.add_f32("last.weight", model.last_weight));
    tensors.push_back(w.add_u8("masks.bits", model.masks.packed_bits()));

    json sources = nullptr;
    if (model.proto_sources) {
        sources = json::array();
        for (const auto& s : *model.proto_sources) sources.push_back({s.series, s.offset});
    }
    json norm = nullptr;
    if (model.normalization) norm = json{{"mean", model.normalization->mean}, {"stddev", model.normalization->stddev}};

    const json manifest{{"format", "prototsnet-checkpoint"},
                        {"version", kCheckpointVersion},
                        {"config", to_json(model.config)},
                        {"seed", model.config.seed},
                        {"features", model.features},
                        {"classes", model.classes},
                        {"series_length", model.series_length},
                        {"proto_len", model.proto_len},
                        {"class_names", model.class_names},
                        {"proto_classes", model.proto_classes},
                        {"proto_sources", sources},
                        {"normalization", norm},
                        {"encoder_layers", layers},
                        {"masks", {{"features", model.masks.features}, {"groups", model.masks.groups},
                                   {"reception", model.masks.reception}, {"seed", model.masks.seed},
                                   {"encoding", "packed_bits_row_major"}, {"tensor", "masks.bits"}}},
                        {"tensors", tensors}};
    const std::string text = manifest.dump();
    std::vector<std::uint8_t> out(kMagic, kMagic + 8);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), w.blob.begin(), w.blob.end());
    return out;
}

ProtoTSNetModel deserialize_model(const std::vector<std::uint8_t>& bytes) {
    const Split s = split(bytes);
    const json& m = s.manifest;
    try {
        BlobReader r(m.at("tensors"), bytes.data() + s.blob_start, bytes.size() - s.blob_start);
        ProtoTSNetModel model;
        const json& cfg = m.at("config");
        model.config = model_config_from_json(cfg, cfg.at("encoder"));
        model.features = m.at("features").get<int>();
        model.classes = m.at("classes").get<int>();
        model.series_length = m.at("series_length").get<int>();
        model.proto_len = m.at("proto_len").get<int>();
        model.class_names = m.at("class_names").get<std::vector<std::string>>();
        model.proto_classes = m.at("proto_classes").get<std::vector<int>>();
        const json& mk = m.at("masks");
        model.masks = MaskSet::from_packed(mk.at("features").get<int>(), mk.at("groups").get<int>(),
                                           mk.at("reception").get<double>(), mk.at("seed").get<std::uint64_t>(),
                                           r.u8(mk.at("tensor").get<std::string>()));
        const json& layers = m.at("encoder_layers");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const std::string p = "encoder." + std::to_string(i);
            ConvLayer layer;
            layer.weight = r.f32(p + ".weight");
            layer.bias = r.f32(p + ".bias");
            layer.groups = layers[i].at("groups").get<int>();
            model.encoder.push_back(std::move(layer));
        }
        model.mix_weight = r.f32("mix.weight");
        model.mix_bias = r.f32("mix.bias");
        model.prototypes = r.f32("prototypes");
        model.last_weight = r.f32("last.weight");
        if (!m.at("proto_sources").is_null()) {
            std::vector<ProtoSource> sources;
            for (const auto& p : m.at("proto_sources")) sources.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
            model.proto_sources = std::move(sources);
        }
        if (!m.at("normalization").is_null()) {
            Normalization n;
            n.mean = m.at("normalization").at("mean").get<std::vector<double>>();
            n.stddev = m.at("normalization").at("stddev").get<std::vector<double>>();
            model.normalization = std::move(n);
        }
        if (model.num_prototypes() != model.prototypes.dim(0) || model.last_weight.dim(1) != model.num_prototypes() ||
            model.last_weight.dim(0) != model.classes) {
            throw CheckpointError("checkpoint tensor shapes are inconsistent");
        }
        return model;
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("malformed manifest: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("invalid checkpoint content: ") + e.what());
    }
}

void save_checkpoint(const ProtoTSNetModel& model, const std::string& path) {
    const auto bytes = serialize_model(model);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("failed writing '" + path + "'");
}

ProtoTSNetModel load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

std::string checkpoint_manifest(const std::vector<std::uint8_t>& bytes) { return split(bytes).manifest.dump(2); }

}  // namespace prototsnet
