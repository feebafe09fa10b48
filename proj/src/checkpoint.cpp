#include "vtc/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "vtc/util.hpp"

namespace vtc {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'V', 'T', 'C', 'C', 'K', 'P', 'T', '1'};
constexpr int kVersion = 1;

std::string double_bits_hex(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    return hex64(bits);
}

double double_from_bits_hex(const std::string& s) {
    uint64_t bits = std::stoull(s, nullptr, 16);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

}  // namespace

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["blocks"] = cfg.blocks;
    j["d_model"] = cfg.d_model;
    j["heads"] = cfg.heads;
    j["patch"] = cfg.patch;
    j["frames"] = cfg.frames;
    j["height"] = cfg.height;
    j["width"] = cfg.width;
    j["channels"] = cfg.channels;
    j["mlp_ratio"] = cfg.mlp_ratio;
    nlohmann::json heads = nlohmann::json::array();
    for (const HeadSpec& h : cfg.head_table) heads.push_back({{"dataset_id", h.dataset_id}, {"classes", h.classes}});
    j["head_table"] = heads;
    return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.blocks = j.at("blocks").get<int>();
    cfg.d_model = j.at("d_model").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.patch = j.at("patch").get<int>();
    cfg.frames = j.at("frames").get<int>();
    cfg.height = j.at("height").get<int>();
    cfg.width = j.at("width").get<int>();
    cfg.channels = j.at("channels").get<int>();
    cfg.mlp_ratio = j.at("mlp_ratio").get<int>();
    for (const auto& h : j.at("head_table"))
        cfg.head_table.push_back(HeadSpec{h.at("dataset_id").get<std::string>(), h.at("classes").get<int>()});
    cfg.validate();
    return cfg;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ModelParams& params, const TrainerSnapshot* run) {
    nlohmann::json manifest;
    manifest["version"] = kVersion;
    manifest["model"] = model_config_to_json(cfg);

    nlohmann::json arrays = nlohmann::json::array();
    int64_t total_floats = 0;
    std::string payload;
    auto append_array = [&](const std::string& name, const Shape& shape, const std::string& kind,
                            Partition part, const std::string& head_id, const std::vector<double>& vals) {
        arrays.push_back({{"name", name},
                          {"shape", shape},
                          {"kind", kind},
                          {"partition", partition_name(part)},
                          {"head_id", head_id}});
        total_floats += static_cast<int64_t>(vals.size());
        const size_t off = payload.size();
        payload.resize(off + vals.size() * sizeof(float));
        auto* out = reinterpret_cast<float*>(payload.data() + off);
        for (size_t i = 0; i < vals.size(); ++i) out[i] = static_cast<float>(vals[i]);
    };

    for (const ParamEntry& e : params.entries())
        append_array(e.name, e.tensor.shape, "param", e.partition, e.head_id, e.tensor.values);

    if (run) {
        for (const auto& [name, v] : run->velocity) {
            const ParamEntry* owner = nullptr;
            for (const ParamEntry& e : params.entries())
                if (e.name == name) owner = &e;
            if (!owner) fail("velocity buffer '", name, "' has no matching parameter");
            append_array(name, owner->tensor.shape, "velocity", owner->partition, owner->head_id, v);
        }
        nlohmann::json rs;
        rs["step"] = run->step;
        rs["train_config_hash"] = hex64(run->train_config_hash);
        nlohmann::json cursors;
        for (const auto& [id, c] : run->sampler_cursors) cursors[id] = {{"round", c.round}, {"pos", c.pos}};
        rs["sampler_cursors"] = cursors;
        nlohmann::json accum;
        for (const auto& [id, a] : run->loss_accum)
            accum[id] = {{"sum_bits", double_bits_hex(a.sum)}, {"count", a.count}};
        rs["loss_accum"] = accum;
        manifest["run_state"] = rs;
    } else {
        manifest["run_state"] = nullptr;
    }
    manifest["arrays"] = arrays;
    manifest["payload_floats"] = total_floats;

    const std::string mstr = manifest.dump();
    std::string file;
    file.reserve(sizeof(kMagic) + 8 + mstr.size() + payload.size());
    file.append(kMagic, sizeof(kMagic));
    uint64_t mlen = mstr.size();
    file.append(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
    file.append(mstr);
    file.append(payload);
    write_file_atomic(path, file);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string file = read_file(path);
    if (file.size() < sizeof(kMagic) + 8 || std::memcmp(file.data(), kMagic, sizeof(kMagic)) != 0)
        fail("corrupt checkpoint '", path.string(), "': bad magic or header");
    uint64_t mlen;
    std::memcpy(&mlen, file.data() + sizeof(kMagic), sizeof(mlen));
    if (sizeof(kMagic) + 8 + mlen > file.size())
        fail("corrupt checkpoint '", path.string(), "': truncated manifest");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(file.substr(sizeof(kMagic) + 8, mlen));
    } catch (const std::exception& e) {
        fail("corrupt checkpoint '", path.string(), "': manifest not parseable (", e.what(), ")");
    }
    if (manifest.at("version").get<int>() != kVersion)
        fail("checkpoint '", path.string(), "' has version ", manifest.at("version").get<int>(),
             ", expected ", kVersion);

    const int64_t total_floats = manifest.at("payload_floats").get<int64_t>();
    const size_t payload_off = sizeof(kMagic) + 8 + mlen;
    if (file.size() - payload_off != static_cast<size_t>(total_floats) * sizeof(float))
        fail("corrupt checkpoint '", path.string(), "': payload holds ",
             (file.size() - payload_off) / sizeof(float), " floats, manifest declares ", total_floats);

    Checkpoint ck{model_config_from_json(manifest.at("model")), ModelParams{}, std::nullopt};

    std::vector<ParamEntry> entries;
    TrainerSnapshot snap;
    bool has_velocity = false;
    size_t off = payload_off;
    for (const auto& a : manifest.at("arrays")) {
        const std::string name = a.at("name").get<std::string>();
        const Shape shape = a.at("shape").get<Shape>();
        const int64_t count = numel(shape);
        std::vector<double> vals(static_cast<size_t>(count));
        const auto* in = reinterpret_cast<const float*>(file.data() + off);
        for (int64_t i = 0; i < count; ++i) vals[static_cast<size_t>(i)] = static_cast<double>(in[i]);
        off += static_cast<size_t>(count) * sizeof(float);
        const std::string kind = a.at("kind").get<std::string>();
        if (kind == "param") {
            entries.push_back(ParamEntry{name, partition_from_name(a.at("partition").get<std::string>()),
                                         a.at("head_id").get<std::string>(),
                                         Tensor(shape, std::move(vals))});
        } else if (kind == "velocity") {
            snap.velocity[name] = std::move(vals);
            has_velocity = true;
        } else {
            fail("corrupt checkpoint '", path.string(), "': unknown array kind '", kind, "'");
        }
    }
    ck.params = make_params_for_entries(std::move(entries));

    // Structural check against what this model config defines.
    {
        ModelParams skeleton = ModelParams::init(ck.model, 0, false);
        const auto& got = ck.params.entries();
        const auto& want = skeleton.entries();
        if (got.size() != want.size())
            fail("checkpoint '", path.string(), "' holds ", got.size(), " parameters, config defines ",
                 want.size());
        for (size_t i = 0; i < got.size(); ++i) {
            if (got[i].name != want[i].name || got[i].tensor.shape != want[i].tensor.shape ||
                got[i].partition != want[i].partition)
                fail("checkpoint '", path.string(), "' parameter '", got[i].name, "' ",
                     shape_str(got[i].tensor.shape), " does not match config's '", want[i].name, "' ",
                     shape_str(want[i].tensor.shape));
        }
    }

    const auto& rs = manifest.at("run_state");
    if (!rs.is_null()) {
        snap.step = rs.at("step").get<int64_t>();
        snap.train_config_hash = std::stoull(rs.at("train_config_hash").get<std::string>(), nullptr, 16);
        for (const auto& [id, c] : rs.at("sampler_cursors").items())
            snap.sampler_cursors[id] = SamplerCursor{c.at("round").get<int64_t>(), c.at("pos").get<int64_t>()};
        for (const auto& [id, a] : rs.at("loss_accum").items())
            snap.loss_accum[id] =
                LossAccum{double_from_bits_hex(a.at("sum_bits").get<std::string>()), a.at("count").get<int64_t>()};
        ck.run = std::move(snap);
    } else if (has_velocity) {
        fail("corrupt checkpoint '", path.string(), "': velocity arrays without run state");
    }
    return ck;
}

uint64_t file_hash(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    return fnv1a(data.data(), data.size());
}

}  // namespace vtc
