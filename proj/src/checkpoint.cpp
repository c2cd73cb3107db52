#include "ddrid/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ddrid::ckpt {
namespace {

constexpr char kMagic[8] = {'D', 'D', 'R', 'I', 'D', 'C', 'K', '1'};
constexpr uint32_t kVersion = 1;

void wbytes(std::ofstream& o, const void* p, size_t n) {
    o.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
void wu8(std::ofstream& o, uint8_t v) { wbytes(o, &v, 1); }
void wu32(std::ofstream& o, uint32_t v) {
    uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    wbytes(o, b, 4);
}
void wu64(std::ofstream& o, uint64_t v) {
    wu32(o, uint32_t(v));
    wu32(o, uint32_t(v >> 32));
}
void wstr(std::ofstream& o, const std::string& s) {
    wu32(o, static_cast<uint32_t>(s.size()));
    wbytes(o, s.data(), s.size());
}
void wtensor(std::ofstream& o, const Tensor& t) {
    wu8(o, static_cast<uint8_t>(t.shape.size()));
    for (int64_t d : t.shape) wu64(o, static_cast<uint64_t>(d));
    static_assert(sizeof(float) == 4);
    wbytes(o, t.v.data(), t.v.size() * 4);  // little-endian host
}

struct Reader {
    std::ifstream in;
    std::string name;
    explicit Reader(const std::filesystem::path& p) : in(p, std::ios::binary), name(p.string()) {
        if (!in) throw IoError("cannot open " + name);
    }
    void rbytes(void* p, size_t n) {
        if (!in.read(static_cast<char*>(p), static_cast<std::streamsize>(n)))
            throw CheckpointError("truncated checkpoint " + name);
    }
    uint8_t ru8() {
        uint8_t v;
        rbytes(&v, 1);
        return v;
    }
    uint32_t ru32() {
        uint8_t b[4];
        rbytes(b, 4);
        return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
               (uint32_t(b[3]) << 24);
    }
    uint64_t ru64() {
        const uint64_t lo = ru32();
        return lo | (uint64_t(ru32()) << 32);
    }
    std::string rstr() {
        const uint32_t n = ru32();
        if (n > (1u << 24)) throw CheckpointError("implausible string length in " + name);
        std::string s(n, '\0');
        rbytes(s.data(), n);
        return s;
    }
    Tensor rtensor() {
        const uint8_t nd = ru8();
        if (nd > 4) throw CheckpointError("implausible tensor rank in " + name);
        std::vector<int64_t> shape(nd);
        for (auto& d : shape) {
            d = static_cast<int64_t>(ru64());
            if (d < 0 || d > (int64_t(1) << 32))
                throw CheckpointError("implausible tensor dimension in " + name);
        }
        Tensor t(shape);
        rbytes(t.v.data(), t.v.size() * 4);
        return t;
    }
};

// Fixed per-layer tensor slots, in serialization order.
const std::pair<const char*, Tensor nn::LayerParams::*> kSlots[] = {
    {"w", &nn::LayerParams::w},           {"b", &nn::LayerParams::b},
    {"gamma", &nn::LayerParams::gamma},   {"beta", &nn::LayerParams::beta},
    {"run_mean", &nn::LayerParams::run_mean}, {"run_var", &nn::LayerParams::run_var},
};

void write_network(std::ofstream& o, const nn::NetworkSpec& spec,
                   const nn::NetworkParams& params) {
    wu64(o, spec.fingerprint());
    uint32_t count = 0;
    for (const auto& lp : params.layers)
        for (const auto& slot : kSlots)
            if ((lp.*slot.second).numel() > 0) ++count;
    wu32(o, count);
    for (size_t li = 0; li < params.layers.size(); ++li) {
        for (const auto& slot : kSlots) {
            const Tensor& t = params.layers[li].*slot.second;
            if (t.numel() == 0) continue;
            wstr(o, "L" + std::to_string(li) + "." + slot.first);
            wtensor(o, t);
        }
    }
}

nn::NetworkParams read_network(Reader& r, const nn::NetworkSpec& spec) {
    const uint64_t fp = r.ru64();
    if (fp != spec.fingerprint())
        throw CheckpointError("spec fingerprint mismatch in " + r.name);
    nn::NetworkParams params = nn::zeros_like(spec);
    const uint32_t count = r.ru32();
    for (uint32_t i = 0; i < count; ++i) {
        const std::string name = r.rstr();
        Tensor t = r.rtensor();
        const auto dot = name.find('.');
        if (name.empty() || name[0] != 'L' || dot == std::string::npos)
            throw CheckpointError("malformed tensor name in " + r.name);
        const size_t li = static_cast<size_t>(std::stoul(name.substr(1, dot - 1)));
        const std::string slot = name.substr(dot + 1);
        if (li >= params.layers.size())
            throw CheckpointError("tensor name out of range in " + r.name);
        Tensor* dst = nullptr;
        for (const auto& s : kSlots)
            if (slot == s.first) dst = &(params.layers[li].*s.second);
        if (dst == nullptr) throw CheckpointError("unknown tensor slot in " + r.name);
        if (!dst->same_shape(t))
            throw CheckpointError("tensor shape mismatch for " + name + " in " + r.name);
        *dst = std::move(t);
    }
    return params;
}

void write_adam(std::ofstream& o, const train::AdamState& st) {
    wu64(o, st.step);
    wu32(o, static_cast<uint32_t>(st.m.size()));
    for (const auto& t : st.m) wtensor(o, t);
    for (const auto& t : st.v) wtensor(o, t);
}

train::AdamState read_adam(Reader& r, const train::ParamGroup& group) {
    train::AdamState st;
    st.step = r.ru64();
    const uint32_t n = r.ru32();
    if (n != group.tensors.size())
        throw CheckpointError("optimizer state tensor count mismatch in " + r.name);
    st.m.resize(n);
    st.v.resize(n);
    for (auto& t : st.m) t = r.rtensor();
    for (auto& t : st.v) t = r.rtensor();
    for (size_t i = 0; i < n; ++i)
        if (!st.m[i].same_shape(*group.tensors[i]) || !st.v[i].same_shape(*group.tensors[i]))
            throw CheckpointError("optimizer state shape mismatch in " + r.name);
    return st;
}

}  // namespace

std::string train_config_text(const train::TrainConfig& cfg) {
    char buf[1024];
    std::snprintf(buf, sizeof(buf),
                  "batch_size = %d\nweight_decay = %.17g\npretrain_epochs = %d\n"
                  "finetune_epochs = %d\nlr_initial = %.17g\nlr_after = %.17g\n"
                  "lr_switch_epoch = %d\nsigma = %.17g\nseed = %llu\n"
                  "adam_beta1 = %.17g\nadam_beta2 = %.17g\nadam_eps = %.17g\n",
                  cfg.batch_size, cfg.weight_decay, cfg.pretrain_epochs, cfg.finetune_epochs,
                  cfg.lr_initial, cfg.lr_after, cfg.lr_switch_epoch, cfg.sigma,
                  static_cast<unsigned long long>(cfg.seed), cfg.adam_beta1, cfg.adam_beta2,
                  cfg.adam_eps);
    return buf;
}

train::TrainConfig parse_train_config_text(const std::string& text) {
    train::TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "batch_size") cfg.batch_size = std::stoi(val);
        else if (key == "weight_decay") cfg.weight_decay = std::stod(val);
        else if (key == "pretrain_epochs") cfg.pretrain_epochs = std::stoi(val);
        else if (key == "finetune_epochs") cfg.finetune_epochs = std::stoi(val);
        else if (key == "lr_initial") cfg.lr_initial = std::stod(val);
        else if (key == "lr_after") cfg.lr_after = std::stod(val);
        else if (key == "lr_switch_epoch") cfg.lr_switch_epoch = std::stoi(val);
        else if (key == "sigma") cfg.sigma = std::stod(val);
        else if (key == "seed") cfg.seed = std::stoull(val);
        else if (key == "adam_beta1") cfg.adam_beta1 = std::stod(val);
        else if (key == "adam_beta2") cfg.adam_beta2 = std::stod(val);
        else if (key == "adam_eps") cfg.adam_eps = std::stod(val);
        else throw CheckpointError("unknown config key in checkpoint: " + key);
    }
    return cfg;
}

void save_checkpoint(const train::TrainedModel& model, const std::filesystem::path& path) {
    std::ofstream o(path, std::ios::binary);
    if (!o) throw IoError("cannot write " + path.string());
    wbytes(o, kMagic, sizeof(kMagic));
    wu32(o, kVersion);
    wu8(o, static_cast<uint8_t>(model.kind));
    wu8(o, model.selected_score_kind < 0 ? 255 : static_cast<uint8_t>(model.selected_score_kind));
    wu8(o, model.centroid.has_template() ? 1 : 0);
    wu8(o, 0);  // reserved

    write_network(o, model.specs.encoder, model.encoder_c);
    write_network(o, model.specs.decoder, model.decoder_c);
    write_network(o, model.specs.encoder, model.encoder_n);
    write_network(o, model.specs.decoder, model.decoder_n);
    write_network(o, model.specs.discriminator, model.discriminator);

    wtensor(o, model.centroid.z_c);
    if (model.centroid.has_template()) wtensor(o, model.centroid.decoded_template);

    write_adam(o, model.opt_rc);
    write_adam(o, model.opt_rn);
    write_adam(o, model.opt_dl);

    wstr(o, train_config_text(model.config));
    if (!o) throw IoError("write failure on " + path.string());
}

train::TrainedModel load_checkpoint(const std::filesystem::path& path) {
    Reader r(path);
    char magic[8];
    r.rbytes(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw CheckpointError("not a checkpoint: " + path.string());
    const uint32_t version = r.ru32();
    if (version != kVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

    train::TrainedModel m;
    const uint8_t kind = r.ru8();
    if (kind > 1) throw CheckpointError("unknown dataset kind in " + path.string());
    m.kind = static_cast<nn::DatasetKind>(kind);
    m.specs = nn::standard_specs(m.kind);
    const uint8_t sel = r.ru8();
    m.selected_score_kind = sel == 255 ? -1 : sel;
    const bool has_template = r.ru8() != 0;
    r.ru8();  // reserved

    m.encoder_c = read_network(r, m.specs.encoder);
    m.decoder_c = read_network(r, m.specs.decoder);
    m.encoder_n = read_network(r, m.specs.encoder);
    m.decoder_n = read_network(r, m.specs.decoder);
    m.discriminator = read_network(r, m.specs.discriminator);

    m.centroid.z_c = r.rtensor();
    if (m.centroid.z_c.numel() != m.specs.encoder.output_shape().numel())
        throw CheckpointError("centroid length mismatch in " + path.string());
    if (has_template) {
        m.centroid.decoded_template = r.rtensor();
        if (m.centroid.decoded_template.numel() != m.specs.decoder.output_shape().numel())
            throw CheckpointError("decoded template size mismatch in " + path.string());
    }

    auto group_rc = train::ParamGroup::of(m.encoder_c, m.decoder_c);
    auto group_rn = train::ParamGroup::of(m.encoder_n, m.decoder_n);
    auto group_dl = train::ParamGroup::of(m.discriminator);
    m.opt_rc = read_adam(r, group_rc);
    m.opt_rn = read_adam(r, group_rn);
    m.opt_dl = read_adam(r, group_dl);

    m.config = parse_train_config_text(r.rstr());
    return m;
}

}  // namespace ddrid::ckpt
