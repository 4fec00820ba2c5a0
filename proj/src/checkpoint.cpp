#include "esglm/checkpoint.hpp"

#include "esglm/error.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace esglm {

using json = nlohmann::json;

namespace {

constexpr std::uint8_t kDtypeF32 = 1;

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
    void bytes(std::string_view s) { buf_.append(s); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }
    std::string take() { return std::move(buf_); }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(const std::string& buf) : buf_(buf) {}

    void need(std::size_t n) const {
        if (buf_.size() - pos_ < n) throw Error(ErrorKind::CorruptCheckpoint, "unexpected end of checkpoint data");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf_[pos_++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf_[pos_++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf_[pos_++])) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == buf_.size(); }

private:
    const std::string& buf_;
    std::size_t pos_ = 0;
};

json model_to_json(const ModelConfig& c) {
    return {{"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len}, {"hidden_dim", c.hidden_dim},
            {"num_layers", c.num_layers}, {"num_heads", c.num_heads},     {"ffn_dim", c.ffn_dim},
            {"dropout_rate", c.dropout_rate}};
}

json train_to_json(const TrainConfig& t) {
    return {{"learning_rate", t.learning_rate}, {"adam_epsilon", t.adam_epsilon}, {"adam_beta1", t.adam_beta1},
            {"adam_beta2", t.adam_beta2},       {"epochs", t.epochs},             {"batch_size", t.batch_size},
            {"seed", t.seed},                   {"f32_storage", t.f32_storage}};
}

} // namespace

const char* to_string(Stage stage) {
    switch (stage) {
    case Stage::Pretrained: return "pretrained";
    case Stage::FinetunedA: return "finetuned_a";
    case Stage::FinetunedB: return "finetuned_b";
    }
    return "unknown";
}

Stage parse_stage(const std::string& s) {
    if (s == "pretrained") return Stage::Pretrained;
    if (s == "finetuned_a") return Stage::FinetunedA;
    if (s == "finetuned_b") return Stage::FinetunedB;
    throw Error(ErrorKind::CorruptCheckpoint, "unknown stage '" + s + "'");
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    check_shapes(ckpt.params, ckpt.config);
    Writer w;
    w.bytes(std::string_view(kCheckpointMagic, 4));
    w.u32(kCheckpointVersion);
    const json meta = {{"model", model_to_json(ckpt.config)},
                       {"stage", to_string(ckpt.meta.stage)},
                       {"seed", ckpt.meta.seed},
                       {"train", train_to_json(ckpt.meta.train)}};
    w.str(meta.dump());
    std::uint32_t count = 0;
    ckpt.params.for_each([&](const std::string&, const Matrix&) { ++count; });
    w.u32(count);
    ckpt.params.for_each([&](const std::string& name, const Matrix& m) {
        w.str(name);
        w.u8(kDtypeF32);
        w.u32(2);
        w.u64(static_cast<std::uint64_t>(m.rows()));
        w.u64(static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.size(); ++i) w.f32(static_cast<float>(m.data()[i]));
    });
    return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    if (bytes.size() < 4) throw Error(ErrorKind::CorruptCheckpoint, "file shorter than the magic header");
    if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
        throw Error(ErrorKind::NotACheckpoint, "missing ESGB magic");
    Reader r(bytes);
    for (int i = 0; i < 4; ++i) r.u8();
    const std::uint32_t version = r.u32();
    if (version > kCheckpointVersion)
        throw Error(ErrorKind::UnsupportedVersion, "checkpoint version " + std::to_string(version) +
                                                       " is newer than supported version " +
                                                       std::to_string(kCheckpointVersion));
    if (version == 0) throw Error(ErrorKind::CorruptCheckpoint, "checkpoint version 0");

    Checkpoint ckpt;
    try {
        const json meta = json::parse(r.str());
        const json& m = meta.at("model");
        ckpt.config.vocab_size = m.at("vocab_size").get<std::size_t>();
        ckpt.config.max_seq_len = m.at("max_seq_len").get<std::size_t>();
        ckpt.config.hidden_dim = m.at("hidden_dim").get<std::size_t>();
        ckpt.config.num_layers = m.at("num_layers").get<std::size_t>();
        ckpt.config.num_heads = m.at("num_heads").get<std::size_t>();
        ckpt.config.ffn_dim = m.at("ffn_dim").get<std::size_t>();
        ckpt.config.dropout_rate = m.at("dropout_rate").get<double>();
        ckpt.meta.stage = parse_stage(meta.at("stage").get<std::string>());
        ckpt.meta.seed = meta.at("seed").get<std::uint64_t>();
        const json& t = meta.at("train");
        ckpt.meta.train.learning_rate = t.at("learning_rate").get<double>();
        ckpt.meta.train.adam_epsilon = t.at("adam_epsilon").get<double>();
        ckpt.meta.train.adam_beta1 = t.at("adam_beta1").get<double>();
        ckpt.meta.train.adam_beta2 = t.at("adam_beta2").get<double>();
        ckpt.meta.train.epochs = t.at("epochs").get<std::size_t>();
        ckpt.meta.train.batch_size = t.at("batch_size").get<std::size_t>();
        ckpt.meta.train.seed = t.at("seed").get<std::uint64_t>();
        ckpt.meta.train.f32_storage = t.at("f32_storage").get<bool>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::CorruptCheckpoint, std::string("bad metadata: ") + e.what());
    }
    try {
        ckpt.config.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::CorruptCheckpoint, e.what());
    }

    const auto specs = tensor_specs(ckpt.config);
    const std::uint32_t count = r.u32();
    if (count != specs.size())
        throw Error(ErrorKind::CorruptCheckpoint, "expected " + std::to_string(specs.size()) + " tensors, found " +
                                                      std::to_string(count));
    std::vector<Matrix> tensors;
    tensors.reserve(count);
    for (const auto& spec : specs) {
        const std::string name = r.str();
        if (name != spec.name)
            throw Error(ErrorKind::CorruptCheckpoint, "expected tensor " + spec.name + ", found " + name);
        if (r.u8() != kDtypeF32) throw Error(ErrorKind::CorruptCheckpoint, name + ": unsupported dtype");
        if (r.u32() != 2) throw Error(ErrorKind::CorruptCheckpoint, name + ": expected rank 2");
        const std::uint64_t rows = r.u64();
        const std::uint64_t cols = r.u64();
        if (rows != spec.rows || cols != spec.cols)
            throw Error(ErrorKind::CorruptCheckpoint, name + ": dims disagree with the embedded config");
        r.need(static_cast<std::size_t>(rows * cols * 4));
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const float f = r.f32();
            if (!std::isfinite(f)) throw Error(ErrorKind::CorruptCheckpoint, name + ": non-finite value");
            m.data()[i] = static_cast<double>(f);
        }
        tensors.push_back(std::move(m));
    }
    if (!r.done()) throw Error(ErrorKind::CorruptCheckpoint, "trailing bytes after last tensor");

    ckpt.params.layers.resize(ckpt.config.num_layers);
    std::size_t i = 0;
    ckpt.params.for_each([&](const std::string&, Matrix& m) { m = std::move(tensors[i++]); });
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const std::string bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write checkpoint " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open checkpoint " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str());
}

} // namespace esglm
