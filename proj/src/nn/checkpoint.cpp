#include "ecg/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

namespace ecg::nn {

namespace {

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    std::vector<unsigned char> bytes;
};

class Reader {
public:
    explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes_[pos_++]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw Error(ErrorKind::CorruptCheckpoint, "truncated header");
    }

    const std::vector<unsigned char>& bytes_;
    std::size_t pos_ = 0;
};

std::uint32_t narrow(std::size_t v) {
    if (v > std::numeric_limits<std::uint32_t>::max()) throw Error(ErrorKind::InvalidConfig, "dimension too large");
    return static_cast<std::uint32_t>(v);
}

void write_layer(Writer& w, const LayerSpec& s) {
    w.u32(static_cast<std::uint32_t>(s.kind));
    w.u32(narrow(s.units));
    w.u32(narrow(s.kernel));
    w.u32(narrow(s.pool));
    w.f64(s.rate);
}

LayerSpec read_layer(Reader& r) {
    LayerSpec s;
    const std::uint32_t kind = r.u32();
    if (kind < 1 || kind > 8) throw Error(ErrorKind::CorruptCheckpoint, "unknown layer kind " + std::to_string(kind));
    s.kind = static_cast<LayerKind>(kind);
    s.units = r.u32();
    s.kernel = r.u32();
    s.pool = r.u32();
    s.rate = r.f64();
    return s;
}

}  // namespace

std::size_t checkpoint_header_size(const ModelConfig& config) {
    const std::size_t fixed = 4 + 4 + 3 * 4 + 2 * 8 + 8 + 2 * 4 + 8;
    return fixed + (config.encoder.size() + config.classifier.size()) * (4 * 4 + 8);
}

std::vector<unsigned char> encode_checkpoint(const ModelState& state) {
    const auto& c = state.config;
    Writer w;
    for (char ch : kCheckpointMagic) w.bytes.push_back(static_cast<unsigned char>(ch));
    w.u32(kCheckpointVersion);
    w.u32(narrow(c.input_channels));
    w.u32(narrow(c.latent_dim));
    w.u32(c.include_log_var_head ? 1 : 0);
    w.f64(c.bn_momentum);
    w.f64(c.bn_epsilon);
    w.u64(c.seed);
    w.u32(narrow(c.encoder.size()));
    w.u32(narrow(c.classifier.size()));
    for (const auto& s : c.encoder) write_layer(w, s);
    for (const auto& s : c.classifier) write_layer(w, s);
    w.u64(state.counts().total);
    for (const auto& b : state.blocks) {
        for (double v : b.value) w.f64(v);
    }
    return std::move(w.bytes);
}

ModelState decode_checkpoint(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
        throw Error(ErrorKind::CorruptCheckpoint, "bad magic");
    }
    std::vector<unsigned char> tail(bytes.begin() + 4, bytes.end());
    Reader r(tail);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw Error(ErrorKind::CorruptCheckpoint, "unsupported format version " + std::to_string(version));
    }
    ModelConfig c;
    c.input_channels = r.u32();
    c.latent_dim = r.u32();
    const std::uint32_t log_var = r.u32();
    if (log_var > 1) throw Error(ErrorKind::CorruptCheckpoint, "bad log-var flag");
    c.include_log_var_head = log_var == 1;
    c.bn_momentum = r.f64();
    c.bn_epsilon = r.f64();
    c.seed = r.u64();
    const std::uint32_t n_enc = r.u32();
    const std::uint32_t n_cls = r.u32();
    if (n_enc > 4096 || n_cls > 4096) throw Error(ErrorKind::CorruptCheckpoint, "implausible layer count");
    for (std::uint32_t i = 0; i < n_enc; ++i) c.encoder.push_back(read_layer(r));
    for (std::uint32_t i = 0; i < n_cls; ++i) c.classifier.push_back(read_layer(r));
    const std::uint64_t count = r.u64();

    ModelState state;
    try {
        state = build_model(c);
    } catch (const Error& e) {
        throw Error(ErrorKind::CorruptCheckpoint, "invalid layer manifest: " + e.detail());
    }
    if (count != state.counts().total) {
        throw Error(ErrorKind::CorruptCheckpoint, "manifest implies " + std::to_string(state.counts().total) +
                                                      " values, header says " + std::to_string(count));
    }
    if (r.remaining() != count * 8) {
        throw Error(ErrorKind::CorruptCheckpoint, "expected " + std::to_string(count * 8) + " bytes of values, found " +
                                                      std::to_string(r.remaining()));
    }
    for (auto& b : state.blocks) {
        for (auto& v : b.value) v = r.f64();
    }
    return state;
}

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(state);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::IoFailure, "short write to " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot read " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace ecg::nn
