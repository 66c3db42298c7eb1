#include "dncl/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace dncl::ckpt {

namespace {

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out += char((v >> (8 * i)) & 0xff);
}
void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out += char((v >> (8 * i)) & 0xff);
}
void put_f32(std::string& out, float f) {
    uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(out, u);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    explicit Reader(const std::string& b) : buf(b) {}

    void need(size_t n) const {
        if (pos + n > buf.size()) throw CheckpointError("truncated checkpoint");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos + size_t(i)])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(buf[pos + size_t(i)])) << (8 * i);
        pos += 8;
        return v;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    float f32() {
        const uint32_t u = u32();
        float f;
        std::memcpy(&f, &u, 4);
        return f;
    }
};

} // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
    for (const NamedTensor& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

void quantize_f32(std::vector<double>& v) {
    for (double& x : v) x = double(float(x));
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
    std::string out;
    out += "DNCL";
    put_u32(out, kCheckpointVersion);
    const std::string header = c.header.dump();
    put_u64(out, header.size());
    out += header;
    put_u64(out, c.tensors.size());
    for (const NamedTensor& t : c.tensors) {
        put_u64(out, t.name.size());
        out += t.name;
        put_u32(out, uint32_t(t.shape.rank));
        for (int i = 0; i < t.shape.rank; ++i) put_u64(out, uint64_t(t.shape.dim[i]));
        if (int64_t(t.data.size()) != t.shape.numel())
            throw CheckpointError("tensor '" + t.name + "' data/shape mismatch");
        for (double x : t.data) put_f32(out, float(x));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot write checkpoint: " + path);
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw CheckpointError("short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r(buf);
    if (r.bytes(4) != "DNCL") throw CheckpointError("bad magic, not a DNCL checkpoint: " + path);
    const uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

    Checkpoint c;
    const uint64_t hlen = r.u64();
    c.header = nlohmann::json::parse(r.bytes(hlen));
    const uint64_t count = r.u64();
    c.tensors.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        NamedTensor t;
        const uint64_t nlen = r.u64();
        t.name = r.bytes(nlen);
        const uint32_t rank = r.u32();
        if (rank < 1 || rank > 3) throw CheckpointError("tensor '" + t.name + "' has bad rank");
        t.shape.rank = int(rank);
        for (uint32_t k = 0; k < rank; ++k) t.shape.dim[k] = int64_t(r.u64());
        const int64_t n = t.shape.numel();
        t.data.resize(size_t(n));
        for (int64_t k = 0; k < n; ++k) t.data[size_t(k)] = double(r.f32());
        c.tensors.push_back(std::move(t));
    }
    return c;
}

} // namespace dncl::ckpt
