#include "lptr/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "lptr/core/error.hpp"

namespace lptr::trainer {

namespace {

constexpr char kMagic[8] = {'L', 'P', 'T', 'R', 'C', 'K', 'P', '1'};

void put_u32(std::string& out, uint32_t v) { out.append(reinterpret_cast<char*>(&v), 4); }
void put_u64(std::string& out, uint64_t v) { out.append(reinterpret_cast<char*>(&v), 8); }
void put_i32(std::string& out, int32_t v) { out.append(reinterpret_cast<char*>(&v), 4); }
void put_i64(std::string& out, int64_t v) { out.append(reinterpret_cast<char*>(&v), 8); }

void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out += s;
}

void put_tensor_f64(std::string& out, const Tensor& t) {
    put_u32(out, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) put_i32(out, d);
    out.append(reinterpret_cast<const char*>(t.data.data()),
               t.data.size() * sizeof(double));
}

void put_tensor_f32(std::string& out, const Tensor& t) {
    put_u32(out, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) put_i32(out, d);
    std::vector<float> f(t.data.begin(), t.data.end());
    out.append(reinterpret_cast<const char*>(f.data()), f.size() * sizeof(float));
}

class Reader {
public:
    Reader(const std::string& buf, size_t pos) : buf_(buf), pos_(pos) {}

    template <typename T>
    T get() {
        if (pos_ + sizeof(T) > buf_.size()) throw CorruptFile("truncated checkpoint");
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string get_str() {
        uint32_t n = get<uint32_t>();
        if (pos_ + n > buf_.size()) throw CorruptFile("truncated checkpoint");
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    Tensor get_tensor_f64() {
        Tensor t(read_shape());
        size_t bytes = t.data.size() * sizeof(double);
        if (pos_ + bytes > buf_.size()) throw CorruptFile("truncated checkpoint");
        std::memcpy(t.data.data(), buf_.data() + pos_, bytes);
        pos_ += bytes;
        return t;
    }

    Tensor get_tensor_f32() {
        Tensor t(read_shape());
        size_t bytes = t.data.size() * sizeof(float);
        if (pos_ + bytes > buf_.size()) throw CorruptFile("truncated checkpoint");
        std::vector<float> f(t.data.size());
        std::memcpy(f.data(), buf_.data() + pos_, bytes);
        pos_ += bytes;
        for (size_t i = 0; i < f.size(); ++i) t.data[i] = f[i];
        return t;
    }

    size_t pos() const { return pos_; }

private:
    std::vector<int> read_shape() {
        uint32_t rank = get<uint32_t>();
        if (rank > 8) throw CorruptFile("implausible tensor rank");
        std::vector<int> shape;
        for (uint32_t i = 0; i < rank; ++i) {
            int d = get<int32_t>();
            if (d <= 0 || d > (1 << 24)) throw CorruptFile("implausible dimension");
            shape.push_back(d);
        }
        return shape;
    }

    const std::string& buf_;
    size_t pos_;
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::string body;
    put_u32(body, ckpt.version);
    put_u64(body, ckpt.charset_hash);
    put_i32(body, ckpt.stage);
    put_str(body, ckpt.rng_state);
    put_str(body, ckpt.config_text);
    put_u32(body, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        put_str(body, name);
        put_tensor_f64(body, t);
    }
    body.push_back(ckpt.has_optimizer ? 1 : 0);
    if (ckpt.has_optimizer) {
        put_i64(body, ckpt.adam_t);
        put_u32(body, static_cast<uint32_t>(ckpt.adam_m.size()));
        for (const auto& [name, t] : ckpt.adam_m) {
            put_str(body, name);
            put_tensor_f32(body, t);
        }
        put_u32(body, static_cast<uint32_t>(ckpt.adam_v.size()));
        for (const auto& [name, t] : ckpt.adam_v) {
            put_str(body, name);
            put_tensor_f32(body, t);
        }
    }
    uint32_t crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
                         static_cast<uInt>(body.size()));

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IOError("cannot open checkpoint for writing: " + path);
    f.write(kMagic, 8);
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
    f.write(reinterpret_cast<const char*>(&crc), 4);
    if (!f) throw IOError("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IOError("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
    if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 8) != 0)
        throw CorruptFile("bad checkpoint magic: " + path);
    uint32_t stored_crc;
    std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
    uint32_t crc = crc32(0L, reinterpret_cast<const Bytef*>(buf.data() + 8),
                         static_cast<uInt>(buf.size() - 12));
    if (crc != stored_crc) throw CorruptFile("checkpoint CRC mismatch: " + path);

    Reader r(buf, 8);
    Checkpoint ckpt;
    ckpt.version = r.get<uint32_t>();
    if (ckpt.version != Checkpoint::kVersion)
        throw VersionMismatch("checkpoint format version " +
                              std::to_string(ckpt.version) + ", expected " +
                              std::to_string(Checkpoint::kVersion));
    ckpt.charset_hash = r.get<uint64_t>();
    ckpt.stage = r.get<int32_t>();
    ckpt.rng_state = r.get_str();
    ckpt.config_text = r.get_str();
    uint32_t n = r.get<uint32_t>();
    for (uint32_t i = 0; i < n; ++i) {
        std::string name = r.get_str();
        ckpt.tensors.emplace_back(std::move(name), r.get_tensor_f64());
    }
    ckpt.has_optimizer = r.get<uint8_t>() != 0;
    if (ckpt.has_optimizer) {
        ckpt.adam_t = r.get<int64_t>();
        uint32_t nm = r.get<uint32_t>();
        for (uint32_t i = 0; i < nm; ++i) {
            std::string name = r.get_str();
            ckpt.adam_m.emplace_back(std::move(name), r.get_tensor_f32());
        }
        uint32_t nv = r.get<uint32_t>();
        for (uint32_t i = 0; i < nv; ++i) {
            std::string name = r.get_str();
            ckpt.adam_v.emplace_back(std::move(name), r.get_tensor_f32());
        }
    }
    return ckpt;
}

Checkpoint make_checkpoint(const nn::ParamList& params, uint64_t charset_hash,
                           int stage, const std::string& rng_state,
                           const std::string& config_text, const nn::Adam* adam) {
    Checkpoint ckpt;
    ckpt.charset_hash = charset_hash;
    ckpt.stage = stage;
    ckpt.rng_state = rng_state;
    ckpt.config_text = config_text;
    for (const nn::Param* p : params) ckpt.tensors.emplace_back(p->name, p->value);
    if (adam) {
        ckpt.has_optimizer = true;
        ckpt.adam_t = adam->t;
        for (const nn::Param* p : params) {
            auto mi = adam->m.find(p->name);
            auto vi = adam->v.find(p->name);
            if (mi != adam->m.end()) ckpt.adam_m.emplace_back(p->name, mi->second);
            if (vi != adam->v.end()) ckpt.adam_v.emplace_back(p->name, vi->second);
        }
    }
    return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, const nn::ParamList& params,
                      uint64_t expected_charset_hash, nn::Adam* adam) {
    if (ckpt.charset_hash != expected_charset_hash)
        throw CharsetMismatch("checkpoint was built against a different charset");
    for (nn::Param* p : params) {
        const Tensor* found = nullptr;
        for (const auto& [name, t] : ckpt.tensors)
            if (name == p->name) {
                found = &t;
                break;
            }
        if (!found)
            throw CheckpointIncompatible("missing parameter group '" + p->name + "'");
        if (found->shape != p->value.shape)
            throw CheckpointIncompatible("shape mismatch for '" + p->name + "'");
        p->value = *found;
    }
    if (adam && ckpt.has_optimizer) {
        adam->t = ckpt.adam_t;
        for (const auto& [name, t] : ckpt.adam_m) adam->m[name] = t;
        for (const auto& [name, t] : ckpt.adam_v) adam->v[name] = t;
    }
}

}  // namespace lptr::trainer
