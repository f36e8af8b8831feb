#include <cstring>
#include <fstream>

#include "dsfc/checkpoint.hpp"

namespace dsfc {

namespace {

constexpr char kMagic[8] = {'D', 'S', 'F', 'C', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void write_i64(std::ostream& os, int64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

void write_str(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
uint64_t read_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
int64_t read_i64(std::istream& is) {
    int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::string read_str(std::istream& is, uint64_t cap = 1ull << 30) {
    uint64_t n = read_u64(is);
    DSFC_REQUIRE(n <= cap, "checkpoint: corrupt string length ", n);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

} // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ParamStore& ps,
                     const std::map<std::string, std::string>& extras) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    DSFC_REQUIRE(os.good(), "cannot write checkpoint: ", path);
    os.write(kMagic, 8);
    write_u32(os, kVersion);
    write_str(os, cfg.to_json());
    write_u64(os, ps.entries().size());
    for (const auto& e : ps.entries()) {
        write_str(os, e.path);
        const Shape s = e.var.shape();
        write_i64(os, s.b);
        write_i64(os, s.h);
        write_i64(os, s.w);
        write_i64(os, s.c);
        os.write(reinterpret_cast<const char*>(e.var.value().data()),
                 static_cast<std::streamsize>(s.numel() * 8));
    }
    write_u64(os, extras.size());
    for (const auto& [name, data] : extras) {
        write_str(os, name);
        write_str(os, data);
    }
    DSFC_REQUIRE(os.good(), "write failure on checkpoint: ", path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    DSFC_REQUIRE(is.good(), "cannot open checkpoint: ", path);
    char magic[8];
    is.read(magic, 8);
    DSFC_REQUIRE(is.good() && std::memcmp(magic, kMagic, 8) == 0,
                 "not a checkpoint file: ", path);
    LoadedCheckpoint ck;
    ck.version = read_u32(is);
    DSFC_REQUIRE(ck.version == kVersion, "unsupported checkpoint version ", ck.version);
    ck.config = ModelConfig::from_json(read_str(is));
    const uint64_t n = read_u64(is);
    DSFC_REQUIRE(n <= (1ull << 24), "checkpoint: corrupt parameter count ", n);
    ck.params.reserve(n);
    for (uint64_t i = 0; i < n; ++i) {
        std::string p = read_str(is);
        Shape s;
        s.b = read_i64(is);
        s.h = read_i64(is);
        s.w = read_i64(is);
        s.c = read_i64(is);
        DSFC_REQUIRE(s.b >= 1 && s.h >= 1 && s.w >= 1 && s.c >= 1 && s.numel() <= (1ll << 32),
                     "checkpoint: corrupt shape for ", p);
        Tensor t(s);
        is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(s.numel() * 8));
        ck.params.emplace_back(std::move(p), std::move(t));
    }
    const uint64_t ne = read_u64(is);
    DSFC_REQUIRE(ne <= (1ull << 16), "checkpoint: corrupt extras count ", ne);
    for (uint64_t i = 0; i < ne; ++i) {
        std::string name = read_str(is);
        ck.extras[name] = read_str(is);
    }
    DSFC_REQUIRE(is.good(), "truncated checkpoint: ", path);
    return ck;
}

void apply_params(ParamStore& ps, const std::vector<std::pair<std::string, Tensor>>& params) {
    for (auto& e : ps.entries()) {
        const Tensor* found = nullptr;
        for (const auto& [p, t] : params)
            if (p == e.path) found = &t;
        DSFC_CHECK(found, "checkpoint missing parameter: ", e.path);
        DSFC_CHECK(found->shape() == e.var.shape(), "checkpoint shape mismatch at ", e.path,
                   ": stored ", found->shape().str(), ", model expects ", e.var.shape().str());
        e.var.value() = *found;
    }
}

} // namespace dsfc
