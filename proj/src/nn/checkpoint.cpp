#include "melbridge/nn/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <vector>

#include "melbridge/core/io.hpp"

namespace melbridge::nn {
namespace {

constexpr std::uint32_t kVersion = 1;
// header: 4 magic + 4 version + 8 payload hash
constexpr std::size_t kHashOffset = 8;
constexpr std::size_t kPayloadOffset = 16;

std::uint64_t hash_payload(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    in.seekg(static_cast<std::streamoff>(kPayloadOffset));
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0)
        h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    return h;
}

void write_meta(ByteWriter& w, const CheckpointMeta& meta) {
    w.str(meta.kind);
    w.str(meta.config_json);
    w.u64(meta.step);
    w.u8(meta.has_rng ? 1 : 0);
    for (std::uint64_t s : meta.rng_state) w.u64(s);
}

CheckpointMeta read_meta(ByteReader& r) {
    CheckpointMeta meta;
    meta.kind = r.str(1 << 10);
    meta.config_json = r.str(1 << 24);
    meta.step = r.u64();
    meta.has_rng = r.u8() != 0;
    for (auto& s : meta.rng_state) s = r.u64();
    return meta;
}

void verify_hash(ByteReader& r, const std::string& path) {
    r.expect_magic("MBCK");
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        r.fail("unsupported checkpoint version " + std::to_string(version), 4);
    const std::uint64_t stored = r.u64();
    if (hash_payload(path) != stored)
        r.fail("payload hash mismatch (corrupt or truncated checkpoint)", kHashOffset);
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamStore<float>& ps, const AdamW<float>* opt,
                     const Ema<float>* ema) {
    {
        ByteWriter w(path);
        w.magic("MBCK");
        w.u32(kVersion);
        w.u64(0);  // payload hash, patched below
        write_meta(w, meta);
        const auto& infos = ps.infos();
        w.u32(static_cast<std::uint32_t>(infos.size()));
        for (const auto& info : infos) {
            w.str(info.name);
            w.u32(static_cast<std::uint32_t>(info.shape.size()));
            for (int d : info.shape) w.u32(static_cast<std::uint32_t>(d));
            w.f32_array(ps.values().data() + info.offset, info.count);
        }
        if (opt) {
            if (opt->m.size() != ps.size())
                throw std::invalid_argument("save_checkpoint: optimizer state size mismatch");
            w.u8(1);
            w.f64(opt->lr);
            w.f64(opt->beta1);
            w.f64(opt->beta2);
            w.f64(opt->eps);
            w.f64(opt->weight_decay);
            w.u64(static_cast<std::uint64_t>(opt->step));
            w.u64(opt->m.size());
            w.f64_array(opt->m.data(), opt->m.size());
            w.f64_array(opt->v.data(), opt->v.size());
        } else {
            w.u8(0);
        }
        if (ema) {
            if (ema->shadow.size() != ps.size())
                throw std::invalid_argument("save_checkpoint: EMA shadow size mismatch");
            w.u8(1);
            w.f64(ema->decay);
            w.u64(ema->shadow.size());
            w.f64_array(ema->shadow.data(), ema->shadow.size());
        } else {
            w.u8(0);
        }
        w.close();
    }
    const std::uint64_t h = hash_payload(path);
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(static_cast<std::streamoff>(kHashOffset));
    for (int i = 0; i < 8; ++i) f.put(static_cast<char>((h >> (8 * i)) & 0xff));
    if (!f) throw std::runtime_error("cannot patch checkpoint hash: " + path);
}

CheckpointMeta load_checkpoint(const std::string& path, ParamStore<float>& ps,
                               AdamW<float>* opt, Ema<float>* ema) {
    ByteReader r(path);
    verify_hash(r, path);
    const CheckpointMeta meta = read_meta(r);

    const std::uint32_t n_tensors = r.u32();
    if (n_tensors != ps.infos().size())
        r.fail("checkpoint holds " + std::to_string(n_tensors) + " tensors but the model has " +
                   std::to_string(ps.infos().size()),
               r.offset());
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        const std::size_t at = r.offset();
        const std::string name = r.str(1 << 10);
        const ParamInfo& info = [&]() -> const ParamInfo& {
            try {
                return ps.find(name);
            } catch (const std::invalid_argument&) {
                r.fail("checkpoint tensor '" + name + "' is not a model parameter", at);
                throw;  // unreachable
            }
        }();
        const std::uint32_t ndim = r.u32();
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(r.u32());
        if (shape != info.shape)
            r.fail("tensor '" + name + "' has shape " + shape_str(shape) + " but the model wants " +
                       shape_str(info.shape),
                   at);
        r.f32_array(ps.values().data() + info.offset, info.count);
    }

    const bool file_has_opt = r.u8() != 0;
    if (opt && !file_has_opt)
        r.fail("optimizer state requested but the checkpoint has none", r.offset());
    if (file_has_opt) {
        AdamW<float> scratch;
        AdamW<float>& o = opt ? *opt : scratch;
        o.lr = r.f64();
        o.beta1 = r.f64();
        o.beta2 = r.f64();
        o.eps = r.f64();
        o.weight_decay = r.f64();
        o.step = static_cast<std::int64_t>(r.u64());
        const std::uint64_t count = r.u64();
        if (count != ps.size())
            r.fail("optimizer moment count " + std::to_string(count) +
                       " does not match parameter count " + std::to_string(ps.size()),
                   r.offset());
        o.m.resize(count);
        o.v.resize(count);
        r.f64_array(o.m.data(), count);
        r.f64_array(o.v.data(), count);
    }

    const bool file_has_ema = r.u8() != 0;
    if (ema && !file_has_ema)
        r.fail("EMA state requested but the checkpoint has none", r.offset());
    if (file_has_ema) {
        Ema<float> scratch;
        Ema<float>& e = ema ? *ema : scratch;
        e.decay = r.f64();
        const std::uint64_t count = r.u64();
        if (count != ps.size())
            r.fail("EMA shadow count " + std::to_string(count) +
                       " does not match parameter count " + std::to_string(ps.size()),
                   r.offset());
        e.shadow.resize(count);
        r.f64_array(e.shadow.data(), count);
    }
    return meta;
}

CheckpointMeta read_checkpoint_meta(const std::string& path) {
    ByteReader r(path);
    verify_hash(r, path);
    return read_meta(r);
}

}  // namespace melbridge::nn
