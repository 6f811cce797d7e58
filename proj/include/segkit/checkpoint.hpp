#ifndef SEGKIT_CHECKPOINT_HPP
#define SEGKIT_CHECKPOINT_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace segkit {

struct QuantMeta {
    float scale = 1.0f;
    std::int32_t zero_point = 0;
};

// Checkpoint entry encodings (flag byte):
//   0 = float tensor, stored as a TensorFile blob
//   1 = quantized: scale f32 + zero_point i32, then a uint8 TensorFile blob
//   2 = sparse float: dtype/shape header, count u64, (u32 index, f32 value)
//       pairs with ascending indices
enum class EntryStorage : std::uint8_t { dense = 0, quantized = 1, sparse = 2 };

struct CheckpointEntry {
    Tensor tensor;
    std::optional<QuantMeta> quant;
    EntryStorage storage = EntryStorage::dense;
};

inline constexpr char kCheckpointMagic[4] = {'C', 'S', 'G', 'C'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

/// Ordered, uniquely named tensor collection; the unit of size accounting.
class Checkpoint {
public:
    void add(const std::string& name, Tensor t, std::optional<QuantMeta> quant = std::nullopt,
             EntryStorage storage = EntryStorage::dense) {
        if (find(name)) throw error("checkpoint: duplicate entry " + name);
        if (quant && t.dtype() != DType::u8)
            throw error("checkpoint: quantized entry must have uint8 payload");
        entries_.emplace_back(name, CheckpointEntry{std::move(t), quant, storage});
    }

    const CheckpointEntry* find(const std::string& name) const {
        for (const auto& [n, e] : entries_)
            if (n == name) return &e;
        return nullptr;
    }

    CheckpointEntry& get(const std::string& name) {
        for (auto& [n, e] : entries_)
            if (n == name) return e;
        throw error("checkpoint: no entry named " + name);
    }

    const CheckpointEntry& get(const std::string& name) const {
        return const_cast<Checkpoint*>(this)->get(name);
    }

    auto& entries() { return entries_; }
    const auto& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    std::string serialize() const {
        std::string out;
        out.append(kCheckpointMagic, 4);
        detail::put_u8(out, kCheckpointVersion);
        detail::put_u32(out, std::uint32_t(entries_.size()));
        for (const auto& [name, e] : entries_) {
            if (name.size() > 0xffff) throw error("checkpoint: entry name too long");
            detail::put_u16(out, std::uint16_t(name.size()));
            out += name;
            detail::put_u8(out, std::uint8_t(e.storage));
            switch (e.storage) {
            case EntryStorage::dense:
                out += serialize_tensor(e.tensor);
                break;
            case EntryStorage::quantized:
                if (!e.quant) throw error("checkpoint: quantized entry lacks metadata");
                detail::put_f32(out, e.quant->scale);
                detail::put_i32(out, e.quant->zero_point);
                out += serialize_tensor(e.tensor);
                break;
            case EntryStorage::sparse: {
                if (e.tensor.dtype() != DType::f32)
                    throw error("checkpoint: sparse entries must be f32");
                detail::put_u8(out, std::uint8_t(e.tensor.ndim()));
                for (std::size_t ext : e.tensor.shape()) detail::put_u64(out, ext);
                const float* d = e.tensor.data<float>();
                std::uint64_t count = 0;
                for (std::size_t i = 0; i < e.tensor.numel(); ++i)
                    if (d[i] != 0.0f) ++count;
                detail::put_u64(out, count);
                for (std::size_t i = 0; i < e.tensor.numel(); ++i)
                    if (d[i] != 0.0f) {
                        detail::put_u32(out, std::uint32_t(i));
                        detail::put_f32(out, d[i]);
                    }
                break;
            }
            }
        }
        return out;
    }

    static Checkpoint deserialize(const std::string& bytes) {
        detail::ByteReader r(reinterpret_cast<const unsigned char*>(bytes.data()),
                             bytes.size());
        if (r.str(4) != std::string(kCheckpointMagic, 4))
            throw error("bad magic: not a checkpoint file");
        std::uint8_t version = r.u8();
        if (version != kCheckpointVersion)
            throw error("unsupported checkpoint version " + std::to_string(version));
        std::uint32_t count = r.u32();
        Checkpoint ckpt;
        for (std::uint32_t i = 0; i < count; ++i) {
            std::string name = r.str(r.u16());
            auto storage = EntryStorage(r.u8());
            switch (storage) {
            case EntryStorage::dense:
                ckpt.add(name, deserialize_tensor(r));
                break;
            case EntryStorage::quantized: {
                QuantMeta q{r.f32(), r.i32()};
                ckpt.add(name, deserialize_tensor(r), q, EntryStorage::quantized);
                break;
            }
            case EntryStorage::sparse: {
                std::uint8_t ndim = r.u8();
                std::vector<std::size_t> shape(ndim);
                for (auto& e : shape) e = std::size_t(r.u64());
                Tensor t(DType::f32, shape);
                float* d = t.data<float>();
                std::uint64_t nnz = r.u64();
                std::uint32_t prev = 0;
                for (std::uint64_t j = 0; j < nnz; ++j) {
                    std::uint32_t idx = r.u32();
                    if (j > 0 && idx <= prev)
                        throw error("checkpoint: sparse indices not ascending");
                    if (idx >= t.numel()) throw error("checkpoint: sparse index out of range");
                    d[idx] = r.f32();
                    prev = idx;
                }
                ckpt.add(name, std::move(t), std::nullopt, EntryStorage::sparse);
                break;
            }
            default:
                throw error("checkpoint: unknown entry storage flag");
            }
        }
        if (r.remaining() != 0) throw error("checkpoint: trailing bytes");
        return ckpt;
    }

    void save(const std::string& path) const { detail::write_file_bytes(path, serialize()); }

    static Checkpoint load(const std::string& path) {
        return deserialize(detail::read_file_bytes(path));
    }

private:
    std::vector<std::pair<std::string, CheckpointEntry>> entries_;
};

/// Total number of stored elements.
inline std::uint64_t count_params(const Checkpoint& ckpt) {
    std::uint64_t n = 0;
    for (const auto& [name, e] : ckpt.entries()) n += e.tensor.numel();
    return n;
}

/// Size accounting in MB (10^6 bytes): float entries cost 4 bytes per
/// element, quantized entries 1 byte per element plus 8 metadata bytes.
inline double model_size_mb(const Checkpoint& ckpt) {
    double bytes = 0;
    for (const auto& [name, e] : ckpt.entries()) {
        if (e.storage == EntryStorage::quantized)
            bytes += double(e.tensor.numel()) + 8.0;
        else
            bytes += 4.0 * double(e.tensor.numel());
    }
    return bytes / 1e6;
}

} // namespace segkit

#endif
