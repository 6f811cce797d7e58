#ifndef SEGKIT_TENSOR_HPP
#define SEGKIT_TENSOR_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace segkit {

class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2, i32 = 3, i64 = 4 };

inline std::size_t dtype_size(DType d) {
    switch (d) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u8: return 1;
    case DType::i32: return 4;
    case DType::i64: return 8;
    }
    throw error("unknown dtype");
}

template <typename T> struct dtype_of;
template <> struct dtype_of<float> { static constexpr DType value = DType::f32; };
template <> struct dtype_of<double> { static constexpr DType value = DType::f64; };
template <> struct dtype_of<std::uint8_t> { static constexpr DType value = DType::u8; };
template <> struct dtype_of<std::int32_t> { static constexpr DType value = DType::i32; };
template <> struct dtype_of<std::int64_t> { static constexpr DType value = DType::i64; };

/// Dense row-major N-dimensional array. A 0-dim tensor holds one scalar.
class Tensor {
public:
    Tensor() : dtype_(DType::f32) {}

    Tensor(DType dtype, std::vector<std::size_t> shape)
        : dtype_(dtype), shape_(std::move(shape)) {
        for (std::size_t e : shape_)
            if (e < 1) throw error("tensor extent must be >= 1");
        buf_.assign(numel() * dtype_size(dtype_), 0);
    }

    template <typename T>
    static Tensor from(std::vector<std::size_t> shape, const std::vector<T>& values) {
        Tensor t(dtype_of<T>::value, std::move(shape));
        if (values.size() != t.numel()) throw error("tensor data length mismatch");
        std::memcpy(t.buf_.data(), values.data(), values.size() * sizeof(T));
        return t;
    }

    static Tensor zeros(DType dtype, std::vector<std::size_t> shape) {
        return Tensor(dtype, std::move(shape));
    }

    DType dtype() const { return dtype_; }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t extent(std::size_t i) const { return shape_.at(i); }

    std::size_t numel() const {
        return std::accumulate(shape_.begin(), shape_.end(), std::size_t{1},
                               std::multiplies<>());
    }

    std::size_t byte_size() const { return buf_.size(); }

    template <typename T> T* data() {
        check_dtype<T>();
        return reinterpret_cast<T*>(buf_.data());
    }
    template <typename T> const T* data() const {
        check_dtype<T>();
        return reinterpret_cast<const T*>(buf_.data());
    }

    const std::vector<unsigned char>& raw() const { return buf_; }
    std::vector<unsigned char>& raw() { return buf_; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool operator==(const Tensor& o) const {
        return dtype_ == o.dtype_ && shape_ == o.shape_ && buf_ == o.buf_;
    }

    /// Elementwise copy to another scalar type (shape preserved).
    template <typename From, typename To> Tensor cast() const {
        const From* src = data<From>();
        Tensor out(dtype_of<To>::value, shape_);
        To* dst = out.data<To>();
        for (std::size_t i = 0; i < numel(); ++i) dst[i] = static_cast<To>(src[i]);
        return out;
    }

private:
    template <typename T> void check_dtype() const {
        if (dtype_of<T>::value != dtype_) throw error("tensor dtype mismatch");
    }

    DType dtype_;
    std::vector<std::size_t> shape_;
    std::vector<unsigned char> buf_;
};

namespace detail {

inline void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

inline void put_u16(std::string& out, std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

inline void put_i32(std::string& out, std::int32_t v) {
    put_u32(out, static_cast<std::uint32_t>(v));
}

class ByteReader {
public:
    ByteReader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}

    std::uint8_t u8() { return take(1)[0]; }
    std::uint16_t u16() { return gather(2); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(gather(4)); }
    std::uint64_t u64() { return gather(8); }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    const unsigned char* take(std::size_t k) {
        if (pos_ + k > n_) throw error("truncated payload");
        const unsigned char* q = p_ + pos_;
        pos_ += k;
        return q;
    }
    std::string str(std::size_t k) {
        const unsigned char* q = take(k);
        return std::string(reinterpret_cast<const char*>(q), k);
    }
    std::size_t remaining() const { return n_ - pos_; }

private:
    std::uint64_t gather(int bytes) {
        const unsigned char* q = take(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v |= std::uint64_t(q[i]) << (8 * i);
        return v;
    }
    const unsigned char* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw error("cannot open " + path + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw error("write failed: " + path);
}

} // namespace detail

// TensorFile layout: "CSGT", version u8, dtype u8, ndim u8, pad u8,
// then ndim u64 extents and the little-endian row-major payload.
inline constexpr char kTensorMagic[4] = {'C', 'S', 'G', 'T'};
inline constexpr std::uint8_t kTensorVersion = 1;

inline std::string serialize_tensor(const Tensor& t) {
    std::string out;
    out.append(kTensorMagic, 4);
    detail::put_u8(out, kTensorVersion);
    detail::put_u8(out, static_cast<std::uint8_t>(t.dtype()));
    if (t.ndim() > 255) throw error("too many dimensions");
    detail::put_u8(out, static_cast<std::uint8_t>(t.ndim()));
    detail::put_u8(out, 0);
    for (std::size_t e : t.shape()) detail::put_u64(out, e);
    out.append(reinterpret_cast<const char*>(t.raw().data()), t.byte_size());
    return out;
}

inline Tensor deserialize_tensor(detail::ByteReader& r) {
    if (r.str(4) != std::string(kTensorMagic, 4)) throw error("bad magic: not a tensor file");
    std::uint8_t version = r.u8();
    if (version != kTensorVersion)
        throw error("unsupported tensor file version " + std::to_string(version));
    std::uint8_t code = r.u8();
    if (code > 4) throw error("unknown dtype code " + std::to_string(code));
    DType dtype = static_cast<DType>(code);
    std::uint8_t ndim = r.u8();
    r.u8(); // pad
    std::vector<std::size_t> shape(ndim);
    for (auto& e : shape) {
        e = static_cast<std::size_t>(r.u64());
        if (e < 1) throw error("tensor extent must be >= 1");
    }
    Tensor t(dtype, shape);
    const unsigned char* payload = r.take(t.byte_size());
    std::memcpy(t.raw().data(), payload, t.byte_size());
    return t;
}

inline void save_tensor(const Tensor& t, const std::string& path) {
    detail::write_file_bytes(path, serialize_tensor(t));
}

inline Tensor load_tensor(const std::string& path) {
    std::string bytes = detail::read_file_bytes(path);
    detail::ByteReader r(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
    Tensor t = deserialize_tensor(r);
    if (r.remaining() != 0) throw error("trailing bytes in " + path);
    return t;
}

} // namespace segkit

#endif
