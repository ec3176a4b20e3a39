#pragma once

// Block floating point storage: a block of values shares one biased exponent,
// each element keeps a sign bit and an unsigned magnitude mantissa.
//
// Encoding of a block with shared (unbiased) exponent e and mantissa width m:
//     value_i = sign_i * mantissa_i * 2^(e - m + 1)
// so the largest normalized element (top mantissa bit set) lands in
// [2^e, 2^(e+1)). Quantization rounds to nearest, ties to even, and saturates
// the mantissa at 2^m - 1. Inputs whose block maximum falls below the
// smallest representable exponent are flushed toward zero at the minimum
// block scale.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lofilab {

struct BfpConfig {
    int block_size = 16;     // values per shared exponent
    int mantissa_bits = 7;   // magnitude bits per element (sign stored separately)
    int exponent_bits = 8;   // width of the shared biased exponent

    void validate() const {
        if (block_size < 1) throw std::invalid_argument("BfpConfig: block_size must be >= 1");
        if (mantissa_bits < 1 || mantissa_bits > 30)
            throw std::invalid_argument("BfpConfig: mantissa_bits must be in [1,30]");
        if (exponent_bits < 1 || exponent_bits > 16)
            throw std::invalid_argument("BfpConfig: exponent_bits must be in [1,16]");
    }

    int bias() const { return (1 << (exponent_bits - 1)) - 1; }
    std::uint32_t max_biased_exponent() const { return (1u << exponent_bits) - 1u; }
    std::uint32_t max_mantissa() const { return (1u << mantissa_bits) - 1u; }

    // Amortized storage cost per value over whole blocks. BFP8: 8.5 bits.
    double bits_per_value() const {
        return double(exponent_bits + block_size * (1 + mantissa_bits)) / double(block_size);
    }

    bool operator==(const BfpConfig&) const = default;

    static BfpConfig preset(std::string_view name) {
        std::string lower(name);
        for (char& c : lower) c = char(std::tolower(static_cast<unsigned char>(c)));
        if (lower == "bfp8") return BfpConfig{16, 7, 8};
        throw std::invalid_argument("BfpConfig::preset: unknown preset '" + std::string(name) + "'");
    }
};

struct BfpBlock {
    std::uint32_t shared_exponent = 0;     // biased
    std::vector<std::uint8_t> signs;       // 1 = negative
    std::vector<std::uint32_t> mantissas;  // each < 2^mantissa_bits

    bool operator==(const BfpBlock&) const = default;
};

namespace detail {

// Round-to-nearest-even of a non-negative scaled magnitude, saturating at cap.
// The scaled value is exact (power-of-two scaling of a finite double), so the
// tie comparison below is exact as well.
inline std::uint32_t round_mantissa(double scaled, std::uint32_t cap) {
    if (scaled >= double(cap) + 0.5) return cap;  // saturate (covers the tie at cap+0.5)
    double f = std::floor(scaled);
    double frac = scaled - f;
    auto n = static_cast<std::uint32_t>(f);
    if (frac > 0.5) return n + 1;
    if (frac < 0.5) return n;
    return (n % 2 == 0) ? n : n + 1;
}

}  // namespace detail

inline BfpBlock quantize_block(std::span<const double> values, const BfpConfig& config) {
    config.validate();
    if (static_cast<int>(values.size()) != config.block_size)
        throw std::invalid_argument("quantize_block: expected " + std::to_string(config.block_size) +
                                    " values, got " + std::to_string(values.size()));
    BfpBlock block;
    block.signs.resize(values.size());
    block.mantissas.assign(values.size(), 0);

    double max_abs = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]))
            throw std::invalid_argument("quantize_block: non-finite input at index " + std::to_string(i));
        block.signs[i] = std::signbit(values[i]) ? 1 : 0;
        max_abs = std::max(max_abs, std::fabs(values[i]));
    }
    if (max_abs == 0.0) {
        block.shared_exponent = 0;  // canonical zero block
        return block;
    }

    int e2 = 0;
    std::frexp(max_abs, &e2);  // max_abs = f * 2^e2, f in [0.5, 1)
    long biased = long(e2) - 1 + config.bias();
    if (biased < 0) biased = 0;  // flush-to-zero regime at the minimum block scale
    if (biased > long(config.max_biased_exponent())) biased = long(config.max_biased_exponent());
    block.shared_exponent = static_cast<std::uint32_t>(biased);

    const int unbiased = int(biased) - config.bias();
    const int scale_exp = config.mantissa_bits - 1 - unbiased;
    for (std::size_t i = 0; i < values.size(); ++i) {
        double scaled = std::ldexp(std::fabs(values[i]), scale_exp);
        block.mantissas[i] = detail::round_mantissa(scaled, config.max_mantissa());
    }
    return block;
}

inline void validate_block(const BfpBlock& block, const BfpConfig& config) {
    config.validate();
    if (static_cast<int>(block.mantissas.size()) != config.block_size ||
        block.signs.size() != block.mantissas.size())
        throw std::invalid_argument("BfpBlock: size does not match config.block_size");
    if (block.shared_exponent > config.max_biased_exponent())
        throw std::invalid_argument("BfpBlock: shared_exponent out of range");
    for (std::size_t i = 0; i < block.mantissas.size(); ++i)
        if (block.mantissas[i] > config.max_mantissa())
            throw std::invalid_argument("BfpBlock: mantissa out of range at index " + std::to_string(i));
}

inline std::vector<double> dequantize_block(const BfpBlock& block, const BfpConfig& config) {
    validate_block(block, config);
    const int unbiased = int(block.shared_exponent) - config.bias();
    const int scale_exp = unbiased - config.mantissa_bits + 1;
    std::vector<double> out(block.mantissas.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double mag = std::ldexp(double(block.mantissas[i]), scale_exp);
        out[i] = block.signs[i] ? -mag : mag;
    }
    return out;
}

inline bool is_canonical_zero(const BfpBlock& block) {
    for (auto m : block.mantissas)
        if (m != 0) return false;
    return block.shared_exponent == 0;
}

// Normalization: some mantissa carries the top bit, unless the block is zero
// or sits at the minimum exponent (the flush regime cannot renormalize).
inline bool is_normalized(const BfpBlock& block, const BfpConfig& config) {
    if (block.shared_exponent == 0) return true;
    const std::uint32_t top = 1u << (config.mantissa_bits - 1);
    for (auto m : block.mantissas)
        if (m & top) return true;
    return false;
}

struct BfpTensor {
    std::vector<std::uint64_t> shape;
    std::vector<BfpBlock> blocks;
    int pad_count = 0;  // trailing padding slots in the final block
    BfpConfig config;

    std::uint64_t element_count() const {
        std::uint64_t n = 1;
        for (auto d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }
};

inline BfpTensor quantize_tensor(std::span<const double> values, std::vector<std::uint64_t> shape,
                                 const BfpConfig& config) {
    config.validate();
    std::uint64_t n = shape.empty() ? 0 : 1;
    for (auto d : shape) n *= d;
    if (n != values.size())
        throw std::invalid_argument("quantize_tensor: shape does not match value count");

    BfpTensor t;
    t.shape = std::move(shape);
    t.config = config;
    const std::uint64_t bs = config.block_size;
    const std::uint64_t n_blocks = (n + bs - 1) / bs;
    t.blocks.reserve(n_blocks);
    std::vector<double> buf(bs, 0.0);
    for (std::uint64_t b = 0; b < n_blocks; ++b) {
        const std::uint64_t start = b * bs;
        const std::uint64_t take = std::min(bs, n - start);
        for (std::uint64_t i = 0; i < bs; ++i) buf[i] = i < take ? values[start + i] : 0.0;
        t.blocks.push_back(quantize_block(buf, config));
    }
    t.pad_count = n_blocks == 0 ? 0 : int(n_blocks * bs - n);
    return t;
}

inline std::vector<double> dequantize_tensor(const BfpTensor& t) {
    const std::uint64_t n = t.element_count();
    std::vector<double> out;
    out.reserve(n);
    for (const auto& block : t.blocks) {
        auto vals = dequantize_block(block, t.config);
        for (double v : vals) {
            if (out.size() == n) break;
            out.push_back(v);
        }
    }
    if (out.size() != n) throw std::invalid_argument("dequantize_tensor: block data shorter than shape");
    return out;
}

// ---------------------------------------------------------------------------
// Storage accounting

enum class ScalarFormat { fp32_like, bf16_like };

inline std::uint64_t storage_bits(const BfpConfig& config, std::uint64_t n_values) {
    config.validate();
    const std::uint64_t bs = config.block_size;
    const std::uint64_t blocks = (n_values + bs - 1) / bs;
    return blocks * (std::uint64_t(config.exponent_bits) + bs * std::uint64_t(1 + config.mantissa_bits));
}

inline std::uint64_t storage_bits(ScalarFormat f, std::uint64_t n_values) {
    switch (f) {
        case ScalarFormat::fp32_like: return 32 * n_values;
        case ScalarFormat::bf16_like: return 16 * n_values;
    }
    throw std::invalid_argument("storage_bits: unknown scalar format");
}

// Storage formats assignable to a layer's weights.
enum class StorageFormat { bf16_like, bfp8 };

inline std::uint64_t storage_bits(StorageFormat f, std::uint64_t n_values,
                                  const BfpConfig& bfp = BfpConfig::preset("bfp8")) {
    switch (f) {
        case StorageFormat::bf16_like: return storage_bits(ScalarFormat::bf16_like, n_values);
        case StorageFormat::bfp8: return storage_bits(bfp, n_values);
    }
    throw std::invalid_argument("storage_bits: unknown storage format");
}

inline std::string to_string(StorageFormat f) {
    return f == StorageFormat::bfp8 ? "bfp8" : "bf16";
}

inline StorageFormat storage_format_from_string(std::string_view s) {
    if (s == "bfp8") return StorageFormat::bfp8;
    if (s == "bf16" || s == "bf16_like" || s == "bf16-like") return StorageFormat::bf16_like;
    throw std::invalid_argument("unknown storage format '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Binary dump ("BFPT"): little-endian header
//   magic "BFPT", version u16, exponent_bits u8, mantissa_bits u8,
//   block_size u16, rank u16, dims u64 x rank
// followed by the blocks as a packed little-endian bitstream, one block per
// byte-aligned record: shared exponent (exponent_bits), then per slot a sign
// bit and mantissa_bits of magnitude.

namespace detail {

class BitWriter {
public:
    void put(std::uint64_t value, int bits) {
        for (int i = 0; i < bits; ++i) {
            if (bit_ == 0) bytes_.push_back(0);
            if ((value >> i) & 1u) bytes_.back() |= std::uint8_t(1u << bit_);
            bit_ = (bit_ + 1) & 7;
        }
    }
    void align() { bit_ = 0; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
    int bit_ = 0;
};

class BitReader {
public:
    BitReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}
    std::uint64_t get(int bits) {
        std::uint64_t v = 0;
        for (int i = 0; i < bits; ++i) {
            if (pos_ >= size_) throw std::invalid_argument("BFPT: truncated block data");
            if ((data_[pos_] >> bit_) & 1u) v |= (1ull << i);
            bit_ = (bit_ + 1) & 7;
            if (bit_ == 0) ++pos_;
        }
        return v;
    }
    void align() {
        if (bit_ != 0) {
            bit_ = 0;
            ++pos_;
        }
    }
    std::size_t pos() const { return pos_; }

private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    int bit_ = 0;
};

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(std::uint8_t(v & 0xff));
    out.push_back(std::uint8_t(v >> 8));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(std::uint8_t((v >> (8 * i)) & 0xff));
}

}  // namespace detail

inline std::vector<std::uint8_t> pack_bfpt(const BfpTensor& t) {
    t.config.validate();
    std::vector<std::uint8_t> out = {'B', 'F', 'P', 'T'};
    detail::put_u16(out, 1);  // version
    out.push_back(std::uint8_t(t.config.exponent_bits));
    out.push_back(std::uint8_t(t.config.mantissa_bits));
    detail::put_u16(out, std::uint16_t(t.config.block_size));
    detail::put_u16(out, std::uint16_t(t.shape.size()));
    for (auto d : t.shape) detail::put_u64(out, d);

    detail::BitWriter w;
    for (const auto& block : t.blocks) {
        validate_block(block, t.config);
        w.put(block.shared_exponent, t.config.exponent_bits);
        for (std::size_t i = 0; i < block.mantissas.size(); ++i) {
            w.put(block.signs[i] ? 1 : 0, 1);
            w.put(block.mantissas[i], t.config.mantissa_bits);
        }
        w.align();
    }
    auto body = w.take();
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

inline BfpTensor unpack_bfpt(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12 || bytes[0] != 'B' || bytes[1] != 'F' || bytes[2] != 'P' || bytes[3] != 'T')
        throw std::invalid_argument("BFPT: bad magic");
    auto u16 = [&](std::size_t at) { return std::uint16_t(bytes[at] | (bytes[at + 1] << 8)); };
    const std::uint16_t version = u16(4);
    if (version != 1) throw std::invalid_argument("BFPT: unsupported version " + std::to_string(version));

    BfpTensor t;
    t.config.exponent_bits = bytes[6];
    t.config.mantissa_bits = bytes[7];
    t.config.block_size = u16(8);
    t.config.validate();
    const std::uint16_t rank = u16(10);
    std::size_t at = 12;
    if (bytes.size() < at + std::size_t(rank) * 8) throw std::invalid_argument("BFPT: truncated header");
    for (int r = 0; r < rank; ++r) {
        std::uint64_t d = 0;
        for (int i = 0; i < 8; ++i) d |= std::uint64_t(bytes[at + i]) << (8 * i);
        t.shape.push_back(d);
        at += 8;
    }

    const std::uint64_t n = t.element_count();
    const std::uint64_t bs = t.config.block_size;
    const std::uint64_t n_blocks = (n + bs - 1) / bs;
    t.pad_count = n_blocks == 0 ? 0 : int(n_blocks * bs - n);

    detail::BitReader r(bytes.data() + at, bytes.size() - at);
    for (std::uint64_t b = 0; b < n_blocks; ++b) {
        BfpBlock block;
        block.shared_exponent = std::uint32_t(r.get(t.config.exponent_bits));
        block.signs.resize(bs);
        block.mantissas.resize(bs);
        for (std::uint64_t i = 0; i < bs; ++i) {
            block.signs[i] = std::uint8_t(r.get(1));
            block.mantissas[i] = std::uint32_t(r.get(t.config.mantissa_bits));
        }
        r.align();
        validate_block(block, t.config);
        t.blocks.push_back(std::move(block));
    }
    return t;
}

}  // namespace lofilab
