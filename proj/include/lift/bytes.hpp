#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace lift {

// Little-endian byte buffer writer for the binary file formats.
class ByteWriter {
public:
    void put_u8(std::uint8_t v) { buf_.push_back(v); }
    void put_u16(std::uint16_t v) { put_le(v, 2); }
    void put_u32(std::uint32_t v) { put_le(v, 4); }
    void put_u64(std::uint64_t v) { put_le(v, 8); }
    void put_i64(std::int64_t v) { put_le(static_cast<std::uint64_t>(v), 8); }
    void put_f64(double v) { put_le(std::bit_cast<std::uint64_t>(v), 8); }
    void put_bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        buf_.insert(buf_.end(), p, p + n);
    }
    void put_str(const std::string& s) { put_bytes(s.data(), s.size()); }

    const std::vector<std::uint8_t>& bytes() const { return buf_; }
    std::vector<std::uint8_t>&& take() { return std::move(buf_); }
    std::size_t size() const { return buf_.size(); }

private:
    void put_le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(std::uint8_t(v >> (8 * i)));
    }
    std::vector<std::uint8_t> buf_;
};

// Bounds-checked reader over a byte buffer. Truncation raises Truncated,
// which call sites wrap into their format-specific error type.
class ByteReader {
public:
    struct Truncated {};

    ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}
    explicit ByteReader(const std::vector<std::uint8_t>& buf) : ByteReader(buf.data(), buf.size()) {}

    std::uint8_t get_u8() { return std::uint8_t(get_le(1)); }
    std::uint16_t get_u16() { return std::uint16_t(get_le(2)); }
    std::uint32_t get_u32() { return std::uint32_t(get_le(4)); }
    std::uint64_t get_u64() { return get_le(8); }
    std::int64_t get_i64() { return static_cast<std::int64_t>(get_le(8)); }
    double get_f64() { return std::bit_cast<double>(get_le(8)); }
    std::string get_str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return size_ - pos_; }
    bool exhausted() const { return pos_ == size_; }

private:
    void need(std::size_t n) const {
        if (size_ - pos_ < n) throw Truncated{};
    }
    std::uint64_t get_le(int n) {
        need(std::size_t(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t(data_[pos_ + std::size_t(i)]) << (8 * i);
        pos_ += std::size_t(n);
        return v;
    }
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

// CRC-32 (IEEE 802.3, reflected, polynomial 0xEDB88320).
std::uint32_t crc32(const std::uint8_t* data, std::size_t size);
inline std::uint32_t crc32(const std::vector<std::uint8_t>& buf) { return crc32(buf.data(), buf.size()); }

// FNV-1a 64-bit content hash, used for manifests and artifact names.
std::uint64_t fnv1a64(const void* data, std::size_t size);
inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }
inline std::uint64_t fnv1a64(const std::vector<std::uint8_t>& buf) { return fnv1a64(buf.data(), buf.size()); }
std::string hash_hex(std::uint64_t h);

// Whole-file helpers.
std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace lift
