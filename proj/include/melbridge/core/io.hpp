#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace melbridge {

/// Thrown by binary readers; message carries the byte offset of the fault.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// All on-disk integers and floats are little-endian. The helpers below write
// byte-by-byte so the code is endian-agnostic.

class ByteWriter {
public:
    explicit ByteWriter(const std::string& path)
        : path_(path), out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open for writing: " + path);
    }

    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) {
        std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8),
                             std::uint8_t(v >> 16), std::uint8_t(v >> 24)};
        bytes(b, 4);
    }
    void u64(std::uint64_t v) {
        u32(static_cast<std::uint32_t>(v));
        u32(static_cast<std::uint32_t>(v >> 32));
    }
    void i16(std::int16_t v) {
        std::uint8_t b[2] = {std::uint8_t(v & 0xff), std::uint8_t((v >> 8) & 0xff)};
        bytes(b, 2);
    }
    void f32(float v) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        u32(u);
    }
    void f64(double v) {
        std::uint64_t u;
        std::memcpy(&u, &v, 8);
        u64(u);
    }
    void f32_array(const float* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) f32(p[i]);
    }
    void f64_array(const double* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) f64(p[i]);
    }
    void magic(const char (&m)[5]) { bytes(m, 4); }
    /// u32 length followed by raw bytes.
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }

    void close() {
        out_.close();
        if (!out_) throw std::runtime_error("write failed: " + path_);
    }

private:
    std::string path_;
    std::ofstream out_;
};

class ByteReader {
public:
    explicit ByteReader(const std::string& path)
        : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw std::runtime_error("cannot open for reading: " + path);
    }

    std::size_t offset() const { return off_; }

    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            fail("unexpected end of file");
        off_ += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint8_t b[4];
        bytes(b, 4);
        return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
               std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
    }
    std::uint64_t u64() {
        std::uint64_t lo = u32();
        std::uint64_t hi = u32();
        return lo | (hi << 32);
    }
    std::int16_t i16() {
        std::uint8_t b[2];
        bytes(b, 2);
        return static_cast<std::int16_t>(std::uint16_t(b[0]) | std::uint16_t(b[1]) << 8);
    }
    float f32() {
        std::uint32_t u = u32();
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    double f64() {
        std::uint64_t u = u64();
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    void f32_array(float* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) p[i] = f32();
    }
    void f64_array(double* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) p[i] = f64();
    }
    void expect_magic(const char (&m)[5]) {
        const std::size_t at = off_;
        char got[5] = {0};
        bytes(got, 4);
        if (std::memcmp(got, m, 4) != 0)
            fail("bad magic, expected \"" + std::string(m) + "\"", at);
    }
    std::string str(std::uint32_t max_len = 1u << 20) {
        const std::size_t at = off_;
        std::uint32_t n = u32();
        if (n > max_len) fail("string length " + std::to_string(n) + " out of range", at);
        std::string s(n, '\0');
        if (n) bytes(s.data(), n);
        return s;
    }
    bool at_eof() {
        return in_.peek() == std::char_traits<char>::eof();
    }

    [[noreturn]] void fail(const std::string& what) const { fail(what, off_); }
    [[noreturn]] void fail(const std::string& what, std::size_t at) const {
        throw FormatError(path_ + ": " + what + " (byte offset " + std::to_string(at) + ")");
    }

private:
    std::string path_;
    std::ifstream in_;
    std::size_t off_ = 0;
};

inline std::uint64_t fnv1a64(const void* p, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t fnv1a64_file(const std::string& path);
std::string hex64(std::uint64_t v);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace melbridge
