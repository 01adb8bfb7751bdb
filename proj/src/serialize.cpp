#include "amlm/serialize.hpp"

#include <bit>
#include <cstring>

#include "amlm/errors.hpp"

namespace amlm {

LeWriter::LeWriter(const std::string& path) : path_(path) {
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) {
        throw IoError("cannot open '" + path + "' for writing");
    }
}

LeWriter::~LeWriter() {
    if (!closed_ && out_.is_open()) {
        out_.close();
    }
}

void LeWriter::u8(uint8_t v) { out_.put(static_cast<char>(v)); }

void LeWriter::u32(uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out_.write(b, 4);
}

void LeWriter::u64(uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out_.write(b, 8);
}

void LeWriter::i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
void LeWriter::i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
void LeWriter::f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
void LeWriter::f64(double v) { u64(std::bit_cast<uint64_t>(v)); }

void LeWriter::bytes(const void* data, size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void LeWriter::str(std::string_view s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
}

void LeWriter::f32_array(std::span<const float> v) {
    for (float x : v) f32(x);
}
void LeWriter::f64_array(std::span<const double> v) {
    for (double x : v) f64(x);
}
void LeWriter::i64_array(std::span<const int64_t> v) {
    for (int64_t x : v) i64(x);
}
void LeWriter::i32_array(std::span<const int32_t> v) {
    for (int32_t x : v) i32(x);
}

void LeWriter::close() {
    out_.flush();
    if (!out_) {
        throw IoError("write failure on '" + path_ + "'");
    }
    out_.close();
    closed_ = true;
}

LeReader::LeReader(const std::string& path) : path_(path) {
    in_.open(path, std::ios::binary);
    if (!in_) {
        throw IoError("cannot open '" + path + "' for reading");
    }
}

void LeReader::bytes(void* data, size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n) {
        throw FormatError("truncated file: '" + path_ + "'");
    }
}

uint8_t LeReader::u8() {
    uint8_t b;
    bytes(&b, 1);
    return b;
}

uint32_t LeReader::u32() {
    unsigned char b[4];
    bytes(b, 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t LeReader::u64() {
    unsigned char b[8];
    bytes(b, 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

int32_t LeReader::i32() { return static_cast<int32_t>(u32()); }
int64_t LeReader::i64() { return static_cast<int64_t>(u64()); }
float LeReader::f32() { return std::bit_cast<float>(u32()); }
double LeReader::f64() { return std::bit_cast<double>(u64()); }

std::string LeReader::str() {
    uint32_t n = u32();
    std::string s(n, '\0');
    if (n > 0) bytes(s.data(), n);
    return s;
}

std::vector<float> LeReader::f32_array(size_t n) {
    std::vector<float> v(n);
    for (auto& x : v) x = f32();
    return v;
}
std::vector<double> LeReader::f64_array(size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
}
std::vector<int64_t> LeReader::i64_array(size_t n) {
    std::vector<int64_t> v(n);
    for (auto& x : v) x = i64();
    return v;
}
std::vector<int32_t> LeReader::i32_array(size_t n) {
    std::vector<int32_t> v(n);
    for (auto& x : v) x = i32();
    return v;
}

void LeReader::expect_magic(std::string_view magic, std::string_view what) {
    char b[8] = {};
    bytes(b, 8);
    if (std::string_view(b, 8) != magic) {
        throw FormatError("'" + path_ + "' is not a " + std::string(what) +
                          " file (bad magic)");
    }
}

}  // namespace amlm
