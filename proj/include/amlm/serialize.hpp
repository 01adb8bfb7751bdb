#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace amlm {

// Fixed-width little-endian binary writer. All persisted formats go through
// this so byte layouts are identical across platforms.
class LeWriter {
public:
    explicit LeWriter(const std::string& path);  // throws IoError
    ~LeWriter();

    void u8(uint8_t v);
    void u32(uint32_t v);
    void u64(uint64_t v);
    void i32(int32_t v);
    void i64(int64_t v);
    void f32(float v);
    void f64(double v);
    void bytes(const void* data, size_t n);
    void str(std::string_view s);  // u32 length prefix + raw bytes

    void f32_array(std::span<const float> v);
    void f64_array(std::span<const double> v);
    void i64_array(std::span<const int64_t> v);
    void i32_array(std::span<const int32_t> v);

    void close();  // throws IoError if the stream failed

private:
    std::ofstream out_;
    std::string path_;
    bool closed_ = false;
};

// Matching reader. Truncation and stream errors surface as FormatError,
// a missing file as IoError.
class LeReader {
public:
    explicit LeReader(const std::string& path);

    uint8_t u8();
    uint32_t u32();
    uint64_t u64();
    int32_t i32();
    int64_t i64();
    float f32();
    double f64();
    void bytes(void* data, size_t n);
    std::string str();

    std::vector<float> f32_array(size_t n);
    std::vector<double> f64_array(size_t n);
    std::vector<int64_t> i64_array(size_t n);
    std::vector<int32_t> i32_array(size_t n);

    // Reads 8 bytes and compares; mismatch is a FormatError naming `what`.
    void expect_magic(std::string_view magic, std::string_view what);

    const std::string& path() const { return path_; }

private:
    std::ifstream in_;
    std::string path_;
};

}  // namespace amlm
