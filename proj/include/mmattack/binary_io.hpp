#pragma once

// Little-endian binary container helpers shared by the dataset, checkpoint,
// and perturbation file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "mmattack/errors.hpp"

namespace mmattack::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
public:
    void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T value) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }

    void put_doubles(const std::vector<double>& values) {
        for (double v : values) put(v);
    }

    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

    /// Writes to `path`, creating parent directories.
    void save(const std::filesystem::path& path) const;

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}

    static ByteReader from_file(const std::filesystem::path& path);

    void expect_magic(std::string_view m) {
        require(m.size(), "magic");
        if (std::memcmp(bytes_.data() + pos_, m.data(), m.size()) != 0) {
            throw FormatError("bad magic, expected \"" + std::string(m) + "\"", pos_);
        }
        pos_ += m.size();
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get(const char* what) {
        require(sizeof(T), what);
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::vector<double> get_doubles(std::size_t count, const char* what) {
        require(count * sizeof(double), what);
        std::vector<double> out(count);
        std::memcpy(out.data(), bytes_.data() + pos_, count * sizeof(double));
        pos_ += count * sizeof(double);
        return out;
    }

    std::size_t position() const noexcept { return pos_; }
    bool at_end() const noexcept { return pos_ == bytes_.size(); }

    void expect_end() const {
        if (!at_end()) throw FormatError("trailing bytes after payload", pos_);
    }

private:
    void require(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(std::string("truncated file while reading ") + what, pos_);
        }
    }

    std::vector<std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace mmattack::io
