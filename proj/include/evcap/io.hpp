// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "evcap/errors.hpp"

namespace evcap {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw FormatError("read failed for " + path.string());
    return bytes;
}

/// Writes via a sibling temp file and renames into place, so a crash never
/// leaves a partial file at `path`.
inline void write_file_atomic(const std::filesystem::path& path,
                              const void* data, size_t size) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        if (!out) throw FormatError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw FormatError("rename to " + path.string() + " failed: " + ec.message());
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, text.data(), text.size());
}

inline void write_file_atomic(const std::filesystem::path& path,
                              const std::vector<std::uint8_t>& bytes) {
    write_file_atomic(path, bytes.data(), bytes.size());
}

/// Splits on LF; a trailing CR per line is stripped so CRLF inputs read the
/// same. A final unterminated line is kept; a trailing newline adds nothing.
inline std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    size_t start = 0;
    while (start <= text.size()) {
        size_t nl = text.find('\n', start);
        if (nl == std::string::npos) {
            if (start < text.size()) lines.push_back(text.substr(start));
            break;
        }
        std::string line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        start = nl + 1;
    }
    return lines;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    return split_lines(std::string(bytes.begin(), bytes.end()));
}

inline std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& line : lines) {
        out += line;
        out += '\n';
    }
    return out;
}

// Little-endian scalar packing used by every binary artifact.

inline void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

inline void put_f32_le(std::vector<std::uint8_t>& out, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32_le(out, v);
}

inline void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    put_u32_le(out, static_cast<std::uint32_t>(v & 0xFFFFFFFFULL));
    put_u32_le(out, static_cast<std::uint32_t>(v >> 32));
}

/// Bounds-checked little-endian reader; error messages carry the byte
/// offset where decoding failed.
class ByteReader {
public:
    ByteReader(const std::vector<std::uint8_t>& bytes, std::string source)
        : bytes_(bytes), source_(std::move(source)) {}

    size_t offset() const { return pos_; }
    size_t remaining() const { return bytes_.size() - pos_; }

    void require(size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n)
            throw FormatError(source_ + ": truncated reading " + what + " at byte offset " +
                              std::to_string(pos_) + " (need " + std::to_string(n) +
                              ", have " + std::to_string(bytes_.size() - pos_) + ")");
    }

    std::uint32_t u32_le(const char* what) {
        require(4, what);
        std::uint32_t v = static_cast<std::uint32_t>(bytes_[pos_]) |
                          (static_cast<std::uint32_t>(bytes_[pos_ + 1]) << 8) |
                          (static_cast<std::uint32_t>(bytes_[pos_ + 2]) << 16) |
                          (static_cast<std::uint32_t>(bytes_[pos_ + 3]) << 24);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64_le(const char* what) {
        std::uint64_t lo = u32_le(what);
        std::uint64_t hi = u32_le(what);
        return lo | (hi << 32);
    }

    float f32_le(const char* what) {
        std::uint32_t v = u32_le(what);
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }

    void raw(void* dst, size_t n, const char* what) {
        require(n, what);
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }

    void expect_magic(const char magic[4]) {
        require(4, "magic");
        if (std::memcmp(bytes_.data() + pos_, magic, 4) != 0)
            throw FormatError(source_ + ": bad magic at byte offset 0 (expected \"" +
                              std::string(magic, 4) + "\")");
        pos_ += 4;
    }

    void expect_exhausted(const char* what) const {
        if (pos_ != bytes_.size())
            throw FormatError(source_ + ": " + std::to_string(bytes_.size() - pos_) +
                              " unexpected trailing bytes after " + what + " at byte offset " +
                              std::to_string(pos_));
    }

    const std::string& source() const { return source_; }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::string source_;
    size_t pos_ = 0;
};

} // namespace evcap
