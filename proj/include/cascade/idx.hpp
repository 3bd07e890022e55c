#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cascade/matrix.hpp"

namespace cascade {

/// Parse failure with the byte offset where the data stopped making sense.
struct IdxError : std::runtime_error {
    size_t offset;
    IdxError(const std::string& msg, size_t off)
        : std::runtime_error(msg + " (at byte " + std::to_string(off) + ")"), offset(off) {}
};

/// Contents of one IDX file: either an image stack or a label vector,
/// depending on the magic number.
struct IdxData {
    bool is_labels = false;
    int count = 0;
    int rows = 0;
    int cols = 0;
    /// Images as columns, pixel values scaled to [0,1]; (rows*cols) x count.
    Matrix<double> images;
    std::vector<uint8_t> labels;
};

namespace detail {

inline uint32_t read_be32(const std::vector<uint8_t>& bytes, size_t off) {
    if (off + 4 > bytes.size()) throw IdxError("truncated header", bytes.size());
    return (uint32_t(bytes[off]) << 24) | (uint32_t(bytes[off + 1]) << 16) |
           (uint32_t(bytes[off + 2]) << 8) | uint32_t(bytes[off + 3]);
}

}  // namespace detail

/// Parses the big-endian IDX container: magic 0x00000803 for image
/// stacks, 0x00000801 for label vectors.
inline IdxData parse_idx_bytes(const std::vector<uint8_t>& bytes) {
    const uint32_t magic = detail::read_be32(bytes, 0);
    IdxData out;
    if (magic == 0x00000803u) {
        out.count = static_cast<int>(detail::read_be32(bytes, 4));
        out.rows = static_cast<int>(detail::read_be32(bytes, 8));
        out.cols = static_cast<int>(detail::read_be32(bytes, 12));
        const size_t need = 16 + static_cast<size_t>(out.count) * out.rows * out.cols;
        if (bytes.size() < need) throw IdxError("truncated image data", bytes.size());
        out.images = Matrix<double>(out.rows * out.cols, out.count);
        for (int n = 0; n < out.count; ++n)
            for (int px = 0; px < out.rows * out.cols; ++px)
                out.images(px, n) =
                    bytes[16 + static_cast<size_t>(n) * out.rows * out.cols + px] / 255.0;
    } else if (magic == 0x00000801u) {
        out.is_labels = true;
        out.count = static_cast<int>(detail::read_be32(bytes, 4));
        const size_t need = 8 + static_cast<size_t>(out.count);
        if (bytes.size() < need) throw IdxError("truncated label data", bytes.size());
        out.labels.assign(bytes.begin() + 8, bytes.begin() + static_cast<long>(need));
        for (size_t i = 0; i < out.labels.size(); ++i)
            if (out.labels[i] > 9) throw IdxError("label value exceeds 9", 8 + i);
    } else {
        throw IdxError("bad magic 0x" + std::to_string(magic), 0);
    }
    return out;
}

inline IdxData parse_idx(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IdxError("cannot open " + path, 0);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    return parse_idx_bytes(bytes);
}

}  // namespace cascade
