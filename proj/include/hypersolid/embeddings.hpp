#pragma once

#include <string>
#include <vector>

#include "hypersolid/ndtensor.hpp"

namespace hypersolid {

// N x D evaluation embeddings plus optional integer labels.
struct EmbeddingSet {
    nd::Array embeddings; // rank-2, N x D
    std::vector<int> labels;

    bool has_labels() const { return !labels.empty(); }
    nd::Index size() const { return embeddings.rank() == 2 ? embeddings.shape[0] : 0; }
    nd::Index dim() const { return embeddings.rank() == 2 ? embeddings.shape[1] : 0; }
    int class_count() const;
    void validate() const;
};

enum class HsebDtype : std::uint8_t { F32 = 0, F64 = 1 };

// HSEB array file: magic "HSEB1\n", little-endian u32 N, u32 D, u8 dtype
// (0 = f32, 1 = f64), then N*D row-major values.
nd::Array read_hseb(const std::string& path);
void write_hseb(const std::string& path, const nd::Array& matrix, HsebDtype dtype);

// Labels: plain text, one integer per line, N lines.
std::vector<int> read_labels(const std::string& path, nd::Index expected_count);
void write_labels(const std::string& path, const std::vector<int>& labels);

EmbeddingSet load_embedding_set(const std::string& embeddings_path, const std::string& labels_path);

} // namespace hypersolid
