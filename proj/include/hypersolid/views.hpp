#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hypersolid/embeddings.hpp"
#include "hypersolid/ndtensor.hpp"

namespace hypersolid::views {

using nd::Array;
using nd::Index;

enum class SourceKind { SyntheticClusters, GridDataset, ExternalEmbeddings };

SourceKind parse_source_kind(const std::string& s);
std::string to_string(SourceKind k);

// Fixed pool of samples plus labels. Synthetic prototypes are a pure
// function of the seed; sample i carries label i % K so any prefix split
// stays class-balanced.
struct SampleSource {
    SourceKind kind = SourceKind::SyntheticClusters;
    Array samples;           // N x P (vector) or N x H x W (grid)
    std::vector<int> labels; // in [0, K)
    int class_count = 0;

    Index size() const { return samples.rank() >= 1 ? samples.shape[0] : 0; }
    Index input_dim() const; // flattened per-sample dimension
    bool is_grid() const { return kind == SourceKind::GridDataset; }
    Index grid_h() const { return is_grid() ? samples.shape[1] : 0; }
    Index grid_w() const { return is_grid() ? samples.shape[2] : 0; }
};

SampleSource make_synthetic_clusters(Index input_dim, int class_count, Index size,
                                     double sigma_class, std::uint64_t seed);
SampleSource make_grid_dataset(Index grid_size, int class_count, Index size, double sigma_class,
                               std::uint64_t seed);
SampleSource source_from_embeddings(EmbeddingSet set);

struct ScaleRange {
    double lo = 0.0;
    double hi = 1.0;
};

struct ViewConfig {
    Index global_views = 2;
    Index local_views = 6;
    double noise_sigma = 0.05;
    double mask_fraction_global = 0.1;
    double mask_fraction_local = 0.5;
    ScaleRange crop_scale_global{0.4, 1.0};
    ScaleRange crop_scale_local{0.05, 0.4};
    double flip_prob = 0.5;

    Index total_views() const { return global_views + local_views; }
    void validate() const;
};

// Raw multi-view input batch: B x V x P (vector mode) or B x V x H x W
// (grid mode). V = global_views + local_views; global views come first.
// Identical (indices, cfg, seed) give bitwise identical batches.
Array make_views(const SampleSource& source, const std::vector<Index>& indices,
                 const ViewConfig& cfg, std::uint64_t seed);

// Analysis-only ingestion of externally computed embeddings.
EmbeddingSet load_embeddings(const std::string& path, const std::string& labels_path = "");

} // namespace hypersolid::views
