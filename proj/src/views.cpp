#include "hypersolid/views.hpp"

#include <algorithm>
#include <cmath>

#include "hypersolid/rng.hpp"

namespace hypersolid::views {

SourceKind parse_source_kind(const std::string& s) {
    if (s == "synthetic") return SourceKind::SyntheticClusters;
    if (s == "grid") return SourceKind::GridDataset;
    if (s == "external") return SourceKind::ExternalEmbeddings;
    throw ConfigError("unknown source kind '" + s + "' (expected synthetic|grid|external)");
}

std::string to_string(SourceKind k) {
    switch (k) {
        case SourceKind::SyntheticClusters: return "synthetic";
        case SourceKind::GridDataset: return "grid";
        case SourceKind::ExternalEmbeddings: return "external";
    }
    return "?";
}

Index SampleSource::input_dim() const {
    if (samples.rank() < 2) return 0;
    Index d = 1;
    for (Index i = 1; i < samples.rank(); ++i) d *= samples.shape[i];
    return d;
}

SampleSource make_synthetic_clusters(Index input_dim, int class_count, Index size,
                                     double sigma_class, std::uint64_t seed) {
    if (input_dim == 0 || class_count < 1 || size == 0) {
        throw ArgumentError("synthetic source needs positive dimension, classes and size");
    }
    // K prototypes drawn uniformly on the unit sphere in R^P.
    Array prototypes({static_cast<Index>(class_count), input_dim});
    rng::Stream proto_rng(rng::mix(seed, 0xC1A55E5));
    for (int k = 0; k < class_count; ++k) {
        double norm2 = 0.0;
        for (Index j = 0; j < input_dim; ++j) {
            const double v = proto_rng.normal();
            prototypes(static_cast<Index>(k), j) = v;
            norm2 += v * v;
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (Index j = 0; j < input_dim; ++j) prototypes(static_cast<Index>(k), j) *= inv;
    }

    SampleSource src;
    src.kind = SourceKind::SyntheticClusters;
    src.class_count = class_count;
    src.samples = Array({size, input_dim});
    src.labels.resize(size);
    for (Index i = 0; i < size; ++i) {
        const int label = static_cast<int>(i % static_cast<Index>(class_count));
        src.labels[i] = label;
        rng::Stream s(rng::mix(seed, 0x5A3C7E, i));
        for (Index j = 0; j < input_dim; ++j) {
            src.samples(i, j) = prototypes(static_cast<Index>(label), j) + sigma_class * s.normal();
        }
    }
    return src;
}

SampleSource make_grid_dataset(Index grid_size, int class_count, Index size, double sigma_class,
                               std::uint64_t seed) {
    if (grid_size < 2 || class_count < 1 || size == 0) {
        throw ArgumentError("grid source needs grid size >= 2, positive classes and size");
    }
    // Class prototypes: seeded noise grids smoothed into coarse blobs so that
    // crops of the same class stay recognizably similar.
    const Index g = grid_size;
    std::vector<Array> prototypes;
    prototypes.reserve(static_cast<std::size_t>(class_count));
    for (int k = 0; k < class_count; ++k) {
        Array p({g, g});
        rng::Stream s(rng::mix(seed, 0x69D1D, static_cast<std::uint64_t>(k)));
        for (Index i = 0; i < g * g; ++i) p.data[i] = s.normal();
        for (int pass = 0; pass < 2; ++pass) p = nd::kernels::gaussian_blur2d(p, 1.0, 2);
        // rescale to unit RMS
        double rms = 0.0;
        for (double v : p.data) rms += v * v;
        rms = std::sqrt(rms / static_cast<double>(p.numel()));
        for (double& v : p.data) v /= (rms > 0.0 ? rms : 1.0);
        prototypes.push_back(std::move(p));
    }

    SampleSource src;
    src.kind = SourceKind::GridDataset;
    src.class_count = class_count;
    src.samples = Array({size, g, g});
    src.labels.resize(size);
    for (Index i = 0; i < size; ++i) {
        const int label = static_cast<int>(i % static_cast<Index>(class_count));
        src.labels[i] = label;
        rng::Stream s(rng::mix(seed, 0x6A1D5, i));
        const Array& proto = prototypes[static_cast<std::size_t>(label)];
        for (Index j = 0; j < g * g; ++j) {
            src.samples.data[i * g * g + j] = proto.data[j] + sigma_class * s.normal();
        }
    }
    return src;
}

SampleSource source_from_embeddings(EmbeddingSet set) {
    set.validate();
    SampleSource src;
    src.kind = SourceKind::ExternalEmbeddings;
    src.class_count = set.class_count();
    src.samples = std::move(set.embeddings);
    src.labels = std::move(set.labels);
    return src;
}

void ViewConfig::validate() const {
    if (global_views < 2) throw ConfigError("views.global_views must be at least 2");
    if (mask_fraction_global < 0.0 || mask_fraction_global >= 1.0 || mask_fraction_local < 0.0 ||
        mask_fraction_local >= 1.0) {
        throw ConfigError("mask fractions must lie in [0, 1)");
    }
    if (mask_fraction_local < mask_fraction_global) {
        throw ConfigError("views.mask_fraction_local must be >= views.mask_fraction_global");
    }
    if (noise_sigma < 0.0) throw ConfigError("views.noise_sigma must be >= 0");
    if (flip_prob < 0.0 || flip_prob > 1.0) throw ConfigError("views.flip_prob must lie in [0, 1]");
    auto check_range = [](const ScaleRange& r, const char* name) {
        if (!(r.lo > 0.0) || r.hi > 1.0 || r.lo > r.hi) {
            throw ConfigError(std::string(name) + " must satisfy 0 < lo <= hi <= 1");
        }
    };
    check_range(crop_scale_global, "views.crop_scale_global");
    check_range(crop_scale_local, "views.crop_scale_local");
}

namespace {

// Zero-mask a random coordinate subset; local views mask a larger fraction.
void mask_coords(double* row, Index dim, double fraction, rng::Stream& s) {
    const Index count = static_cast<Index>(std::llround(fraction * static_cast<double>(dim)));
    if (count == 0) return;
    std::vector<Index> idx(dim);
    for (Index i = 0; i < dim; ++i) idx[i] = i;
    for (Index i = 0; i < count; ++i) {
        const Index j = i + static_cast<Index>(s.below(dim - i));
        std::swap(idx[i], idx[j]);
        row[idx[i]] = 0.0;
    }
}

void vector_view(const SampleSource& src, Index sample, double* out, Index dim, bool is_local,
                 const ViewConfig& cfg, rng::Stream& s) {
    const double* x = src.samples.data.data() + sample * dim;
    for (Index j = 0; j < dim; ++j) {
        out[j] = x[j] + (cfg.noise_sigma > 0.0 ? cfg.noise_sigma * s.normal() : 0.0);
    }
    mask_coords(out, dim, is_local ? cfg.mask_fraction_local : cfg.mask_fraction_global, s);
}

Array bilinear_resize(const Array& a, Index out_h, Index out_w) {
    const Index in_h = a.shape[0], in_w = a.shape[1];
    Array out({out_h, out_w});
    for (Index i = 0; i < out_h; ++i) {
        double sy = (static_cast<double>(i) + 0.5) * static_cast<double>(in_h) /
                        static_cast<double>(out_h) -
                    0.5;
        sy = std::min(std::max(sy, 0.0), static_cast<double>(in_h - 1));
        const Index y0 = static_cast<Index>(sy);
        const Index y1 = std::min(y0 + 1, in_h - 1);
        const double fy = sy - static_cast<double>(y0);
        for (Index j = 0; j < out_w; ++j) {
            double sx = (static_cast<double>(j) + 0.5) * static_cast<double>(in_w) /
                            static_cast<double>(out_w) -
                        0.5;
            sx = std::min(std::max(sx, 0.0), static_cast<double>(in_w - 1));
            const Index x0 = static_cast<Index>(sx);
            const Index x1 = std::min(x0 + 1, in_w - 1);
            const double fx = sx - static_cast<double>(x0);
            out(i, j) = (1.0 - fy) * ((1.0 - fx) * a(y0, x0) + fx * a(y0, x1)) +
                        fy * ((1.0 - fx) * a(y1, x0) + fx * a(y1, x1));
        }
    }
    return out;
}

// Random crop within the scale range, resize back to the source grid size,
// optional horizontal flip, additive noise.
void grid_view(const SampleSource& src, Index sample, double* out, bool is_local,
               const ViewConfig& cfg, rng::Stream& s) {
    const Index g = src.grid_h();
    Array full({g, g});
    std::copy_n(src.samples.data.data() + sample * g * g, g * g, full.data.begin());

    const ScaleRange& range = is_local ? cfg.crop_scale_local : cfg.crop_scale_global;
    const double area = s.uniform(range.lo, range.hi);
    Index side = static_cast<Index>(std::llround(std::sqrt(area) * static_cast<double>(g)));
    side = std::min(std::max<Index>(side, 1), g);
    const Index y0 = side < g ? static_cast<Index>(s.below(g - side + 1)) : 0;
    const Index x0 = side < g ? static_cast<Index>(s.below(g - side + 1)) : 0;
    Array crop({side, side});
    for (Index i = 0; i < side; ++i)
        for (Index j = 0; j < side; ++j) crop(i, j) = full(y0 + i, x0 + j);
    Array view = (side == g) ? std::move(crop) : bilinear_resize(crop, g, g);

    if (s.uniform() < cfg.flip_prob) {
        for (Index i = 0; i < g; ++i)
            for (Index j = 0; j < g / 2; ++j) std::swap(view(i, j), view(i, g - 1 - j));
    }
    for (Index i = 0; i < g * g; ++i) {
        out[i] = view.data[i] + (cfg.noise_sigma > 0.0 ? cfg.noise_sigma * s.normal() : 0.0);
    }
}

} // namespace

Array make_views(const SampleSource& source, const std::vector<Index>& indices,
                 const ViewConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (indices.empty()) throw ArgumentError("make_views: empty index list");
    if (source.kind == SourceKind::ExternalEmbeddings) {
        throw ArgumentError("external embedding sources cannot be augmented into views");
    }
    for (Index i : indices) {
        if (i >= source.size()) throw ArgumentError("make_views: sample index out of range");
    }
    const Index b = indices.size();
    const Index v = cfg.total_views();
    const Index dim = source.input_dim();

    std::vector<Index> shape;
    if (source.is_grid()) {
        shape = {b, v, source.grid_h(), source.grid_w()};
    } else {
        shape = {b, v, dim};
    }
    Array out(std::move(shape));

    for (Index bi = 0; bi < b; ++bi) {
        for (Index vi = 0; vi < v; ++vi) {
            const bool is_local = vi >= cfg.global_views;
            // Per-(sample, view) stream keyed by position, not by evaluation
            // order, so batches are reproducible and parallelizable.
            rng::Stream s(rng::mix(seed, indices[bi], vi));
            double* row = out.data.data() + (bi * v + vi) * dim;
            if (source.is_grid()) {
                grid_view(source, indices[bi], row, is_local, cfg, s);
            } else {
                vector_view(source, indices[bi], row, dim, is_local, cfg, s);
            }
        }
    }
    return out;
}

EmbeddingSet load_embeddings(const std::string& path, const std::string& labels_path) {
    return load_embedding_set(path, labels_path);
}

} // namespace hypersolid::views
