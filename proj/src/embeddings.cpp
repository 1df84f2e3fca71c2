#include "hypersolid/embeddings.hpp"

#include <cstring>
#include <fstream>
#include <set>

namespace hypersolid {

namespace {

constexpr char kMagic[6] = {'H', 'S', 'E', 'B', '1', '\n'};

std::uint32_t read_u32_le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>((v >> 8) & 0xff),
                                static_cast<unsigned char>((v >> 16) & 0xff),
                                static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace

int EmbeddingSet::class_count() const {
    if (!has_labels()) return 0;
    int max_label = -1;
    for (int l : labels) max_label = std::max(max_label, l);
    return max_label + 1;
}

void EmbeddingSet::validate() const {
    if (embeddings.rank() != 2) throw DimensionError("embedding set must be a rank-2 matrix");
    if (has_labels() && labels.size() != embeddings.shape[0]) {
        throw FormatError("label count does not match embedding rows");
    }
}

nd::Array read_hseb(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open embedding file: " + path);
    char magic[6];
    in.read(magic, 6);
    if (!in || std::memcmp(magic, kMagic, 6) != 0) {
        throw FormatError("bad HSEB magic in " + path);
    }
    const std::uint32_t n = read_u32_le(in);
    const std::uint32_t d = read_u32_le(in);
    unsigned char dtype = 0;
    in.read(reinterpret_cast<char*>(&dtype), 1);
    if (!in) throw FormatError("truncated HSEB header in " + path);
    if (dtype != 0 && dtype != 1) throw FormatError("unknown HSEB dtype tag in " + path);
    if (n == 0) throw FormatError("HSEB file holds an empty embedding set: " + path);
    if (d == 0) throw FormatError("HSEB file has zero embedding dimension: " + path);

    nd::Array out({static_cast<nd::Index>(n), static_cast<nd::Index>(d)});
    const std::size_t count = static_cast<std::size_t>(n) * d;
    if (dtype == 0) {
        std::vector<float> buf(count);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * sizeof(float)));
        if (!in) throw FormatError("truncated HSEB payload in " + path);
        for (std::size_t i = 0; i < count; ++i) out.data[i] = static_cast<double>(buf[i]);
    } else {
        in.read(reinterpret_cast<char*>(out.data.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (!in) throw FormatError("truncated HSEB payload in " + path);
    }
    return out;
}

void write_hseb(const std::string& path, const nd::Array& matrix, HsebDtype dtype) {
    if (matrix.rank() != 2) throw DimensionError("HSEB writer expects a rank-2 matrix");
    if (matrix.shape[0] == 0) throw ArgumentError("refusing to write an empty embedding set");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open for writing: " + path);
    out.write(kMagic, 6);
    write_u32_le(out, static_cast<std::uint32_t>(matrix.shape[0]));
    write_u32_le(out, static_cast<std::uint32_t>(matrix.shape[1]));
    const unsigned char tag = static_cast<unsigned char>(dtype);
    out.write(reinterpret_cast<const char*>(&tag), 1);
    if (dtype == HsebDtype::F32) {
        std::vector<float> buf(matrix.data.size());
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(matrix.data[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    } else {
        out.write(reinterpret_cast<const char*>(matrix.data.data()),
                  static_cast<std::streamsize>(matrix.data.size() * sizeof(double)));
    }
    if (!out) throw FormatError("write failed: " + path);
}

std::vector<int> read_labels(const std::string& path, nd::Index expected_count) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open labels file: " + path);
    std::vector<int> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            std::size_t pos = 0;
            const int v = std::stoi(line, &pos);
            while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\r' || line[pos] == '\t')) ++pos;
            if (pos != line.size()) throw FormatError("");
            labels.push_back(v);
        } catch (const std::exception&) {
            throw FormatError("labels file has a non-integer line: " + path);
        }
    }
    if (labels.size() != expected_count) {
        throw FormatError("labels file row count (" + std::to_string(labels.size()) +
                          ") does not match embedding rows (" + std::to_string(expected_count) + ")");
    }
    return labels;
}

void write_labels(const std::string& path, const std::vector<int>& labels) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot open for writing: " + path);
    for (int l : labels) out << l << '\n';
    if (!out) throw FormatError("write failed: " + path);
}

EmbeddingSet load_embedding_set(const std::string& embeddings_path, const std::string& labels_path) {
    EmbeddingSet set;
    set.embeddings = read_hseb(embeddings_path);
    if (!labels_path.empty()) {
        set.labels = read_labels(labels_path, set.embeddings.shape[0]);
    }
    set.validate();
    return set;
}

} // namespace hypersolid
