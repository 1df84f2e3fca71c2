#include "hypersolid/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "hypersolid/rng.hpp"

namespace hypersolid::model {

std::vector<Index> EncoderConfig::layer_dims() const {
    std::vector<Index> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
    dims.push_back(projector_dim);
    return dims;
}

void EncoderConfig::validate() const {
    if (projector_dim < 2) throw ConfigError("model.projector_dim must be at least 2");
    if (input_dim == 0) throw ConfigError("encoder input_dim must be positive");
    for (Index h : hidden_dims) {
        if (h == 0) throw ConfigError("model.hidden_dims entries must be positive");
    }
    if ((grid_h == 0) != (grid_w == 0)) throw ConfigError("grid dims must be set together");
    if (grid_h != 0 && grid_h * grid_w != input_dim) {
        throw ConfigError("grid dims are inconsistent with encoder input_dim");
    }
}

bool Parameters::all_finite() const {
    for (const Array& w : weights)
        if (!w.all_finite()) return false;
    for (const Array& b : biases)
        if (!b.all_finite()) return false;
    return true;
}

Parameters init(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    Parameters p;
    p.config = config;
    p.init_seed = seed;
    const std::vector<Index> dims = config.layer_dims();
    for (Index l = 0; l + 1 < dims.size(); ++l) {
        const Index fan_in = dims[l], fan_out = dims[l + 1];
        Array w({fan_in, fan_out});
        rng::Stream s(rng::mix(seed, 0x7E16B4, l)); // layer-keyed stream
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& v : w.data) v = s.uniform(-bound, bound);
        p.weights.push_back(std::move(w));
        p.biases.push_back(Array({fan_out}));
    }
    return p;
}

ForwardNodes forward_on_tape(Tape& tape, const Parameters& params, const Array& views) {
    if (views.rank() < 3) throw DimensionError("encoder expects B x V x ... input");
    const Index b = views.shape[0], v = views.shape[1];
    Index feat = 1;
    for (Index i = 2; i < views.rank(); ++i) feat *= views.shape[i];
    if (feat != params.config.input_dim) {
        throw DimensionError("input feature dimension " + std::to_string(feat) +
                             " does not match encoder input_dim " +
                             std::to_string(params.config.input_dim));
    }

    ForwardNodes nodes;
    nodes.input = tape.leaf(Array({b * v, feat}, views.data), "input");
    NodeId x = nodes.input;
    const Index layers = params.layer_count();
    for (Index l = 0; l < layers; ++l) {
        nodes.weights.push_back(tape.leaf(params.weights[l], "weight"));
        nodes.biases.push_back(tape.leaf(params.biases[l], "bias"));
        x = tape.add_rowvec(tape.matmul(x, nodes.weights[l]), nodes.biases[l]);
        if (l + 1 < layers) x = tape.tanh_act(x); // projector stays linear
        if (!tape.value(x).all_finite()) {
            throw NumericError("encoder layer " + std::to_string(l) +
                               " produced non-finite activations");
        }
    }
    nodes.output = tape.reshape(x, {b, v, params.config.projector_dim});
    return nodes;
}

Array forward(const Parameters& params, const Array& views) {
    Tape tape;
    return tape.value(forward_on_tape(tape, params, views).output);
}

// ---------------------------------------------------------------------------
// checkpoint io
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[6] = {'H', 'S', 'C', 'K', '1', '\n'};

void write_u32_le(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>((v >> 8) & 0xff),
                                static_cast<unsigned char>((v >> 16) & 0xff),
                                static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u16_le(std::ostream& out, std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>((v >> 8) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

std::uint16_t read_u16_le(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

} // namespace

void save_checkpoint(const Parameters& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open checkpoint for writing: " + path);

    std::ostringstream header;
    header << "model.input_dim=" << params.config.input_dim << '\n';
    header << "model.hidden_dims=";
    for (Index i = 0; i < params.config.hidden_dims.size(); ++i) {
        if (i) header << ',';
        header << params.config.hidden_dims[i];
    }
    header << '\n';
    header << "model.projector_dim=" << params.config.projector_dim << '\n';
    header << "model.grid_h=" << params.config.grid_h << '\n';
    header << "model.grid_w=" << params.config.grid_w << '\n';
    header << "init_seed=" << params.init_seed << '\n';
    header << "arrays=" << 2 * params.layer_count() << '\n';
    const std::string h = header.str();

    out.write(kMagic, 6);
    write_u32_le(out, static_cast<std::uint32_t>(h.size()));
    out.write(h.data(), static_cast<std::streamsize>(h.size()));

    auto write_array = [&out](const std::string& name, const Array& a) {
        const Index rows = a.rank() == 2 ? a.shape[0] : 1;
        const Index cols = a.rank() == 2 ? a.shape[1] : a.shape[0];
        write_u16_le(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32_le(out, static_cast<std::uint32_t>(rows));
        write_u32_le(out, static_cast<std::uint32_t>(cols));
        const unsigned char dtype = 1; // f64
        out.write(reinterpret_cast<const char*>(&dtype), 1);
        out.write(reinterpret_cast<const char*>(a.data.data()),
                  static_cast<std::streamsize>(a.data.size() * sizeof(double)));
    };
    for (Index l = 0; l < params.layer_count(); ++l) {
        write_array("w" + std::to_string(l), params.weights[l]);
        write_array("b" + std::to_string(l), params.biases[l]);
    }
    if (!out) throw FormatError("checkpoint write failed: " + path);
}

Parameters load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint: " + path);
    char magic[6];
    in.read(magic, 6);
    if (!in || std::memcmp(magic, kMagic, 6) != 0) throw FormatError("bad checkpoint magic in " + path);
    const std::uint32_t header_len = read_u32_le(in);
    if (!in || header_len > (1u << 20)) throw FormatError("corrupt checkpoint header in " + path);
    std::string header(header_len, '\0');
    in.read(header.data(), header_len);
    if (!in) throw FormatError("truncated checkpoint header in " + path);

    std::map<std::string, std::string> kv;
    std::istringstream hs(header);
    std::string line;
    while (std::getline(hs, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("malformed checkpoint header line: " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto need = [&kv, &path](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw FormatError("checkpoint header missing key '" + key + "' in " + path);
        return it->second;
    };

    Parameters p;
    p.config.input_dim = static_cast<Index>(std::stoull(need("model.input_dim")));
    p.config.hidden_dims.clear();
    {
        std::istringstream ds(need("model.hidden_dims"));
        std::string tok;
        while (std::getline(ds, tok, ',')) {
            if (!tok.empty()) p.config.hidden_dims.push_back(static_cast<Index>(std::stoull(tok)));
        }
    }
    p.config.projector_dim = static_cast<Index>(std::stoull(need("model.projector_dim")));
    p.config.grid_h = static_cast<Index>(std::stoull(need("model.grid_h")));
    p.config.grid_w = static_cast<Index>(std::stoull(need("model.grid_w")));
    p.init_seed = std::stoull(need("init_seed"));
    const Index array_count = static_cast<Index>(std::stoull(need("arrays")));
    p.config.validate();

    for (Index a = 0; a < array_count; ++a) {
        const std::uint16_t name_len = read_u16_le(in);
        if (!in) throw FormatError("truncated checkpoint section in " + path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const std::uint32_t rows = read_u32_le(in);
        const std::uint32_t cols = read_u32_le(in);
        unsigned char dtype = 0;
        in.read(reinterpret_cast<char*>(&dtype), 1);
        if (!in || dtype != 1) throw FormatError("corrupt checkpoint section '" + name + "' in " + path);
        const bool is_bias = !name.empty() && name[0] == 'b';
        Array arr = is_bias ? Array({static_cast<Index>(cols)})
                            : Array({static_cast<Index>(rows), static_cast<Index>(cols)});
        if (is_bias && rows != 1) throw FormatError("bias section with multiple rows in " + path);
        in.read(reinterpret_cast<char*>(arr.data.data()),
                static_cast<std::streamsize>(arr.data.size() * sizeof(double)));
        if (!in) throw FormatError("truncated checkpoint payload in " + path);
        if (is_bias) {
            p.biases.push_back(std::move(arr));
        } else {
            p.weights.push_back(std::move(arr));
        }
    }
    if (p.weights.size() != p.biases.size() ||
        p.weights.size() != p.config.hidden_dims.size() + 1) {
        throw FormatError("checkpoint layer structure is inconsistent in " + path);
    }
    const std::vector<Index> dims = p.config.layer_dims();
    for (Index l = 0; l < p.layer_count(); ++l) {
        if (p.weights[l].shape != std::vector<Index>{dims[l], dims[l + 1]} ||
            p.biases[l].shape != std::vector<Index>{dims[l + 1]}) {
            throw FormatError("checkpoint array shapes do not match config in " + path);
        }
    }
    return p;
}

} // namespace hypersolid::model
