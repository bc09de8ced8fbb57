#include "acuity/checkpoint.hpp"

#include <sstream>

#include "acuity/errors.hpp"

namespace acuity {

namespace {

std::vector<std::string> words(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

std::string tensor_name(const char* kind, std::size_t layer, std::size_t index) {
    return std::string(kind) + "." + std::to_string(layer) + "." + std::to_string(index);
}

} // namespace

std::string encode_layer(const nn::LayerSpec& spec) {
    std::ostringstream out;
    std::visit(
        [&](const auto& s) {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, nn::ConvSpec>)
                out << "conv " << s.out_channels << ' ' << s.kernel_h << ' ' << s.kernel_w << ' ' << s.stride << ' '
                    << s.pad;
            else if constexpr (std::is_same_v<S, nn::MaxPoolSpec>)
                out << "maxpool " << s.window << ' ' << s.stride;
            else if constexpr (std::is_same_v<S, nn::LrnSpec>)
                out << "lrn " << s.size << ' ' << format_double(s.k) << ' ' << format_double(s.alpha) << ' '
                    << format_double(s.beta);
            else if constexpr (std::is_same_v<S, nn::DenseSpec>)
                out << "dense " << s.units << ' ' << nn::activation_name(s.activation) << ' '
                    << format_double(s.dropout_rate);
            else
                out << "flatten";
        },
        spec);
    return out.str();
}

nn::LayerSpec decode_layer(const std::string& text) {
    const auto w = words(text);
    auto expect = [&](std::size_t n) {
        if (w.size() != n) throw PersistenceError("malformed layer spec '" + text + "'");
    };
    if (w.empty()) throw PersistenceError("empty layer spec");
    nn::LayerSpec spec;
    if (w[0] == "conv") {
        expect(6);
        spec = nn::ConvSpec{parse_u64(w[1]), parse_u64(w[2]), parse_u64(w[3]), parse_u64(w[4]), parse_u64(w[5])};
    } else if (w[0] == "maxpool") {
        expect(3);
        spec = nn::MaxPoolSpec{parse_u64(w[1]), parse_u64(w[2])};
    } else if (w[0] == "lrn") {
        expect(5);
        spec = nn::LrnSpec{parse_u64(w[1]), parse_double(w[2]), parse_double(w[3]), parse_double(w[4])};
    } else if (w[0] == "dense") {
        expect(4);
        spec = nn::DenseSpec{parse_u64(w[1]), nn::parse_activation(w[2]), parse_double(w[3])};
    } else if (w[0] == "flatten") {
        expect(1);
        spec = nn::FlattenSpec{};
    } else {
        throw PersistenceError("unknown layer kind '" + w[0] + "'");
    }
    nn::validate(spec);
    return spec;
}

Archive checkpoint_to_archive(const Checkpoint& checkpoint) {
    const auto& net = checkpoint.network;
    nn::validate(net);
    Archive a;
    a.set("kind", "checkpoint");
    a.set("input_shape", format_shape(net.input_shape));
    for (const auto& spec : net.specs) a.fields.emplace_back("layer", encode_layer(spec));
    a.set("epoch", std::to_string(net.epoch_counter));
    a.set("hyper.learning_rate", format_double(checkpoint.hyper.learning_rate));
    a.set("hyper.momentum", format_double(checkpoint.hyper.momentum));
    a.set("hyper.batch_size", std::to_string(checkpoint.hyper.batch_size));
    a.set("rng.seed", std::to_string(checkpoint.rng.seed));
    a.set("rng.stream", std::to_string(checkpoint.rng.stream));
    a.set("rng.counter", std::to_string(checkpoint.rng.counter));
    for (const auto& [k, v] : checkpoint.metadata) {
        if (v.find('\n') != std::string::npos) throw PersistenceError("metadata values must be single-line");
        a.set("meta." + k, v);
    }
    for (std::size_t i = 0; i < net.params.size(); ++i)
        for (std::size_t j = 0; j < net.params[i].size(); ++j)
            a.tensors.emplace_back(tensor_name("param", i, j), net.params[i][j]);
    for (std::size_t i = 0; i < net.velocities.size(); ++i)
        for (std::size_t j = 0; j < net.velocities[i].size(); ++j)
            a.tensors.emplace_back(tensor_name("velocity", i, j), net.velocities[i][j]);
    return a;
}

Checkpoint checkpoint_from_archive(const Archive& a) {
    if (!a.has("kind") || a.get("kind") != "checkpoint") throw PersistenceError("archive is not a checkpoint");
    Checkpoint c;
    auto& net = c.network;
    net.input_shape = parse_shape(a.get("input_shape"));
    for (const auto& text : a.get_all("layer")) net.specs.push_back(decode_layer(text));
    net.epoch_counter = parse_u64(a.get("epoch"));
    c.hyper.learning_rate = parse_double(a.get("hyper.learning_rate"));
    c.hyper.momentum = parse_double(a.get("hyper.momentum"));
    c.hyper.batch_size = parse_u64(a.get("hyper.batch_size"));
    c.rng = {parse_u64(a.get("rng.seed")), parse_u64(a.get("rng.stream")), parse_u64(a.get("rng.counter"))};
    for (const auto& [k, v] : a.fields)
        if (k.starts_with("meta.")) c.metadata[k.substr(5)] = v;

    const auto shapes = nn::parameter_shapes(net.input_shape, net.specs);
    net.params.resize(shapes.size());
    net.velocities.resize(shapes.size());
    for (std::size_t i = 0; i < shapes.size(); ++i)
        for (std::size_t j = 0; j < shapes[i].size(); ++j) {
            net.params[i].push_back(a.tensor(tensor_name("param", i, j)));
            net.velocities[i].push_back(a.tensor(tensor_name("velocity", i, j)));
        }
    try {
        nn::validate(net);
    } catch (const StateError& e) {
        throw PersistenceError(std::string("checkpoint is inconsistent: ") + e.what());
    }
    return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    save_archive(checkpoint_to_archive(checkpoint), path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return checkpoint_from_archive(load_archive(path));
}

} // namespace acuity
