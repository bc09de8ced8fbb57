#include "acuity/cli.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>

#include <openssl/evp.h>

#include <json.hpp>

#include "acuity/archive.hpp"
#include "acuity/checkpoint.hpp"
#include "acuity/errors.hpp"
#include "acuity/parallel.hpp"
#include "acuity/training.hpp"

namespace acuity::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> parse_doubles(const std::string& text) {
    std::vector<double> out;
    for (const auto& s : split_list(text)) out.push_back(parse_double(s));
    return out;
}

std::string join_doubles(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_double(values[i]);
    return out;
}

bool parse_bool(const std::string& text) {
    if (text == "1" || text == "true" || text == "on" || text == "yes") return true;
    if (text == "0" || text == "false" || text == "off" || text == "no") return false;
    throw ParameterError("not a boolean: '" + text + "'");
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, text);
}

ordered_json config_json(const ConfigMap& config) {
    ordered_json j = ordered_json::object();
    for (const auto& [k, v] : config) j[k] = v;
    return j;
}

void write_run_record(const fs::path& dir, const std::string& command, const RunConfig& config,
                      const std::vector<fs::path>& checkpoints, ordered_json results) {
    ordered_json record;
    record["command"] = command;
    record["seed"] = config.seed;
    record["config"] = config_json(config.to_map());
    ordered_json ckpts = ordered_json::array();
    for (const auto& c : checkpoints) ckpts.push_back({{"path", c.string()}, {"sha1", file_git_sha1(c)}});
    record["checkpoints"] = ckpts;
    record["results"] = std::move(results);
    write_text(dir / "run.json", record.dump(2) + "\n");
    write_text(dir / "run.cfg", format_config(config.to_map()));
}

} // namespace

ConfigMap parse_config_text(const std::string& text) {
    ConfigMap out;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ParameterError("config line " + std::to_string(number) + " has no '=': " + t);
        out[trim(std::string_view(t).substr(0, eq))] = trim(std::string_view(t).substr(eq + 1));
    }
    return out;
}

ConfigMap read_config_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string format_config(const ConfigMap& config) {
    std::string out;
    for (const auto& [k, v] : config) out += k + "=" + v + "\n";
    return out;
}

nn::Scale parse_scale(const std::string& text) {
    if (text == "desk") return nn::Scale::desk;
    if (text == "full") return nn::Scale::full;
    throw ParameterError("unknown scale '" + text + "' (expected desk or full)");
}

std::string to_string(nn::Scale scale) {
    return scale == nn::Scale::desk ? "desk" : "full";
}

nn::HyperParams default_hyper(nn::Scale scale) {
    if (scale == nn::Scale::full) return {0.001, 0.9, 128};
    return {0.01, 0.9, 32};
}

RunConfig RunConfig::from_map(const ConfigMap& config) {
    RunConfig c;
    auto get = [&](const char* key) -> const std::string* {
        const auto it = config.find(key);
        return it == config.end() ? nullptr : &it->second;
    };
    if (auto v = get("scale")) c.scale = parse_scale(*v);
    c.hyper = default_hyper(c.scale);

    using Setter = std::function<void(const std::string&)>;
    const std::map<std::string, Setter> setters = {
        {"scale", [](const std::string&) {}},
        {"protocol", [&](const std::string& v) { c.protocol = parse_protocol(v); }},
        {"epochs-scale", [&](const std::string& v) { c.epochs_scale = parse_double(v); }},
        {"sigma", [&](const std::string& v) { c.sigma = parse_double(v); }},
        {"factors", [&](const std::string& v) { c.factors = parse_doubles(v); }},
        {"equalized", [&](const std::string& v) { c.equalized = parse_bool(v); }},
        {"augment", [&](const std::string& v) { c.augment = parse_bool(v); }},
        {"max-rotation", [&](const std::string& v) { c.max_rotation = parse_double(v); }},
        {"seed", [&](const std::string& v) { c.seed = parse_u64(v); }},
        {"reps", [&](const std::string& v) { c.reps = parse_u64(v); }},
        {"lr", [&](const std::string& v) { c.hyper.learning_rate = parse_double(v); }},
        {"momentum", [&](const std::string& v) { c.hyper.momentum = parse_double(v); }},
        {"batch-size", [&](const std::string& v) { c.hyper.batch_size = parse_u64(v); }},
        {"data", [&](const std::string& v) { c.data = v; }},
        {"out", [&](const std::string& v) { c.out = v; }},
        {"checkpoint",
         [&](const std::string& v) {
             c.checkpoints.clear();
             for (const auto& p : split_list(v)) c.checkpoints.emplace_back(p);
         }},
        {"layers",
         [&](const std::string& v) {
             c.layers.clear();
             for (const auto& p : split_list(v)) c.layers.push_back(parse_u64(p));
         }},
        {"axis", [&](const std::string& v) { c.axis = parse_axis(v); }},
        {"sigmas", [&](const std::string& v) { c.sigmas = parse_doubles(v); }},
        {"shrink-factors", [&](const std::string& v) { c.shrink_factors = parse_doubles(v); }},
        {"min-count", [&](const std::string& v) { c.min_count = parse_u64(v); }},
        {"cap", [&](const std::string& v) { c.cap = parse_u64(v); }},
        {"train-fraction", [&](const std::string& v) { c.train_fraction = parse_double(v); }},
        {"split-seed", [&](const std::string& v) { c.split_seed = parse_u64(v); }},
        {"identities", [&](const std::string& v) { c.identities = parse_u64(v); }},
        {"images", [&](const std::string& v) { c.images = parse_u64(v); }},
        {"svm-lambda", [&](const std::string& v) { c.svm.lambda = parse_double(v); }},
        {"svm-epochs", [&](const std::string& v) { c.svm.epochs = parse_u64(v); }},
        {"svm-lr", [&](const std::string& v) { c.svm.learning_rate = parse_double(v); }},
        {"transfer-source",
         [&](const std::string& v) {
             if (v != "split" && v != "unseen") throw ParameterError("transfer-source must be split or unseen");
             c.transfer_source = v;
         }},
    };
    for (const auto& [key, value] : config) {
        const auto it = setters.find(key);
        if (it == setters.end()) throw ParameterError("unknown config key '" + key + "'");
        try {
            it->second(value);
        } catch (const ParameterError& e) {
            throw ParameterError("config key '" + key + "': " + e.what());
        }
    }
    if (c.reps == 0) throw ParameterError("reps must be >= 1");
    c.hyper.validate();
    if (!(c.epochs_scale > 0.0)) throw ParameterError("epochs-scale must be > 0");
    return c;
}

ConfigMap RunConfig::to_map() const {
    ConfigMap m;
    m["protocol"] = to_string(protocol);
    m["scale"] = to_string(scale);
    m["epochs-scale"] = format_double(epochs_scale);
    m["sigma"] = format_double(sigma);
    m["factors"] = join_doubles(factors);
    m["equalized"] = equalized ? "true" : "false";
    m["augment"] = augment ? "true" : "false";
    m["max-rotation"] = format_double(max_rotation);
    m["seed"] = std::to_string(seed);
    m["reps"] = std::to_string(reps);
    m["lr"] = format_double(hyper.learning_rate);
    m["momentum"] = format_double(hyper.momentum);
    m["batch-size"] = std::to_string(hyper.batch_size);
    m["data"] = data.string();
    m["out"] = out.string();
    std::string ck;
    for (std::size_t i = 0; i < checkpoints.size(); ++i) ck += (i ? "," : "") + checkpoints[i].string();
    m["checkpoint"] = ck;
    std::string ls;
    for (std::size_t i = 0; i < layers.size(); ++i) ls += (i ? "," : "") + std::to_string(layers[i]);
    m["layers"] = ls;
    m["axis"] = axis == AxisKind::blur_sigma ? "blur" : "shrink";
    m["sigmas"] = join_doubles(sigmas);
    m["shrink-factors"] = join_doubles(shrink_factors);
    m["min-count"] = std::to_string(min_count);
    m["cap"] = std::to_string(cap);
    m["train-fraction"] = format_double(train_fraction);
    m["split-seed"] = std::to_string(split_seed);
    m["identities"] = std::to_string(identities);
    m["images"] = std::to_string(images);
    m["svm-lambda"] = format_double(svm.lambda);
    m["svm-epochs"] = std::to_string(svm.epochs);
    m["svm-lr"] = format_double(svm.learning_rate);
    m["transfer-source"] = transfer_source;
    return m;
}

std::size_t RunConfig::image_size() const {
    return nn::Architecture::for_scale(scale).input_size;
}

CurriculumOptions RunConfig::curriculum() const {
    CurriculumOptions o;
    o.epochs_scale = epochs_scale;
    o.sigma = sigma;
    o.factors = factors;
    o.augment = augment;
    o.max_rotation_deg = max_rotation;
    o.equalized = equalized;
    return o;
}

std::string git_blob_sha1(const std::vector<std::uint8_t>& bytes) {
    const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &length) != 1)
        throw Error("SHA-1 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < length; ++i) {
        const unsigned char b = digest[i];
        out += hex[b >> 4];
        out += hex[b & 15];
    }
    return out;
}

std::string file_git_sha1(const fs::path& path) {
    return git_blob_sha1(read_file(path));
}

DatasetManifest load_dataset(const RunConfig& config, std::ostream& log) {
    if (config.data.empty()) throw ParameterError("--data is required");
    if (!fs::exists(config.data)) throw DataError("data path " + config.data.string() + " does not exist");
    if (fs::is_regular_file(config.data)) return load_manifest(config.data);

    const std::size_t size = config.image_size();
    auto ingested = ingest_corpus(config.data, size, size);
    for (const auto& issue : ingested.report) log << "skipped " << issue.path << ": " << issue.message << "\n";
    ManifestOptions options;
    options.min_count = config.min_count;
    options.cap = config.cap;
    options.train_fraction = config.train_fraction;
    options.split_seed = config.split_seed;
    auto manifest = build_manifest(ingested.records, options);
    fs::create_directories(config.out);
    save_manifest(manifest, config.out / "manifest.acm");
    log << "ingested " << ingested.records.size() << " images; " << manifest.n_identities << " identities kept, "
        << manifest.n_unseen_identities << " below min-count\n";
    return manifest;
}

namespace {

void check_compatible(const nn::NetworkState& net, const DatasetManifest& data) {
    if (data.train.empty() && data.test.empty()) throw DataError("dataset has no records");
    const auto& img = (data.test.empty() ? data.train : data.test).front().image;
    if (net.input_shape != Shape{1, img.height, img.width})
        throw DataError("checkpoint expects input " + shape_string(net.input_shape) + " but the corpus has " +
                        std::to_string(img.height) + "x" + std::to_string(img.width) + " images");
    if (net.class_count() != data.n_identities)
        throw DataError("checkpoint has " + std::to_string(net.class_count()) + " classes but the corpus has " +
                        std::to_string(data.n_identities) + " identities");
}

Checkpoint train_one(const RunConfig& config, const DatasetManifest& data, std::uint64_t seed, const fs::path& dir,
                     const std::optional<fs::path>& resume, std::ostream& log, std::mutex& log_mutex,
                     std::vector<EpochLog>& epochs) {
    const auto schedule = build_schedule(config.protocol, config.curriculum());
    Checkpoint ckpt;
    if (resume) {
        ckpt = load_checkpoint(*resume);
        check_compatible(ckpt.network, data);
        if (ckpt.metadata.contains("protocol") && ckpt.metadata.at("protocol") != to_string(config.protocol))
            throw DataError("checkpoint was trained with protocol " + ckpt.metadata.at("protocol"));
    } else {
        auto net = nn::build_standard_network(config.scale, data.n_identities, seed);
        ckpt = initial_checkpoint(std::move(net), config.hyper, seed);
    }
    auto meta = config.to_map();
    meta["seed"] = std::to_string(seed);
    meta["checkpoint"] = "";
    meta["out"] = "";
    ckpt.metadata = meta;

    TrainOptions options;
    options.checkpoint_dir = dir / "phases";
    options.on_epoch = [&](const EpochLog& e) {
        std::lock_guard lock(log_mutex);
        log << "[seed " << seed << "] epoch " << e.epoch + 1 << "/" << schedule.total_epochs << " phase " << e.phase
            << " (" << e.mode << ") loss " << e.train_loss << " acc " << e.train_accuracy << "\n";
    };
    epochs = train(ckpt, data.train, schedule, options);
    fs::create_directories(dir);
    save_checkpoint(ckpt, dir / "final.ckpt");
    write_text(dir / "training_log.csv", training_log_csv(epochs));
    return ckpt;
}

fs::path rep_dir(const RunConfig& config, std::uint64_t seed) {
    return config.reps == 1 ? config.out : config.out / ("seed_" + std::to_string(seed));
}

} // namespace

TrainOutcome cmd_train(const RunConfig& config, std::ostream& log) {
    const auto data = load_dataset(config, log);
    if (config.checkpoints.size() > 1 || (config.checkpoints.size() == 1 && config.reps != 1))
        throw ParameterError("resuming takes exactly one checkpoint and reps = 1");
    std::optional<fs::path> resume;
    if (!config.checkpoints.empty()) resume = config.checkpoints.front();

    TrainOutcome outcome;
    outcome.checkpoints.resize(config.reps);
    outcome.logs.resize(config.reps);
    std::mutex log_mutex;
    parallel_for(config.reps, [&](std::size_t i) {
        const std::uint64_t seed = config.seed + i;
        const auto dir = rep_dir(config, seed);
        train_one(config, data, seed, dir, resume, log, log_mutex, outcome.logs[i]);
        outcome.checkpoints[i] = dir / "final.ckpt";
    });

    ordered_json results = ordered_json::array();
    for (std::size_t i = 0; i < config.reps; ++i) {
        const auto& l = outcome.logs[i];
        ordered_json r{{"seed", config.seed + i}, {"epochs", l.size()}};
        if (!l.empty()) {
            r["final_train_loss"] = l.back().train_loss;
            r["final_train_acc"] = l.back().train_accuracy;
        }
        results.push_back(r);
    }
    write_run_record(config.out, "train", config, outcome.checkpoints, results);
    return outcome;
}

SweepResult cmd_sweep(const RunConfig& config, std::ostream& log) {
    const auto data = load_dataset(config, log);
    if (data.test.empty()) throw DataError("dataset has no test split");

    auto run_sweep = [&](const nn::NetworkState& net) {
        check_compatible(net, data);
        return config.axis == AxisKind::blur_sigma ? blur_sweep(net, data.test, config.sigmas)
                                                   : shrink_sweep(net, data.test, config.shrink_factors);
    };

    SweepResult result;
    std::vector<fs::path> used;
    std::string protocol = to_string(config.protocol);
    if (!config.checkpoints.empty()) {
        if (config.reps != 1 && config.reps != config.checkpoints.size())
            throw ParameterError("reps must equal the number of checkpoints given");
        std::vector<SweepResult> reps;
        for (const auto& path : config.checkpoints) {
            const auto ckpt = load_checkpoint(path);
            if (const auto it = ckpt.metadata.find("protocol"); it != ckpt.metadata.end()) protocol = it->second;
            reps.push_back(run_sweep(ckpt.network));
            used.push_back(path);
        }
        result = aggregate(reps);
    } else {
        std::mutex log_mutex;
        std::vector<fs::path> paths(config.reps);
        result = repeat_and_aggregate(
            [&](std::uint64_t seed) {
                const auto dir = config.out / ("seed_" + std::to_string(seed));
                std::vector<EpochLog> epochs;
                const auto ckpt = train_one(config, data, seed, dir, std::nullopt, log, log_mutex, epochs);
                paths[seed - config.seed] = dir / "final.ckpt";
                return run_sweep(ckpt.network);
            },
            config.reps, config.seed);
        used = paths;
    }

    const std::string name = config.axis == AxisKind::blur_sigma ? "sweep_blur.csv" : "sweep_shrink.csv";
    write_text(config.out / name, sweep_csv(protocol, result));
    ordered_json points = ordered_json::array();
    for (const auto& p : result.points)
        points.push_back({{"param", p.param}, {"mean", p.mean_accuracy}, {"ste", p.ste}, {"n_reps", p.n_reps}});
    write_run_record(config.out, "sweep", config, used,
                     {{"axis_kind", to_string(result.axis)}, {"auc", result.auc},
                      {"auc_degenerate", result.auc_degenerate}, {"points", points}});
    log << to_string(result.axis) << " auc " << result.auc << "\n";
    return result;
}

std::vector<TransferPoint> cmd_transfer(const RunConfig& config, std::ostream& log) {
    if (config.layers.empty()) throw ParameterError("--layers must list at least one layer index");
    if (config.checkpoints.size() != 1) throw ParameterError("transfer takes exactly one --checkpoint");
    const auto ckpt = load_checkpoint(config.checkpoints.front());
    const auto& net = ckpt.network;
    const auto target = load_dataset(config, log);

    std::vector<ImageRecord> train_set = target.train, test_set = target.test;
    if (config.transfer_source == "unseen") {
        std::vector<ImageRecord> usable;
        std::map<std::size_t, std::size_t> counts;
        for (const auto& r : target.unseen) ++counts[r.identity];
        std::map<std::size_t, std::size_t> remap;
        for (const auto& [id, n] : counts)
            if (n >= 2) remap.emplace(id, remap.size());
        for (auto r : target.unseen)
            if (remap.contains(r.identity)) {
                r.identity = remap.at(r.identity);
                usable.push_back(std::move(r));
            }
        if (remap.size() < 2) throw DataError("fewer than two unseen identities with at least two images");
        auto split = split_records(usable, config.train_fraction, RandomSource(config.split_seed).split(7));
        train_set = std::move(split.train);
        test_set = std::move(split.test);
    }
    const auto& sample = (train_set.empty() ? test_set : train_set);
    if (sample.empty()) throw DataError("target corpus is empty");
    if (net.input_shape != Shape{1, sample.front().image.height, sample.front().image.width})
        throw DataError("target images do not match the checkpoint's input size");

    const auto points = transfer_eval(net, config.layers, train_set, test_set, config.svm, config.seed);
    write_text(config.out / "transfer.csv", transfer_csv(points));
    ordered_json rows = ordered_json::array();
    for (const auto& p : points)
        rows.push_back({{"layer", p.layer},
                        {"feature_dim", p.feature_dim},
                        {"train_acc", p.train_accuracy},
                        {"test_acc", p.test_accuracy}});
    write_run_record(config.out, "transfer", config, config.checkpoints, rows);
    for (const auto& p : points)
        log << "layer " << p.layer << " (" << p.feature_dim << " features): train " << p.train_accuracy << " test "
            << p.test_accuracy << "\n";
    return points;
}

std::string rf_report_json(const RfReport& report, const ConfigMap& config, const std::string& checkpoint_sha1) {
    ordered_json j;
    j["kernel"] = {report.kernel_h, report.kernel_w};
    j["extents"] = report.extents;
    j["zero_filters"] = report.zero_filters;
    j["summary"] = {{"mean", report.mean}, {"median", report.median}, {"q1", report.q1},
                    {"q3", report.q3},     {"min", report.min},       {"max", report.max}};
    j["checkpoint_sha1"] = checkpoint_sha1;
    j["config"] = config_json(config);
    return j.dump(2) + "\n";
}

RfReport cmd_rf(const RunConfig& config, std::ostream& log) {
    if (config.checkpoints.size() != 1) throw ParameterError("rf takes exactly one --checkpoint");
    const auto& path = config.checkpoints.front();
    const auto ckpt = load_checkpoint(path);
    const auto& net = ckpt.network;
    if (net.specs.empty() || !std::holds_alternative<nn::ConvSpec>(net.specs.front()))
        throw DataError("the first layer of the checkpoint is not a convolution");
    const auto report = receptive_field_extent(net.params.front().front());
    write_text(config.out / "rf.json", rf_report_json(report, config.to_map(), file_git_sha1(path)));
    log << "rf extent mean " << report.mean << " median " << report.median << " over " << report.extents.size()
        << " filters\n";
    return report;
}

std::size_t cmd_synth_data(const RunConfig& config, std::ostream& log) {
    SyntheticOptions options;
    options.identities = config.identities;
    options.images_per_identity = config.images;
    options.size = config.image_size();
    options.seed = config.seed;
    const auto records = generate_synthetic_faces(options);
    const auto n = write_corpus(config.out, records);
    log << "wrote " << n << " images for " << config.identities << " identities to " << config.out.string() << "\n";
    return n;
}

} // namespace acuity::cli
