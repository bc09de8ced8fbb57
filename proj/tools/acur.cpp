#include <cstdlib>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "acuity/cli.hpp"
#include "acuity/errors.hpp"

namespace {

using acuity::cli::ConfigMap;

struct FlagSpec {
    const char* key;
    const char* help;
};

constexpr FlagSpec kFlags[] = {
    {"protocol", "training protocol: LH HH HL LL MIXED PRETRAIN_MIXED MIXED_ONLY SHRINK_LIA SHRINK_HIA"},
    {"scale", "network scale: desk or full"},
    {"epochs-scale", "multiplier on the 500-epoch base schedule"},
    {"sigma", "blur sigma used by blurred training phases"},
    {"factors", "comma list of shrink factors drawn by coin-shrink training"},
    {"seed", "base seed; repetition i uses seed+i"},
    {"reps", "number of repetitions"},
    {"data", "corpus directory (root/<identity>/<image>.pgm) or manifest file"},
    {"out", "output directory"},
    {"checkpoint", "checkpoint path(s), comma separated"},
    {"layers", "comma list of layer indices for transfer"},
    {"axis", "sweep axis: blur or shrink"},
    {"sigmas", "comma list of blur sigmas for sweeps"},
    {"shrink-factors", "comma list of shrink factors for sweeps"},
    {"lr", "learning rate"},
    {"momentum", "momentum"},
    {"batch-size", "batch size"},
    {"equalized", "PRETRAIN_MIXED: match the 500-epoch total"},
    {"augment", "random flip and rotation during training"},
    {"max-rotation", "maximum rotation angle in degrees"},
    {"min-count", "drop identities with fewer images"},
    {"cap", "keep at most this many images per identity"},
    {"train-fraction", "per-identity training fraction"},
    {"split-seed", "seed for filtering and the train/test split"},
    {"identities", "synth-data: number of identities"},
    {"images", "synth-data: images per identity"},
    {"svm-lambda", "SVM L2 weight"},
    {"svm-epochs", "SVM epochs"},
    {"svm-lr", "SVM step size"},
    {"transfer-source", "transfer target: split or unseen"},
};

struct Command {
    CLI::App* app = nullptr;
    std::string config_file;
    std::map<std::string, std::string> values;
};

void add_flags(Command& cmd) {
    cmd.app->add_option("--config", cmd.config_file, "key=value config file; flags override it");
    for (const auto& f : kFlags) cmd.app->add_option(std::string("--") + f.key, cmd.values[f.key], f.help);
}

ConfigMap resolve(const Command& cmd) {
    ConfigMap config;
    if (!cmd.config_file.empty()) config = acuity::cli::read_config_file(cmd.config_file);
    for (const auto& f : kFlags)
        if (cmd.app->count(std::string("--") + f.key) > 0) config[f.key] = cmd.values.at(f.key);
    return config;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acuity curriculum laboratory"};
    app.require_subcommand(1);

    std::map<std::string, Command> commands;
    const std::pair<const char*, const char*> names[] = {
        {"train", "train a network under a protocol"},
        {"sweep", "blur or shrink sweep over one or more checkpoints"},
        {"transfer", "linear-SVM transfer from hidden layers"},
        {"rf", "receptive-field extent of the first conv layer"},
        {"synth-data", "write a seeded synthetic face corpus"},
    };
    for (const auto& [name, help] : names) {
        auto& cmd = commands[name];
        cmd.app = app.add_subcommand(name, help);
        add_flags(cmd);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        for (auto& [name, cmd] : commands) {
            if (!cmd.app->parsed()) continue;
            const auto config = acuity::cli::RunConfig::from_map(resolve(cmd));
            if (name == "train") acuity::cli::cmd_train(config, std::cerr);
            else if (name == "sweep") acuity::cli::cmd_sweep(config, std::cerr);
            else if (name == "transfer") acuity::cli::cmd_transfer(config, std::cerr);
            else if (name == "rf") acuity::cli::cmd_rf(config, std::cerr);
            else acuity::cli::cmd_synth_data(config, std::cerr);
        }
    } catch (const acuity::ParameterError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
