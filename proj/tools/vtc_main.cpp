#include <cstring>
#include <iostream>
#include <string>
#include <vector>

#include "vtc/experiment.hpp"
#include "vtc/trainer.hpp"

namespace {

void print_usage() {
    std::cout <<
        "vtc - co-training workbench for a factorized space-time transformer\n"
        "\n"
        "Usage: vtc <command> [options]\n"
        "\n"
        "Commands:\n"
        "  gen       write dataset manifests for a config\n"
        "  pretrain  spatial-only pretraining on image datasets\n"
        "  cotrain   joint training over all registered datasets\n"
        "  eval      evaluate a checkpoint on every registered dataset\n"
        "  probe     run a probe experiment (see --probe)\n"
        "  report    merge run-directory reports into one summary\n"
        "\n"
        "Options:\n"
        "  --config PATH       experiment config (JSON); required except for report\n"
        "  --checkpoint PATH   input checkpoint (cotrain init, eval, probe)\n"
        "  --out DIR           run directory (overrides io.run_dir)\n"
        "  --seed N            override io.seed\n"
        "  --probe KIND        reversal | transfer | ablation\n"
        "  --overwrite         allow replacing existing run artifacts\n"
        "\n"
        "report takes run directories as positional arguments.\n";
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        print_usage();
        return 2;
    }
    const std::string command = argv[1];
    if (command == "--help" || command == "-h" || command == "help") {
        print_usage();
        return 0;
    }

    vtc::CliOptions opts;
    std::vector<std::string> positional;
    for (int i = 2; i < argc; ++i) {
        const std::string arg = argv[i];
        auto value = [&](const char* flag) -> std::string {
            if (i + 1 >= argc) {
                std::cerr << "error: " << flag << " needs a value\n";
                exit(2);
            }
            return argv[++i];
        };
        if (arg == "--config")
            opts.config_path = value("--config");
        else if (arg == "--checkpoint")
            opts.checkpoint = value("--checkpoint");
        else if (arg == "--out")
            opts.out = value("--out");
        else if (arg == "--probe")
            opts.probe = value("--probe");
        else if (arg == "--seed")
            opts.seed = std::stoull(value("--seed"));
        else if (arg == "--overwrite")
            opts.overwrite = true;
        else if (!arg.empty() && arg[0] == '-') {
            std::cerr << "error: unknown option '" << arg << "'\n";
            return 2;
        } else {
            positional.push_back(arg);
        }
    }

    try {
        if (command == "gen") return vtc::cmd_gen(opts);
        if (command == "pretrain") return vtc::cmd_train(opts, vtc::Stage::Pretrain);
        if (command == "cotrain") return vtc::cmd_train(opts, vtc::Stage::Cotrain);
        if (command == "eval") return vtc::cmd_eval(opts);
        if (command == "probe") return vtc::cmd_probe(opts);
        if (command == "report") {
            if (positional.empty()) {
                std::cerr << "error: report needs at least one run directory\n";
                return 2;
            }
            return vtc::cmd_report(positional, opts.out);
        }
        std::cerr << "error: unknown command '" << command << "'\n";
        print_usage();
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
