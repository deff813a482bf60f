// Command-line entry point: prepare, train, evaluate, plot, run-all.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ecg/error.hpp"
#include "ecg/pipeline.hpp"

namespace {

using ecg::pipeline::RunConfig;

struct Options {
    std::string config_file;
    std::optional<std::uint64_t> seed;
    std::optional<double> threshold;
    bool synthetic = false;
    std::string out;
    std::string metadata;
    std::string signal_dir;
    std::optional<std::size_t> samples;
    std::optional<std::size_t> max_epochs;
    std::vector<std::string> settings;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config_file, "key = value config file");
    cmd->add_option("--seed", o.seed, "run seed");
    cmd->add_option("--threshold", o.threshold, "decision threshold for evaluation");
    cmd->add_flag("--synthetic", o.synthetic, "use the synthetic desk-scale preset");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--metadata", o.metadata, "metadata CSV (real mode)");
    cmd->add_option("--signal-dir", o.signal_dir, "directory holding the signal files");
    cmd->add_option("--samples", o.samples, "synthetic corpus size");
    cmd->add_option("--max-epochs", o.max_epochs, "upper bound on training epochs");
    cmd->add_option("--set", o.settings, "extra config setting, KEY=VALUE (repeatable)");
    cmd->add_flag("--quiet", o.quiet, "suppress per-epoch progress");
}

// Base preset, then the config file, then flags.
RunConfig resolve(const Options& o) {
    RunConfig c = o.synthetic ? RunConfig::synthetic_preset() : RunConfig{};
    if (!o.config_file.empty()) ecg::pipeline::apply_config_text(c, ecg::pipeline::read_text(o.config_file));
    for (const auto& s : o.settings) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ecg::Error(ecg::ErrorKind::InvalidConfig, "--set expects KEY=VALUE, got " + s);
        ecg::pipeline::apply_setting(c, s.substr(0, eq), s.substr(eq + 1));
    }
    if (o.synthetic) c.mode = ecg::pipeline::DataMode::Synthetic;
    if (o.seed) c.seed = *o.seed;
    if (o.threshold) c.threshold = *o.threshold;
    if (!o.out.empty()) c.out_dir = o.out;
    if (!o.metadata.empty()) c.metadata = o.metadata;
    if (!o.signal_dir.empty()) c.signal_dir = o.signal_dir;
    if (o.samples) c.synthetic_samples = *o.samples;
    if (o.max_epochs) c.train.max_epochs = *o.max_epochs;

    if (c.mode == ecg::pipeline::DataMode::Real && c.metadata.empty()) {
        if (const char* dir = std::getenv("ECG_DATA_DIR"); dir && *dir) {
            c.metadata = std::filesystem::path(dir) / "metadata.csv";
            if (c.signal_dir.empty()) c.signal_dir = dir;
        }
    }
    return c;
}

ecg::training::TrainHooks progress_hooks(bool quiet) {
    ecg::training::TrainHooks hooks;
    if (!quiet) {
        hooks.on_epoch = [](const ecg::training::EpochLog& e) {
            std::fprintf(stderr, "epoch %zu  lr %.3g  loss %.4f  acc %.4f  val_loss %.4f  val_acc %.4f\n", e.epoch, e.lr,
                         e.train_loss, e.train_acc, e.val_loss, e.val_acc);
        };
    }
    return hooks;
}

int report_error(const std::string& kind, const std::string& message, int code) {
    nlohmann::json j = {{"error", kind}, {"message", message}};
    std::cerr << j.dump() << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ECG multi-label classification with a convolutional VAE encoder"};
    app.require_subcommand(1);

    Options opts;
    std::string checkpoint, history, report;

    auto* prepare = app.add_subcommand("prepare", "balance, normalize and weight the training data");
    auto* train = app.add_subcommand("train", "train from prepared artifacts");
    auto* evaluate = app.add_subcommand("evaluate", "score the test fold");
    auto* plot = app.add_subcommand("plot", "render SVG curves and confusion heatmaps");
    auto* run_all = app.add_subcommand("run-all", "prepare, train, evaluate and plot");
    for (auto* cmd : {prepare, train, evaluate, run_all}) add_common(cmd, opts);
    evaluate->add_option("--checkpoint", checkpoint, "checkpoint to evaluate (default: <out>/checkpoint_best.cvae)");
    plot->add_option("--history", history, "training history CSV");
    plot->add_option("--report", report, "evaluation report JSON");
    plot->add_option("--out", opts.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("UsageError", e.what(), 2);
    }

    try {
        if (plot->parsed()) {
            auto opt = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<std::filesystem::path>(s); };
            for (const auto& p : ecg::pipeline::cmd_plot(opt(history), opt(report), opts.out)) {
                std::cout << p.string() << "\n";
            }
            return 0;
        }

        const RunConfig config = resolve(opts);
        if (prepare->parsed()) {
            const auto a = ecg::pipeline::cmd_prepare(config);
            std::cout << a.summary.string() << "\n";
        } else if (train->parsed()) {
            const auto a = ecg::pipeline::cmd_train(config, progress_hooks(opts.quiet));
            std::cout << "stopped after " << a.stop.epochs_completed << " epochs (" << a.stop.reason << "), best epoch "
                      << a.stop.best_epoch << "\n";
        } else if (evaluate->parsed()) {
            const auto ckpt = checkpoint.empty() ? std::nullopt : std::optional<std::filesystem::path>(checkpoint);
            const auto a = ecg::pipeline::cmd_evaluate(config, ckpt);
            std::cout << a.report.string() << "\n";
        } else if (run_all->parsed()) {
            ecg::pipeline::cmd_prepare(config);
            const auto t = ecg::pipeline::cmd_train(config, progress_hooks(opts.quiet));
            const auto e = ecg::pipeline::cmd_evaluate(config);
            ecg::pipeline::cmd_plot(t.history, e.report, config.out_dir);
            const auto& last = t.history_rows.back();
            std::cout << "epochs " << t.stop.epochs_completed << ", final val_acc " << last.val_acc << ", outputs in "
                      << config.out_dir.string() << "\n";
        }
    } catch (const ecg::Error& e) {
        return report_error(std::string(ecg::kind_name(e.kind())), e.detail(), ecg::exit_code(e.kind()));
    } catch (const std::filesystem::filesystem_error& e) {
        return report_error("IoFailure", e.what(), ecg::exit_code(ecg::ErrorKind::IoFailure));
    } catch (const std::exception& e) {
        return report_error("Internal", e.what(), 1);
    }
    return 0;
}
