// secnn command-line tool: gen-synth, train, eval, inspect, gradcheck.
//
// Exit codes: 0 ok, 1 configuration / usage error (including failed
// inspect expectations and gradcheck failures), 2 data error, 3 training
// divergence.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "secnn/gradsuite.hpp"
#include "secnn/kernels.hpp"
#include "secnn/train.hpp"

namespace fs = std::filesystem;
using namespace secnn;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr const char* kOutputEnv = "SECNN_OUTPUT_DIR";

int exit_code_for(ErrorKind k) {
    switch (k) {
        case ErrorKind::NoClasses:
        case ErrorKind::EmptyClass:
        case ErrorKind::UndecodableImage:
        case ErrorKind::EmptySplit:
        case ErrorKind::IoFailure:
        case ErrorKind::CorruptCheckpoint:
        case ErrorKind::ClassMismatch:
            return 2;
        case ErrorKind::DivergedLoss:
            return 3;
        default:
            return 1;
    }
}

int report_error(const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
}

// --out beats the environment; the environment beats the fallback.
fs::path output_dir(const std::string& flag, const fs::path& fallback) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv(kOutputEnv); env && *env) return env;
    return fallback;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::IoFailure, "cannot write " + path.string());
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
    if (!out) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

std::string read_text(const fs::path& path, ErrorKind kind) {
    std::ifstream in(path);
    if (!in) fail(kind, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- gen-synth -----------------------------------------------------------------

struct GenArgs {
    std::string out;
    SyntheticSpec spec;
};

int cmd_gen_synth(const GenArgs& a) {
    if (a.spec.num_classes < 2) fail(ErrorKind::InvalidConfig, "--classes must be >= 2");
    if (a.spec.per_class < 1) fail(ErrorKind::InvalidConfig, "--per-class must be >= 1");
    if (a.spec.image_size < 8) fail(ErrorKind::InvalidConfig, "--size must be >= 8");
    const fs::path root = output_dir(a.out, "synthetic");
    gen_synthetic(root, a.spec);
    std::cout << "wrote " << a.spec.num_classes * a.spec.per_class << " images (" << a.spec.num_classes
              << " classes, " << a.spec.image_size << "x" << a.spec.image_size << ") to " << root.string() << '\n';
    return 0;
}

// ---- train -----------------------------------------------------------------------

struct TrainArgs {
    std::string data, config_file, out;
    // Flag values; only the ones given on the command line are applied.
    std::string model;
    bool tl = false, augment = true, deterministic = true;
    std::size_t epochs = 0, batch_size = 0, base_channels = 0, resolution = 0;
    double lr = 0, head_dropout = 0, weight_decay = 0, block_dropout = 0, val_fraction = 0;
    double hflip = 0, rotation = 0, brightness = 0, contrast = 0, saturation = 0;
    std::uint64_t seed = 0;
    std::map<std::string, CLI::Option*> opts;
};

TrainConfig effective_config(const TrainArgs& a) {
    TrainConfig cfg;
    bool lr_set = false;
    auto given = [&](const char* name) { return a.opts.at(name)->count() > 0; };
    if (!a.config_file.empty()) {
        const std::string text = read_text(a.config_file, ErrorKind::InvalidConfig);
        cfg = config_from_json(text, cfg);
        lr_set = ojson::parse(text).contains("lr");
    }
    ojson flags = ojson::object();
    if (given("model")) flags["model"] = a.model;
    if (given("tl")) flags["tl"] = a.tl;
    if (given("epochs")) flags["epochs"] = a.epochs;
    if (given("batch-size")) flags["batch-size"] = a.batch_size;
    if (given("lr")) flags["lr"] = a.lr;
    if (given("head-dropout")) flags["head-dropout"] = a.head_dropout;
    if (given("weight-decay")) flags["weight-decay"] = a.weight_decay;
    if (given("block-dropout")) flags["block-dropout"] = a.block_dropout;
    if (given("base-channels")) flags["base-channels"] = a.base_channels;
    if (given("seed")) flags["seed"] = a.seed;
    if (given("resolution")) flags["resolution"] = a.resolution;
    if (given("augment")) flags["augment"] = a.augment;
    if (given("hflip-prob")) flags["hflip-prob"] = a.hflip;
    if (given("rotation")) flags["rotation"] = a.rotation;
    if (given("brightness")) flags["brightness"] = a.brightness;
    if (given("contrast")) flags["contrast"] = a.contrast;
    if (given("saturation")) flags["saturation"] = a.saturation;
    if (given("val-fraction")) flags["val-fraction"] = a.val_fraction;
    if (given("deterministic")) flags["deterministic"] = a.deterministic;
    cfg = config_from_json(flags.dump(), cfg);
    // Transfer runs only train the head and default to the larger step.
    if (cfg.transfer && !lr_set && !given("lr")) cfg.lr = 1e-3;
    cfg.validate();
    return cfg;
}

void write_run_files(const fs::path& dir, const TrainConfig& cfg, const DatasetIndex& index, const FitResult& res,
                     bool diverged) {
    save_checkpoint(dir / "checkpoint.secnn", res.best);
    if (!res.records.empty()) export_curves(res.records, dir / "curves.csv", cfg.deterministic);

    ojson m;
    m["tool"] = "secnn";
    m["version"] = kVersion;
    m["command"] = "train";
    m["data_root"] = index.root.string();
    m["classes"] = index.classes;
    m["train_samples"] = index.count(Split::train);
    m["val_samples"] = index.count(Split::val);
    m["config"] = ojson::parse(config_to_json(cfg));
    m["optimizer"] = {{"name", "adam"}, {"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8},
                      {"decay", "conv/linear weights only"}};
    m["kernels"] = std::string(to_string(active_kernels().isa));
    m["epochs_completed"] = res.records.size();
    m["best_epoch"] = res.best.epoch;
    m["best_val_accuracy"] = res.best.val_accuracy;
    m["diverged"] = diverged;
    m["artifacts"] = {"checkpoint.secnn", "curves.csv", "report.json", "report.txt", "timing.json"};
    write_text(dir / "manifest.json", m.dump(2));

    // Wall-clock numbers live here so the files above stay reproducible.
    ojson t;
    auto& per = t["epoch_seconds"] = ojson::array();
    for (const auto& r : res.records) per.push_back(r.seconds);
    t["total_seconds"] = res.total_seconds;
    write_text(dir / "timing.json", t.dump(2));
}

void write_eval_files(const fs::path& dir, const EvalReport& rep, std::optional<double> seconds) {
    EvalReport r = rep;
    if (!r.train_seconds) r.train_seconds = seconds;
    write_text(dir / "report.json", eval_report_to_json(r));
    write_text(dir / "report.txt", format_eval_report(r));
    if (r.report.roc) write_curve_csv(dir / "roc.csv", "fpr", r.report.roc->fpr, "tpr", r.report.roc->tpr);
    if (r.report.pr)
        write_curve_csv(dir / "pr.csv", "recall", r.report.pr->recall, "precision", r.report.pr->precision);
}

int cmd_train(const TrainArgs& a) {
    const TrainConfig cfg = effective_config(a);
    // Data problems surface before anything is written.
    if (!fs::is_directory(a.data)) fail(ErrorKind::NoClasses, "data directory '" + a.data + "' does not exist");
    const DatasetIndex index = build_index(a.data, cfg.val_fraction, cfg.seed);
    if (index.count(Split::train) == 0) fail(ErrorKind::EmptySplit, "training split is empty");
    if (index.count(Split::val) == 0) fail(ErrorKind::EmptySplit, "validation split is empty");

    const fs::path dir = output_dir(a.out, fs::path("runs") / "train");
    fs::create_directories(dir);
    std::cout << "training " << to_string(cfg.model) << (cfg.transfer ? " (transfer)" : "") << " on "
              << index.num_classes() << " classes, " << index.count(Split::train) << " train / "
              << index.count(Split::val) << " val images at " << cfg.resolution << "x" << cfg.resolution << '\n';

    FitHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& r) {
        std::cout << "epoch " << std::setw(3) << r.epoch << "/" << cfg.epochs << std::fixed << std::setprecision(4)
                  << "  train_loss " << r.train_loss << "  train_acc " << r.train_acc << "  val_loss " << r.val_loss
                  << "  val_acc " << r.val_acc << std::setprecision(1) << "  (" << r.seconds << "s)" << std::endl;
    };
    FitResult res;
    try {
        res = fit(cfg, index, hooks);
    } catch (const TrainingDiverged& e) {
        write_run_files(dir, cfg, index, e.partial(), true);
        throw;
    }
    write_run_files(dir, cfg, index, res, false);
    const EvalReport rep = evaluate(res.best, index, Split::val);
    write_eval_files(dir, rep, res.total_seconds);
    std::cout << std::fixed << std::setprecision(4) << "best epoch " << res.best.epoch << ": val_acc "
              << res.best.val_accuracy << "; total " << std::setprecision(1) << res.total_seconds << "s\n"
              << "outputs in " << dir.string() << '\n';
    return 0;
}

// ---- eval ------------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint, data, split = "val", out;
};

int cmd_eval(const EvalArgs& a) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    if (!fs::is_directory(a.data)) fail(ErrorKind::NoClasses, "data directory '" + a.data + "' does not exist");
    const DatasetIndex index = build_index(a.data, ckpt.config.val_fraction, ckpt.config.seed);
    const Split split = a.split == "train" ? Split::train : Split::val;
    const EvalReport rep = evaluate(ckpt, index, split);

    // Deterministic runs keep wall-clock time next to the checkpoint.
    std::optional<double> seconds = ckpt.train_seconds;
    const fs::path timing = fs::path(a.checkpoint).parent_path() / "timing.json";
    if (!seconds && fs::exists(timing)) {
        try {
            seconds = ojson::parse(read_text(timing, ErrorKind::IoFailure)).at("total_seconds").get<double>();
        } catch (const std::exception&) {
        }
    }
    EvalReport shown = rep;
    shown.train_seconds = seconds;
    std::cout << format_eval_report(shown);
    std::string out = a.out;
    if (out.empty())
        if (const char* env = std::getenv(kOutputEnv); env && *env) out = env;
    if (!out.empty()) {
        fs::create_directories(out);
        write_eval_files(out, shown, seconds);
    }
    return 0;
}

// ---- inspect ---------------------------------------------------------------------

struct InspectArgs {
    std::string model = "custom";
    std::size_t classes = 2, base_channels = 32, resolution = 224;
    bool tl = false;
    double head_dropout = 0.5;
    std::optional<std::size_t> expect_total, expect_trainable;
};

int cmd_inspect(const InspectArgs& a) {
    TrainConfig cfg;
    const auto arch = parse_architecture(a.model);
    if (!arch) fail(ErrorKind::InvalidConfig, "unknown model '" + a.model + "'");
    cfg.model = *arch;
    cfg.transfer = a.tl;
    cfg.base_channels = a.base_channels;
    cfg.head_dropout = a.head_dropout;
    if (a.classes < 2) fail(ErrorKind::InvalidConfig, "--classes must be >= 2");
    if (a.tl && cfg.model == Architecture::custom_cnn)
        fail(ErrorKind::InvalidConfig, "--tl applies to resnet50/vgg16 only");
    ModelGraph model = [&] {
        switch (cfg.model) {
            case Architecture::custom_cnn: {
                CustomCnnConfig c;
                c.base_channels = a.base_channels;
                c.num_classes = a.classes;
                c.head_dropout = a.head_dropout;
                return build_custom_cnn(c);
            }
            case Architecture::resnet50: return build_resnet50(a.classes);
            case Architecture::vgg16: return build_vgg16(a.classes);
        }
        fail(ErrorKind::UnsupportedModel, "unknown architecture");
    }();
    if (a.tl) freeze_for_transfer(model, a.head_dropout);
    std::cout << format_summary(model, {1, 3, a.resolution, a.resolution});

    const ParamCount pc = param_count(model);
    int rc = 0;
    if (a.expect_total && *a.expect_total != pc.total) {
        std::cerr << "expectation failed: total params expected " << *a.expect_total << ", got " << pc.total << '\n';
        rc = 1;
    }
    if (a.expect_trainable && *a.expect_trainable != pc.trainable) {
        std::cerr << "expectation failed: trainable params expected " << *a.expect_trainable << ", got "
                  << pc.trainable << '\n';
        rc = 1;
    }
    return rc;
}

// ---- gradcheck -------------------------------------------------------------------

struct GradArgs {
    std::string scope;
    double tolerance = 1e-4;
    std::uint64_t seed = 0;
};

int cmd_gradcheck(const GradArgs& a) {
    const auto scope = parse_grad_scope(a.scope);
    if (!scope) fail(ErrorKind::InvalidConfig, "scope must be layers, blocks or model");
    const auto results = run_grad_suite(*scope, a.tolerance, a.seed);
    std::size_t failed = 0;
    for (const auto& r : results) {
        std::printf("%-34s max_rel_err %.3e  coords %6zu  %s\n", r.unit.c_str(), r.report.max_rel_err,
                    r.report.coords_checked, r.report.pass ? "ok" : "FAIL");
        if (!r.report.pass) {
            std::printf("    worst at %s\n", r.report.worst.c_str());
            ++failed;
        }
    }
    std::printf("%zu/%zu units pass at tolerance %.0e\n", results.size() - failed, results.size(), a.tolerance);
    return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"secnn: residual-SE CNN training, evaluation and inspection"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    GenArgs gen;
    auto* g = app.add_subcommand("gen-synth", "write a synthetic folder-per-class PPM dataset");
    g->add_option("--out", gen.out, "dataset root (default: $SECNN_OUTPUT_DIR or ./synthetic)");
    g->add_option("--classes", gen.spec.num_classes, "number of classes")->capture_default_str();
    g->add_option("--per-class", gen.spec.per_class, "images per class")->capture_default_str();
    g->add_option("--size", gen.spec.image_size, "image side in pixels")->capture_default_str();
    g->add_option("--seed", gen.spec.seed, "generator seed")->capture_default_str();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "train a model and write checkpoint, curves, manifest and report");
    t->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    t->add_option("--data", tr.data, "dataset root (one directory per class)")->required();
    t->add_option("--config", tr.config_file, "flat JSON config; flags override it");
    t->add_option("--out", tr.out, "output directory (default: $SECNN_OUTPUT_DIR or ./runs/train)");
    tr.opts["model"] = t->add_option("--model", tr.model, "custom | resnet50 | vgg16 (default custom)");
    tr.opts["tl"] = t->add_flag("--tl,!--no-tl", tr.tl, "transfer learning: train only the final layer");
    tr.opts["epochs"] = t->add_option("--epochs", tr.epochs, "epochs (default 20)");
    tr.opts["batch-size"] = t->add_option("--batch-size", tr.batch_size, "batch size (default 32)");
    tr.opts["lr"] = t->add_option("--lr", tr.lr, "Adam learning rate (default 1e-4; 1e-3 with --tl)");
    tr.opts["head-dropout"] = t->add_option("--head-dropout", tr.head_dropout, "classifier dropout (default 0.5)");
    tr.opts["weight-decay"] = t->add_option("--weight-decay", tr.weight_decay, "L2 on conv/linear weights (default 1e-4)");
    tr.opts["block-dropout"] = t->add_option("--block-dropout", tr.block_dropout, "Dropout2d inside blocks (default 0.1)");
    tr.opts["base-channels"] = t->add_option("--base-channels", tr.base_channels, "CustomCNN stem width (default 32)");
    tr.opts["seed"] = t->add_option("--seed", tr.seed, "seed for init, split, shuffling and augmentation (default 0)");
    tr.opts["resolution"] = t->add_option("--resolution", tr.resolution, "input side in pixels (default 64)");
    tr.opts["augment"] = t->add_flag("--augment,!--no-augment", tr.augment, "training augmentation (default on)");
    tr.opts["hflip-prob"] = t->add_option("--hflip-prob", tr.hflip, "horizontal flip probability (default 0.5)");
    tr.opts["rotation"] = t->add_option("--rotation", tr.rotation, "max rotation in degrees (default 15)");
    tr.opts["brightness"] = t->add_option("--brightness", tr.brightness, "brightness jitter (default 0.2)");
    tr.opts["contrast"] = t->add_option("--contrast", tr.contrast, "contrast jitter (default 0.2)");
    tr.opts["saturation"] = t->add_option("--saturation", tr.saturation, "saturation jitter (default 0.2)");
    tr.opts["val-fraction"] = t->add_option("--val-fraction", tr.val_fraction, "validation share per class (default 0.2)");
    tr.opts["deterministic"] = t->add_flag("--deterministic,!--no-deterministic", tr.deterministic,
                                           "keep wall-clock times out of curves/checkpoint (default on)");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    e->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
    e->add_option("--data", ev.data, "dataset root")->required();
    e->add_option("--split", ev.split, "val | train")->check(CLI::IsMember({"val", "train"}))->capture_default_str();
    e->add_option("--out", ev.out, "write report.json/report.txt/curves here (default: $SECNN_OUTPUT_DIR if set)");

    InspectArgs in;
    std::size_t expect_total = 0, expect_trainable = 0;
    auto* i = app.add_subcommand("inspect", "print the per-layer summary and parameter counts");
    i->add_option("--model", in.model, "custom | resnet50 | vgg16")->capture_default_str();
    i->add_option("--classes", in.classes, "number of classes")->capture_default_str();
    i->add_option("--base-channels", in.base_channels, "CustomCNN stem width")->capture_default_str();
    i->add_option("--resolution", in.resolution, "input side for the summary")->capture_default_str();
    i->add_option("--head-dropout", in.head_dropout, "classifier dropout")->capture_default_str();
    i->add_flag("--tl", in.tl, "transfer-learning freeze (resnet50/vgg16)");
    auto* et = i->add_option("--expect-total", expect_total, "exit 1 unless the total matches");
    auto* er = i->add_option("--expect-trainable", expect_trainable, "exit 1 unless the trainable count matches");

    GradArgs gr;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    gc->add_option("scope", gr.scope, "layers | blocks | model")
        ->required()
        ->check(CLI::IsMember({"layers", "blocks", "model"}));
    gc->add_option("--tolerance", gr.tolerance, "max relative error")->capture_default_str();
    gc->add_option("--seed", gr.seed, "seed for shapes and values")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForVersion& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return 1;
    }

    try {
        if (*g) return cmd_gen_synth(gen);
        if (*t) return cmd_train(tr);
        if (*e) return cmd_eval(ev);
        if (*i) {
            if (et->count()) in.expect_total = expect_total;
            if (er->count()) in.expect_trainable = expect_trainable;
            return cmd_inspect(in);
        }
        if (*gc) return cmd_gradcheck(gr);
    } catch (const Error& ex) {
        return report_error(ex);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 1;
}
