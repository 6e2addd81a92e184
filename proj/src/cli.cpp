#include "hardneg/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <ostream>

#include "CLI11.hpp"
#include "hardneg/config.hpp"
#include "hardneg/errors.hpp"
#include "hardneg/outputs.hpp"
#include "hardneg/selfcheck.hpp"

namespace hardneg {

namespace fs = std::filesystem;

namespace {

constexpr const char* kResolvedConfig = "resolved_config.json";

struct CommonArgs {
    std::string config;
    std::string data;
    std::string out;
};

struct Context {
    RunConfig cfg;
    CanonicalDataset ds;
    fs::path out;
};

fs::path output_dir(const std::string& flag, const std::optional<std::string>& from_config,
                    const std::string& subcommand) {
    if (!flag.empty()) return flag;
    if (from_config) return *from_config;
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
        return fs::path(root) / subcommand;
    }
    throw ConfigError("no output directory: pass --out or set " + std::string(kOutputRootEnv));
}

RunConfig read_config(const std::string& path) {
    return path.empty() ? RunConfig{} : load_run_config(path);
}

CanonicalDataset dataset_for(RunConfig& cfg) {
    CanonicalDataset ds;
    if (cfg.dataset) {
        cfg.dataset = fs::absolute(*cfg.dataset).lexically_normal().string();
        ds = load_canonical(*cfg.dataset);
    } else {
        ds = generate_synthetic(cfg.synth);
    }
    resolve_against(cfg, ds);
    return ds;
}

// Loads config and data, applies flag overrides, and echoes the resolved
// config into the output directory before any work starts.
Context prepare(const CommonArgs& args, const std::string& subcommand,
                const std::function<void(RunConfig&)>& override_fn = {}) {
    Context ctx;
    ctx.cfg = read_config(args.config);
    if (!args.data.empty()) ctx.cfg.dataset = args.data;
    if (override_fn) override_fn(ctx.cfg);
    ctx.out = output_dir(args.out, ctx.cfg.output_dir, subcommand);
    ctx.ds = dataset_for(ctx.cfg);
    fs::create_directories(ctx.out);
    write_json(ctx.out / kResolvedConfig, to_json(ctx.cfg));
    return ctx;
}

void add_common(CLI::App* sub, CommonArgs& args, bool with_data) {
    sub->add_option("--config,-c", args.config, "run config JSON (defaults when omitted)");
    if (with_data) {
        sub->add_option("--data,-d", args.data,
                        "canonical dataset directory (synthetic data from the config when omitted)");
    }
    sub->add_option("--out,-o", args.out, "output directory");
}

void print_rows(std::ostream& out, const std::vector<ResultRow>& rows) {
    for (const auto& r : rows) {
        out << r.method << " modality=" << r.modality << " beta=" << r.beta
            << " label_fraction=" << r.label_fraction << " accuracy=" << r.result.mean_accuracy
            << " macro_f1=" << r.result.mean_macro_f1 << '\n';
    }
}

void emit(const fs::path& dir, const std::string& stem, const std::vector<ResultRow>& rows,
          std::ostream& out) {
    write_metrics_csv(dir / (stem + ".csv"), rows);
    write_json(dir / (stem + ".json"), aggregate_json(rows));
    print_rows(out, rows);
    out << "wrote " << (dir / (stem + ".csv")).string() << '\n';
}

int run_synth(const CommonArgs& args, std::ostream& out) {
    RunConfig cfg = read_config(args.config);
    const fs::path dir = output_dir(args.out, cfg.output_dir, "synth-data");
    const CanonicalDataset ds = generate_synthetic(cfg.synth);
    save_canonical(ds, dir);
    // The echo lives beside the dataset; the loader ignores unknown files.
    write_json(dir / kResolvedConfig, to_json(cfg));
    out << "wrote " << ds.num_windows() << " windows to " << dir.string() << '\n';
    return 0;
}

int run_pretrain(const CommonArgs& args, std::ostream& out) {
    const Context ctx = prepare(args, "pretrain");
    const ExperimentConfig& e = ctx.cfg.experiment;
    const SplitSpec split = make_split(ctx.ds, e.split);
    const PretrainResult result = pretrain(e.pretrain, ctx.ds, split);
    for (const auto& m : result.encoders) {
        save_checkpoint(ctx.out / (m.modality + ".ckpt"), m.config, m.params);
    }
    write_loss_history_csv(ctx.out / "loss_history.csv", result.history);
    out << "pretrained " << to_string(e.pretrain.method) << " for " << result.history.size()
        << " epochs; final loss " << result.history.back().mean_loss << '\n';
    return 0;
}

int run_finetune(const CommonArgs& args, const std::string& encoders, std::ostream& out) {
    const Context ctx = prepare(args, "finetune", [&](RunConfig& cfg) {
        if (!encoders.empty()) cfg.encoders = fs::absolute(encoders).lexically_normal().string();
    });
    const ExperimentConfig& e = ctx.cfg.experiment;
    if (!ctx.cfg.encoders) throw ConfigError("finetune needs --encoders or an 'encoders' entry");
    std::vector<ModalityModel> models;
    for (const auto& name : e.finetune.modality_names()) {
        const fs::path path = fs::path(*ctx.cfg.encoders) / (name + ".ckpt");
        if (!fs::exists(path)) throw ConfigError("missing encoder checkpoint " + path.string());
        Checkpoint ck = load_checkpoint(path);
        if (!ctx.ds.has_modality(name) || ck.config.input_channels != ctx.ds.modality(name).channels) {
            throw ConfigError(path.string() + " does not match the dataset's " + name + " channels");
        }
        models.push_back({name, std::move(ck.config), std::move(ck.params)});
    }
    const SplitSpec split = make_split(ctx.ds, e.split);
    std::vector<SeedMetrics> per_seed;
    for (std::size_t s = 0; s < e.num_seeds; ++s) {
        FinetuneConfig fine = e.finetune;
        fine.seed += s;
        per_seed.push_back(finetune_probe(fine, models, ctx.ds, split));
    }
    emit(ctx.out, "metrics", {describe(e, aggregate(std::move(per_seed)))}, out);
    return 0;
}

int run_eval(const CommonArgs& args, const std::string& methods, std::ostream& out) {
    const Context ctx = prepare(args, "eval", [&](RunConfig& cfg) {
        if (!methods.empty()) cfg.methods = parse_method_list(methods);
    });
    std::vector<ResultRow> rows;
    for (Method m : ctx.cfg.methods) {
        const ExperimentConfig e = with_method(ctx.cfg.experiment, m);
        rows.push_back(describe(e, multi_run(e, ctx.ds)));
    }
    emit(ctx.out, "metrics", rows, out);
    return 0;
}

int run_sweep(const CommonArgs& args, const std::string& betas, std::ostream& out) {
    const Context ctx = prepare(args, "sweep-beta", [&](RunConfig& cfg) {
        if (!betas.empty()) cfg.betas = parse_double_list(betas);
    });
    std::vector<ResultRow> rows;
    for (auto& row : beta_sweep(ctx.cfg.experiment, ctx.ds, ctx.cfg.betas)) {
        ExperimentConfig e = ctx.cfg.experiment;
        e.pretrain.beta = row.beta;
        rows.push_back(describe(e, std::move(row.result)));
    }
    emit(ctx.out, "sweep", rows, out);
    return 0;
}

int run_limited(const CommonArgs& args, const std::string& fractions, const std::string& methods,
                std::ostream& out) {
    const Context ctx = prepare(args, "limited-labels", [&](RunConfig& cfg) {
        if (!fractions.empty()) cfg.label_fractions = parse_double_list(fractions);
        if (!methods.empty()) cfg.methods = parse_method_list(methods);
    });
    std::vector<ResultRow> rows;
    for (auto& row :
         limited_labels(ctx.cfg.experiment, ctx.ds, ctx.cfg.methods, ctx.cfg.label_fractions)) {
        ExperimentConfig e = with_method(ctx.cfg.experiment, row.method);
        e.finetune.label_fraction = row.label_fraction;
        rows.push_back(describe(e, std::move(row.result)));
    }
    emit(ctx.out, "limited_labels", rows, out);
    return 0;
}

int run_selfcheck_cmd(std::uint64_t seed, std::ostream& out) {
    bool ok = true;
    for (const auto& r : run_selfcheck(seed)) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
        ok = ok && r.passed;
    }
    return ok ? 0 : 4;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Contrastive pre-training with hard negatives for inertial + skeleton data",
                 "hardneg"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string encoders;
    std::string betas;
    std::string fractions;
    std::string methods;
    std::uint64_t selfcheck_seed = 0;

    auto* synth = app.add_subcommand("synth-data", "write a synthetic canonical dataset");
    add_common(synth, args, false);
    auto* pre = app.add_subcommand("pretrain", "pre-train encoders; writes checkpoints and loss history");
    add_common(pre, args, true);
    auto* fine = app.add_subcommand("finetune", "probe saved encoders; writes metrics CSV/JSON");
    add_common(fine, args, true);
    fine->add_option("--encoders,-e", encoders, "directory holding <modality>.ckpt files");
    auto* eval = app.add_subcommand("eval", "pre-train and probe every configured method over seeds");
    add_common(eval, args, true);
    eval->add_option("--methods", methods, "comma-separated methods");
    auto* sweep = app.add_subcommand("sweep-beta", "accuracy as a function of beta");
    add_common(sweep, args, true);
    sweep->add_option("--betas", betas, "comma-separated beta values");
    auto* limited = app.add_subcommand("limited-labels", "accuracy as a function of label fraction");
    add_common(limited, args, true);
    limited->add_option("--fractions", fractions, "comma-separated label fractions");
    limited->add_option("--methods", methods, "comma-separated methods");
    auto* check = app.add_subcommand("selfcheck", "gradient and identity checks");
    check->add_option("--seed", selfcheck_seed, "seed for the random instances");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*synth) return run_synth(args, out);
        if (*pre) return run_pretrain(args, out);
        if (*fine) return run_finetune(args, encoders, out);
        if (*eval) return run_eval(args, methods, out);
        if (*sweep) return run_sweep(args, betas, out);
        if (*limited) return run_limited(args, fractions, methods, out);
        if (*check) return run_selfcheck_cmd(selfcheck_seed, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace hardneg
