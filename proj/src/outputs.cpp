#include "hardneg/outputs.hpp"

#include <cstdio>
#include <fstream>

#include "hardneg/errors.hpp"

namespace hardneg {

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

Json optional_real(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

ResultRow describe(const ExperimentConfig& cfg, RunResult result) {
    ResultRow row;
    row.method = to_string(cfg.pretrain.method);
    row.modality = to_string(cfg.finetune.modalities);
    row.beta = cfg.pretrain.effective_beta();
    row.tau_plus = cfg.pretrain.effective_tau_plus();
    row.label_fraction = cfg.finetune.label_fraction;
    row.result = std::move(result);
    return row;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
    auto out = open_for_write(path);
    out << "method,modality,beta,tau_plus,label_fraction,seed,accuracy,macro_f1\n";
    for (const auto& row : rows) {
        for (const auto& s : row.result.per_seed) {
            out << row.method << ',' << row.modality << ',' << format_real(row.beta) << ','
                << format_real(row.tau_plus) << ',' << format_real(row.label_fraction) << ','
                << s.seed << ',' << format_real(s.accuracy) << ',' << format_real(s.macro_f1)
                << '\n';
        }
    }
}

Json aggregate_json(const std::vector<ResultRow>& rows) {
    Json list = Json::array();
    for (const auto& row : rows) {
        list.push_back({{"method", row.method},
                        {"modality", row.modality},
                        {"beta", row.beta},
                        {"tau_plus", row.tau_plus},
                        {"label_fraction", row.label_fraction},
                        {"num_seeds", row.result.per_seed.size()},
                        {"mean_accuracy", row.result.mean_accuracy},
                        {"ci95_accuracy", optional_real(row.result.ci95_accuracy)},
                        {"mean_macro_f1", row.result.mean_macro_f1},
                        {"ci95_macro_f1", optional_real(row.result.ci95_macro_f1)}});
    }
    return {{"rows", list}};
}

void write_loss_history_csv(const std::filesystem::path& path,
                            const std::vector<EpochRecord>& history) {
    auto out = open_for_write(path);
    out << "epoch,mean_loss,learning_rate\n";
    for (const auto& r : history) {
        out << r.epoch << ',' << format_real(r.mean_loss) << ',' << format_real(r.learning_rate)
            << '\n';
    }
}

void write_json(const std::filesystem::path& path, const Json& j) {
    auto out = open_for_write(path);
    out << j.dump(2) << '\n';
}

}  // namespace hardneg
