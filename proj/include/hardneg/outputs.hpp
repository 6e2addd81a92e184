#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hardneg/config.hpp"
#include "hardneg/train.hpp"

namespace hardneg {

/// One aggregated experiment cell: a method at one (beta, label fraction).
struct ResultRow {
    std::string method;
    std::string modality;
    double beta = 0.0;      // effective value actually used by the loss
    double tau_plus = 0.0;  // effective value actually used by the loss
    double label_fraction = 1.0;
    RunResult result;
};

/// Row descriptor for `cfg` with effective beta/tau_plus filled in.
ResultRow describe(const ExperimentConfig& cfg, RunResult result);

/// Per-seed CSV with header
/// method,modality,beta,tau_plus,label_fraction,seed,accuracy,macro_f1.
/// Reals are printed with 17 significant digits.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);

/// {"rows": [{method, modality, beta, tau_plus, label_fraction, num_seeds,
/// mean_accuracy, ci95_accuracy, mean_macro_f1, ci95_macro_f1}]}; a CI is
/// null with a single seed.
Json aggregate_json(const std::vector<ResultRow>& rows);

void write_loss_history_csv(const std::filesystem::path& path,
                            const std::vector<EpochRecord>& history);

void write_json(const std::filesystem::path& path, const Json& j);

std::string format_real(double v);

}  // namespace hardneg
