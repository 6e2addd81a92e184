#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hardneg/dataset.hpp"
#include "hardneg/train.hpp"

namespace hardneg {

using Json = nlohmann::json;

/// Everything a CLI run depends on. Every key is optional in the file;
/// missing keys take the defaults below. Unknown keys are rejected.
struct RunConfig {
    SynthConfig synth;
    // Canonical dataset directory; synthetic data from `synth` when empty.
    std::optional<std::string> dataset;
    // Directory of pretrained encoder checkpoints (finetune subcommand).
    std::optional<std::string> encoders;
    // Accepted on input, never echoed: outputs must not depend on it.
    std::optional<std::string> output_dir;
    ExperimentConfig experiment;
    std::vector<double> betas{0.25, 0.5, 1.0, 1.5, 2.0};
    std::vector<double> label_fractions{0.02, 0.05, 0.10, 0.25, 0.50};
    std::vector<Method> methods{Method::cmc, Method::cmc_hnl, Method::supervised};
};

Json to_json(const EncoderConfig& cfg);
/// Keys missing from `j` keep their value in `base`.
EncoderConfig encoder_config_from_json(const Json& j, const std::string& where = "encoder",
                                       EncoderConfig base = {});

Json to_json(const AugmentSpec& spec);
AugmentSpec augment_spec_from_json(const Json& j, const std::string& where = "augment");

Json to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const Json& j, const std::string& where = "synth");

/// Full document with every default materialized; `output_dir` is left out.
Json to_json(const RunConfig& cfg);
/// Throws ConfigError naming the offending key path.
RunConfig run_config_from_json(const Json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fills encoder input_channels = 0 from the dataset and checks the rest.
void resolve_against(RunConfig& cfg, const CanonicalDataset& ds);

std::vector<double> parse_double_list(const std::string& text);
std::vector<Method> parse_method_list(const std::string& text);

}  // namespace hardneg
