#include <fstream>

#include "doctest.h"
#include "hardneg/config.hpp"
#include "hardneg/errors.hpp"
#include "hardneg/outputs.hpp"
#include "helpers.hpp"

using namespace hardneg;

TEST_CASE("defaults survive a JSON round trip") {
    const RunConfig cfg;
    const Json j = to_json(cfg);
    CHECK_FALSE(j.contains("output_dir"));
    const RunConfig back = run_config_from_json(j);
    CHECK(to_json(back) == j);
    CHECK(j["pretrain"]["epochs"] == 150);
    CHECK(j["pretrain"]["scheduler"]["patience"] == 20);
    CHECK(j["pretrain"]["scheduler"]["factor"] == 0.5);
    CHECK(j["finetune"]["fusion_width"] == 256);
    CHECK(j["finetune"]["epochs"] == 100);
}

TEST_CASE("a customized config round-trips") {
    RunConfig cfg;
    cfg.synth.num_classes = 6;
    cfg.synth.shared_phase = false;
    cfg.dataset = "/data/x";
    cfg.experiment.pretrain.method = Method::simclr_hnl;
    cfg.experiment.pretrain.beta = 1.5;
    cfg.experiment.pretrain.inertial_encoder.conv_layers = {{4, 3, 2}, {6, 2, 1}};
    cfg.experiment.pretrain.inertial_encoder.activation = Activation::tanh;
    cfg.experiment.pretrain.skeleton_augment.steps = {{Shear{0.3}, 0.25}, {ResizedCrop{0.5, 0.9}, 1.0}};
    cfg.experiment.finetune.modalities = ProbeModalities::skeleton;
    cfg.experiment.split = {SplitProtocol::cross_session_top_fraction, 16, 0.6};
    cfg.betas = {0.0, 3.0};
    cfg.methods = {Method::simclr};
    const Json j = to_json(cfg);
    CHECK(to_json(run_config_from_json(j)) == j);
    CHECK(run_config_from_json(j).experiment.pretrain.skeleton_augment.steps.size() == 2);
}

TEST_CASE("unknown keys and bad types are rejected with their path") {
    auto message = [](const Json& j) {
        try {
            (void)run_config_from_json(j);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message(Json{{"bogus", 1}}).find("bogus") != std::string::npos);
    CHECK(message(Json{{"pretrain", {{"lr", 0.1}}}}).find("lr") != std::string::npos);
    CHECK(message(Json{{"pretrain", {{"epochs", -3}}}}).find("epochs") != std::string::npos);
    CHECK(message(Json{{"pretrain", {{"method", "byol"}}}}).find("byol") != std::string::npos);
    CHECK_FALSE(message(Json{{"synth", {{"num_classes", "ten"}}}}).empty());
    CHECK_FALSE(message(Json{{"augment", {{"inertial", {{{"transform", "warp"}}}}}}}).empty());
    CHECK_FALSE(message(Json{{"pretrain", {{"batch_size", 1}}}}).empty());
    CHECK(message(Json::object()).empty());
}

TEST_CASE("load_run_config reports unreadable files") {
    const auto dir = testing::scratch_dir("config_load");
    CHECK_THROWS_AS(load_run_config(dir / "missing.json"), ConfigError);
    std::ofstream(dir / "bad.json") << "{ nope";
    CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ConfigError);
    std::ofstream(dir / "ok.json") << R"({"num_seeds": 4, "betas": [1, 2]})";
    const RunConfig cfg = load_run_config(dir / "ok.json");
    CHECK(cfg.experiment.num_seeds == 4);
    CHECK(cfg.betas == std::vector<double>{1.0, 2.0});
}

TEST_CASE("list parsing") {
    CHECK(parse_double_list("0.25,0.5, 1.0,1.5,2.0") == std::vector<double>{0.25, 0.5, 1.0, 1.5, 2.0});
    CHECK_THROWS_AS(parse_double_list(""), ConfigError);
    CHECK_THROWS_AS(parse_double_list("1,x"), ConfigError);
    CHECK_THROWS_AS(parse_double_list("1,,2"), ConfigError);
    CHECK(parse_method_list("cmc,cmc_hnl,supervised") ==
          std::vector<Method>{Method::cmc, Method::cmc_hnl, Method::supervised});
    CHECK_THROWS_AS(parse_method_list("cmc,nope"), ConfigError);
}

TEST_CASE("resolve_against fills channel counts") {
    RunConfig cfg;
    SynthConfig s;
    s.num_classes = 2;
    s.samples_per_class = 4;
    const CanonicalDataset ds = generate_synthetic(s);
    resolve_against(cfg, ds);
    CHECK(cfg.experiment.pretrain.inertial_encoder.input_channels == s.inertial_channels);
    CHECK(cfg.experiment.pretrain.skeleton_encoder.input_channels == s.skeleton_channels);
    cfg.experiment.pretrain.inertial_encoder.input_channels = 5;
    CHECK_THROWS_AS(resolve_against(cfg, ds), ConfigError);
}

TEST_CASE("metrics CSV and aggregate JSON") {
    const auto dir = testing::scratch_dir("outputs");
    ExperimentConfig e;
    e.pretrain.method = Method::cmc;
    e.pretrain.beta = 2.0;
    std::vector<ResultRow> rows{describe(e, aggregate({{0, 0.5, 0.25}, {1, 0.75, 0.5}}))};
    e.pretrain.method = Method::cmc_debiased;
    rows.push_back(describe(e, aggregate({{3, 0.1, 0.2}})));
    CHECK(rows[0].beta == 0.0);
    CHECK(rows[0].tau_plus == 0.0);
    CHECK(rows[1].beta == 0.0);
    CHECK(rows[1].tau_plus == e.pretrain.tau_plus);

    write_metrics_csv(dir / "m.csv", rows);
    std::ifstream in(dir / "m.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "method,modality,beta,tau_plus,label_fraction,seed,accuracy,macro_f1");
    std::getline(in, line);
    CHECK(line == "cmc,both,0,0,1,0,0.5,0.25");
    int lines = 1;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 3);

    const Json j = aggregate_json(rows);
    REQUIRE(j["rows"].size() == 2);
    CHECK(j["rows"][0]["mean_accuracy"] == 0.625);
    CHECK(j["rows"][0]["num_seeds"] == 2);
    CHECK(j["rows"][1]["ci95_accuracy"].is_null());
    CHECK(format_real(0.1) == "0.10000000000000001");
}
