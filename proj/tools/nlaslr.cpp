// Command-line front end: data generation, training, evaluation and label inspection.

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nlaslr/nlaslr.hpp"

namespace fs = std::filesystem;
using namespace nlaslr;

namespace {

nlohmann::json read_json_file(const std::string& path, ErrorKind missing) {
    std::ifstream in(path);
    if (!in) throw Error(missing, "cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Data, "cannot write " + path);
    out << j.dump(2) << '\n';
}

int cmd_gen_data(const std::string& spec_path, const std::string& out) {
    SynthSpec spec;
    try {
        spec = read_json_file(spec_path, ErrorKind::Config).get<SynthSpec>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Config, spec_path + ": " + e.what());
    }
    const Dataset data = generate_dataset(spec);
    save_dataset(data, out);
    std::printf("wrote %zu train, %zu dev, %zu test samples over %zu classes to %s\n", data.train.size(), data.dev.size(),
                data.test.size(), data.classes.size(), out.c_str());
    return 0;
}

template <typename T>
void train_as(const TrainConfig& cfg, const Dataset& data, const std::string& out) {
    run_training<T>(cfg, data, out, [](const EpochMetrics& m) {
        std::printf("epoch %zu lr %.3g gamma %.3f mu %.5f loss %.4f (cls %.4f imm %.4f) train_top1 %.4f\n", m.epoch, m.lr,
                    m.gamma, m.mu, m.loss_total, m.loss_cls, m.loss_imm, m.train_top1);
        std::fflush(stdout);
    });
}

int cmd_train(const std::string& config_path, const std::string& data_dir, const std::string& out,
              std::optional<std::uint64_t> seed, bool reproducible) {
    TrainConfig cfg = load_train_config(config_path);
    if (seed) cfg.seed = *seed;
    if (reproducible) Eigen::setNbThreads(1);
    const Dataset data = load_dataset(data_dir);
    if (cfg.precision == "float64") {
        train_as<double>(cfg, data, out);
    } else {
        train_as<float>(cfg, data, out);
    }
    std::printf("checkpoint written to %s\n", (fs::path(out) / "checkpoint.bin").c_str());
    return 0;
}

template <typename T>
EvalReport evaluate_as(const CheckpointFile& ckpt, const Dataset& data, int crops) {
    const auto model = model_from_checkpoint<T>(ckpt);
    if (model->config().glosses != data.lexicon.glosses())
        throw Error(ErrorKind::Data, "checkpoint vocabulary differs from the dataset's");
    const auto preds = predict(*model, data.test, parse_crop_mode(crops));
    return build_report(data.test, preds, data.classes, data.lexicon.glosses(), crops);
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir, int crops, const std::string& report_path) {
    parse_crop_mode(crops);
    const CheckpointFile ckpt = load_checkpoint(checkpoint);
    const Dataset data = load_dataset(data_dir);
    const EvalReport report = ckpt.value_bytes == 8 ? evaluate_as<double>(ckpt, data, crops) : evaluate_as<float>(ckpt, data, crops);
    write_json_file(report_path, report);
    std::printf("per-instance top-1 %.4f, per-class top-1 %.4f (%zu test samples, %d-crop)\n",
                report.per_instance_topk.at("1"), report.per_class_topk.at("1"), report.instances.size(), crops);
    return 0;
}

int cmd_inspect_labels(const std::string& lexicon_path, const std::string& gloss, double epsilon, double tau) {
    const GlossLexicon lex = load_word_vectors(lexicon_path);
    const SoftLabel y = language_aware_soft_label(lex, lex.index_of(gloss), epsilon, tau);
    nlohmann::json out{{"gloss", gloss}, {"epsilon", epsilon}, {"tau", tau}, {"probs", y.probs}};
    std::cout << out.dump() << '\n';
    return 0;
}

int cmd_visign_partition(const std::string& report_path, const std::string& lexicon_path, const std::string& out) {
    EvalReport baseline;
    try {
        baseline = read_json_file(report_path, ErrorKind::Data).get<EvalReport>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, report_path + ": " + e.what());
    }
    const VisignPartition part = visign_partition(baseline, load_word_vectors(lexicon_path));
    write_json_file(out, part);
    for (const auto& [name, s] : part.subsets) std::printf("%-7s %5zu instances, top-1 %.4f\n", name.c_str(), s.instances, s.top1);
    return 0;
}

int cmd_export(const std::string& checkpoint, bool inference_only, const std::string& out) {
    if (!inference_only) throw Error(ErrorKind::Config, "export currently supports only --inference-only");
    export_inference_checkpoint(load_checkpoint(checkpoint), out);
    std::printf("inference-only checkpoint written to %s\n", out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"NLA-SLR sign recognition toolkit"};
    app.require_subcommand(1);

    std::string spec, out, config, data, checkpoint, report, lexicon, gloss, baseline;
    std::uint64_t seed = 0;
    bool reproducible = false, inference_only = false;
    int crops = 1;
    double epsilon = 0.2, tau = 0.5;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("--spec", spec, "dataset spec JSON")->required();
    gen->add_option("--out", out, "output directory")->required();

    auto* train = app.add_subcommand("train", "train a model");
    train->add_option("--config", config, "training config JSON")->required();
    train->add_option("--data", data, "dataset directory")->required();
    train->add_option("--out", out, "output directory")->required();
    auto* seed_opt = train->add_option("--seed", seed, "overrides the config seed");
    train->add_flag("--reproducible", reproducible, "force single-threaded deterministic execution");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    eval->add_option("--checkpoint", checkpoint)->required();
    eval->add_option("--data", data)->required();
    eval->add_option("--crops", crops, "1 or 3")->default_val(1);
    eval->add_option("--report", report, "report JSON path")->required();

    auto* inspect = app.add_subcommand("inspect-labels", "print the language-aware soft label of a gloss");
    inspect->add_option("--lexicon", lexicon)->required();
    inspect->add_option("--gloss", gloss)->required();
    inspect->add_option("--epsilon", epsilon)->default_val(0.2);
    inspect->add_option("--tau", tau)->default_val(0.5);

    auto* part = app.add_subcommand("visign-partition", "split test instances into VS-S, VS-D and non-VS");
    part->add_option("--baseline-report", baseline)->required();
    part->add_option("--lexicon", lexicon)->required();
    part->add_option("--out", out)->required();

    auto* exp = app.add_subcommand("export", "write an inference-only checkpoint");
    exp->add_option("--checkpoint", checkpoint)->required();
    exp->add_flag("--inference-only", inference_only);
    exp->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen) return cmd_gen_data(spec, out);
        if (*train) return cmd_train(config, data, out, *seed_opt ? std::optional(seed) : std::nullopt, reproducible);
        if (*eval) return cmd_eval(checkpoint, data, crops, report);
        if (*inspect) return cmd_inspect_labels(lexicon, gloss, epsilon, tau);
        if (*part) return cmd_visign_partition(baseline, lexicon, out);
        if (*exp) return cmd_export(checkpoint, inference_only, out);
    } catch (const Error& e) {
        std::fprintf(stderr, "error (%s): %s\n", to_string(e.kind()), e.what());
        return exit_code(e.kind());
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "error (parse): %s\n", e.what());
        return 2;
    }
    return 0;
}
