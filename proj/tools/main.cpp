// ssrad: imbalance-aware self-supervised 3D radiomics, end to end on
// synthetic phantom datasets. Subcommands: synth, pretrain, extract,
// evaluate, sweep.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ssrad/data.hpp"
#include "ssrad/error.hpp"
#include "ssrad/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ssrad;

namespace {

std::vector<int> parse_ratio(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ':')) out.push_back(std::stoi(tok));
    if (out.empty()) throw ConfigError("empty ratio");
    return out;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    return out;
}

// The experiment config file overrides flag values; sweeps and repro runs
// record one JSON file instead of a command line.
json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config JSON: ") + e.what());
    }
    return j;
}

template <typename T>
void cfg_override(const json& j, const char* key, T& value) {
    if (j.contains(key)) value = j.at(key).get<T>();
}

ImbalanceMode parse_mode(const std::string& m) {
    if (m == "none") return ImbalanceMode::none;
    if (m == "re") return ImbalanceMode::re;
    if (m == "se") return ImbalanceMode::se;
    throw ConfigError("unknown mode '" + m + "' (expected none|re|se)");
}

FeatureSet parse_feature_set(const std::string& f) {
    if (f == "trad") return FeatureSet::trad;
    if (f == "ssl") return FeatureSet::ssl;
    if (f == "concat") return FeatureSet::concat;
    throw ConfigError("unknown feature set '" + f + "' (expected trad|ssl|concat)");
}

json rng_streams_doc() {
    return json{{"data", "synth volume per (class, index)"},
                {"init", "encoder parameter initialization"},
                {"augment", "view pair per (step, batch slot)"},
                {"warmup-shuffle", "warm-up epoch order per epoch"},
                {"pool", "candidate pool draw per iteration"},
                {"kmeans", "clustering per iteration"},
                {"re-subsample", "RE batch subsample per iteration"},
                {"folds", "stratified fold shuffle per class"},
                {"inner", "inner validation split per fold"}};
}

void write_config_echo(const std::string& out_dir, const json& effective) {
    json j = effective;
    j["rng_streams"] = rng_streams_doc();
    std::ofstream os(fs::path(out_dir) / "config_echo.json", std::ios::binary);
    os << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    int classes = 0;
    std::string ratio = "250:76";
    int count = 326;
    int extent = 16;
    uint64_t seed = 0;
    std::string out, config;
};

int cmd_synth(const SynthArgs& a) {
    json cfg = load_config(a.config);
    SynthSpec spec;
    spec.ratio = parse_ratio(a.ratio);
    spec.count = a.count;
    spec.extent = a.extent;
    spec.seed = a.seed;
    cfg_override(cfg, "ratio", spec.ratio);
    cfg_override(cfg, "count", spec.count);
    cfg_override(cfg, "extent", spec.extent);
    cfg_override(cfg, "seed", spec.seed);
    if (a.classes > 0 && a.classes != static_cast<int>(spec.ratio.size()))
        throw ConfigError("--classes disagrees with the ratio length");

    DatasetManifest m = synth_dataset(spec, a.out);
    std::printf("wrote %zu volumes to %s\n", m.samples.size(), a.out.c_str());
    std::printf("%-8s %-8s\n", "class", "count");
    for (size_t c = 0; c < m.class_counts.size(); ++c)
        std::printf("%-8zu %-8d\n", c, m.class_counts[c]);

    json echo{{"command", "synth"}, {"ratio", spec.ratio}, {"count", spec.count},
              {"extent", spec.extent}, {"seed", spec.seed}};
    write_config_echo(a.out, echo);
    return 0;
}

// ---------------------------------------------------------------------------

struct PretrainArgs {
    std::string mode = "none";
    int k = 3, q = 10, m = 6, batch = 6;
    int epochs = 1, iters = 0, refresh_period = 1;
    double lr = 1e-2, weight_decay = 1e-4;
    std::string preset = "desk";
    std::string frozen_bn = "batch";
    uint64_t seed = 0;
    std::string data, out, config, resume;
};

PretrainConfig make_pretrain_config(const PretrainArgs& a0) {
    PretrainArgs a = a0;
    json cfg = load_config(a.config);
    cfg_override(cfg, "mode", a.mode);
    cfg_override(cfg, "k", a.k);
    cfg_override(cfg, "q", a.q);
    cfg_override(cfg, "m", a.m);
    cfg_override(cfg, "batch", a.batch);
    cfg_override(cfg, "epochs", a.epochs);
    cfg_override(cfg, "iters", a.iters);
    cfg_override(cfg, "refresh_period", a.refresh_period);
    cfg_override(cfg, "lr", a.lr);
    cfg_override(cfg, "weight_decay", a.weight_decay);
    cfg_override(cfg, "preset", a.preset);
    cfg_override(cfg, "frozen_bn", a.frozen_bn);
    cfg_override(cfg, "seed", a.seed);

    PretrainConfig pc;
    if (a.preset == "desk")
        pc.encoder = EncoderConfig::desk();
    else if (a.preset == "paper")
        pc.encoder = EncoderConfig::paper();
    else
        throw ConfigError("unknown preset '" + a.preset + "'");
    pc.trainer.adam.lr = static_cast<float>(a.lr);
    pc.trainer.adam.weight_decay = static_cast<float>(a.weight_decay);
    if (a.frozen_bn == "batch")
        pc.trainer.frozen_bn = FrozenBnMode::batch_stats;
    else if (a.frozen_bn == "running")
        pc.trainer.frozen_bn = FrozenBnMode::running_stats;
    else
        throw ConfigError("unknown frozen-bn mode '" + a.frozen_bn + "'");
    pc.planner.mode = parse_mode(a.mode);
    pc.planner.k = a.k;
    pc.planner.q = a.q;
    pc.planner.m = a.m;
    pc.planner.batch = a.batch;
    pc.planner.refresh_period = a.refresh_period;
    pc.epochs = a.epochs;
    pc.iters = a.iters;
    pc.seed = a.seed;
    return pc;
}

json pretrain_echo(const PretrainConfig& pc) {
    return json{{"command", "pretrain"},
                {"mode", pc.planner.mode == ImbalanceMode::none
                             ? "none"
                             : (pc.planner.mode == ImbalanceMode::re ? "re" : "se")},
                {"k", pc.planner.k},
                {"q", pc.planner.q},
                {"m", pc.planner.m},
                {"batch", pc.planner.batch},
                {"epochs", pc.epochs},
                {"iters", pc.iters},
                {"refresh_period", pc.planner.refresh_period},
                {"lr", pc.trainer.adam.lr},
                {"weight_decay", pc.trainer.adam.weight_decay},
                {"frozen_bn", pc.trainer.frozen_bn == FrozenBnMode::batch_stats ? "batch" : "running"},
                {"encoder", json::parse(pc.encoder.to_json_string())},
                {"seed", pc.seed}};
}

int cmd_pretrain(const PretrainArgs& a) {
    PretrainConfig pc = make_pretrain_config(a);
    DatasetManifest manifest = load_manifest(a.data);
    std::vector<Volume> volumes = load_dataset(manifest);

    fs::create_directories(a.out);
    std::ofstream train_log(fs::path(a.out) / "train_log.jsonl", std::ios::binary);
    std::ofstream cluster_log;
    if (pc.planner.mode != ImbalanceMode::none)
        cluster_log.open(fs::path(a.out) / "cluster_log.jsonl", std::ios::binary);

    Checkpoint resume;
    const bool resuming = !a.resume.empty();
    if (resuming) resume = load_checkpoint(a.resume, pc.encoder);

    PretrainResult result =
        pretrain(volumes, pc, &train_log, cluster_log.is_open() ? &cluster_log : nullptr,
                 resuming ? &resume : nullptr);

    const std::string ckpt = (fs::path(a.out) / "checkpoint.ckpt").string();
    save_checkpoint(ckpt, result.encoder, &result.adam, result.steps);
    write_config_echo(a.out, pretrain_echo(pc));
    std::printf("trained %lld steps, final loss %.4f, checkpoint at %s\n",
                static_cast<long long>(result.steps),
                result.trace.empty() ? 0.0 : result.trace.back().loss, ckpt.c_str());
    return 0;
}

// ---------------------------------------------------------------------------

struct ExtractArgs {
    std::string checkpoint, data, out, config;
    std::string features = "concat";
};

int cmd_extract(const ExtractArgs& a0) {
    ExtractArgs a = a0;
    json cfg = load_config(a.config);
    cfg_override(cfg, "features", a.features);
    const FeatureSet set = parse_feature_set(a.features);

    DatasetManifest manifest = load_manifest(a.data);
    std::vector<Volume> volumes = load_dataset(manifest);

    Checkpoint ck;
    Encoder* enc = nullptr;
    if (set != FeatureSet::trad) {
        if (a.checkpoint.empty())
            throw ConfigError("--features " + a.features + " requires --checkpoint");
        ck = load_checkpoint(a.checkpoint);
        enc = &ck.encoder;
    }

    std::vector<FeatureRecord> records = extract_all(volumes, enc);
    fs::create_directories(a.out);
    write_features_csv((fs::path(a.out) / "features.csv").string(), records, set);
    write_feature_schema((fs::path(a.out) / "features.schema.json").string(), records, set);
    write_config_echo(a.out, json{{"command", "extract"}, {"features", a.features}});
    std::printf("extracted %zu records to %s\n", records.size(), a.out.c_str());
    return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::string features, out, config;
    std::string feature_set = "concat";
    int folds = 5;
    double label_budget = 1.0;
    int minor_class = -1;
    uint64_t seed = 0;
};

int cmd_evaluate(const EvaluateArgs& a0) {
    EvaluateArgs a = a0;
    json cfg = load_config(a.config);
    cfg_override(cfg, "feature_set", a.feature_set);
    cfg_override(cfg, "folds", a.folds);
    cfg_override(cfg, "label_budget", a.label_budget);
    cfg_override(cfg, "minor_class", a.minor_class);
    cfg_override(cfg, "seed", a.seed);

    std::vector<FeatureRecord> records = read_features_csv(a.features);
    ProtocolConfig pc;
    pc.feature_set = parse_feature_set(a.feature_set);
    pc.folds = a.folds;
    pc.label_budget = a.label_budget;
    pc.minor_class = a.minor_class;
    pc.seed = a.seed;
    MetricsReport report = run_protocol(records, pc);

    fs::create_directories(a.out);
    write_metrics_json((fs::path(a.out) / "metrics.json").string(), report);
    write_metrics_csv((fs::path(a.out) / "metrics.csv").string(), report);
    PearsonResult pearson = pearson_matrix(feature_matrix(records, pc.feature_set));
    write_pearson_hist_csv((fs::path(a.out) / "pearson_hist.csv").string(), pearson);
    write_config_echo(a.out, json{{"command", "evaluate"},
                                  {"feature_set", a.feature_set},
                                  {"folds", a.folds},
                                  {"label_budget", a.label_budget},
                                  {"minor_class", report.minor_class},
                                  {"seed", a.seed}});
    std::printf("mean: sensitivity %.3f specificity %.3f overall %.3f minor %.3f auc %.3f\n",
                report.mean.sensitivity, report.mean.specificity, report.mean.overall_accuracy,
                report.mean.minor_class_accuracy, report.mean.auc);
    return 0;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
    std::string param = "k";
    std::string values;
    int repeats = 5;
    std::string data, out, config;
    PretrainArgs base;
    int folds = 5;
    int minor_class = -1;
};

int cmd_sweep(const SweepArgs& a) {
    SweepConfig sc;
    sc.param = a.param;
    sc.values = parse_int_list(a.values);
    sc.repeats = a.repeats;
    sc.base = make_pretrain_config(a.base);
    sc.protocol.folds = a.folds;
    sc.protocol.minor_class = a.minor_class;
    sc.protocol.feature_set = FeatureSet::concat;

    DatasetManifest manifest = load_manifest(a.data);
    std::vector<Volume> volumes = load_dataset(manifest);
    std::vector<SweepRow> rows = run_sweep(volumes, sc);

    fs::create_directories(a.out);
    write_sweep_csv((fs::path(a.out) / "sweep.csv").string(), rows);
    write_config_echo(a.out, json{{"command", "sweep"},
                                  {"param", sc.param},
                                  {"values", sc.values},
                                  {"repeats", sc.repeats},
                                  {"base", pretrain_echo(sc.base)}});
    std::printf("wrote %zu sweep rows to %s\n", rows.size(), a.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"imbalance-aware self-supervised 3D radiomics"};
    app.require_subcommand(1);

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "generate a synthetic imbalanced phantom dataset");
    synth->add_option("--classes", sa.classes, "number of classes (checked against --ratio)");
    synth->add_option("--ratio", sa.ratio, "class ratio, e.g. 250:76 or 2:1:6");
    synth->add_option("--count", sa.count, "total sample count");
    synth->add_option("--extent", sa.extent, "cubic volume side in voxels");
    synth->add_option("--seed", sa.seed, "master seed");
    synth->add_option("--out", sa.out, "output directory")->required();
    synth->add_option("--config", sa.config, "JSON config overriding flags");

    PretrainArgs pa;
    auto* pre = app.add_subcommand("pretrain", "self-supervised pretraining");
    pre->add_option("--mode", pa.mode, "imbalance handling: none|re|se");
    pre->add_option("--k", pa.k, "number of clusters");
    pre->add_option("--q", pa.q, "pool multiplier (pool size N = k*q)");
    pre->add_option("--m", pa.m, "SE batch size (even, < N/k)");
    pre->add_option("--batch", pa.batch, "plain/warm-up batch size");
    pre->add_option("--epochs", pa.epochs, "warm-up epochs");
    pre->add_option("--iters", pa.iters, "RE/SE iterations after warm-up");
    pre->add_option("--refresh-period", pa.refresh_period, "re-cluster every this many iterations");
    pre->add_option("--lr", pa.lr, "Adam learning rate");
    pre->add_option("--weight-decay", pa.weight_decay, "L2 weight decay");
    pre->add_option("--preset", pa.preset, "encoder preset: desk|paper");
    pre->add_option("--frozen-bn", pa.frozen_bn, "frozen branch batch norm: batch|running");
    pre->add_option("--seed", pa.seed, "master seed");
    pre->add_option("--data", pa.data, "dataset manifest")->required();
    pre->add_option("--out", pa.out, "output directory")->required();
    pre->add_option("--resume", pa.resume, "checkpoint to resume from");
    pre->add_option("--config", pa.config, "JSON config overriding flags");

    ExtractArgs ea;
    auto* ext = app.add_subcommand("extract", "extract traditional + SSL features");
    ext->add_option("--checkpoint", ea.checkpoint, "encoder checkpoint (needed for ssl/concat)");
    ext->add_option("--data", ea.data, "dataset manifest")->required();
    ext->add_option("--features", ea.features, "trad|ssl|concat");
    ext->add_option("--out", ea.out, "output directory")->required();
    ext->add_option("--config", ea.config, "JSON config overriding flags");

    EvaluateArgs va;
    auto* ev = app.add_subcommand("evaluate", "linear-probe cross-validated evaluation");
    ev->add_option("--features", va.features, "features.csv from extract")->required();
    ev->add_option("--feature-set", va.feature_set, "trad|ssl|concat");
    ev->add_option("--folds", va.folds, "stratified fold count");
    ev->add_option("--label-budget", va.label_budget, "fraction of training labels kept");
    ev->add_option("--minor-class", va.minor_class, "minority class label (-1: least frequent)");
    ev->add_option("--seed", va.seed, "master seed");
    ev->add_option("--out", va.out, "output directory")->required();
    ev->add_option("--config", va.config, "JSON config overriding flags");

    SweepArgs wa;
    auto* sw = app.add_subcommand("sweep", "pretrain+extract+evaluate over a parameter grid");
    sw->add_option("--param", wa.param, "k|batch (0 in a k sweep disables SE)");
    sw->add_option("--values", wa.values, "comma-separated values")->required();
    sw->add_option("--repeats", wa.repeats, "seeds per value");
    sw->add_option("--data", wa.data, "dataset manifest")->required();
    sw->add_option("--out", wa.out, "output directory")->required();
    sw->add_option("--iters", wa.base.iters, "iterations per point");
    sw->add_option("--epochs", wa.base.epochs, "warm-up epochs per point");
    sw->add_option("--q", wa.base.q, "pool multiplier");
    sw->add_option("--m", wa.base.m, "SE batch size baseline");
    sw->add_option("--seed", wa.base.seed, "master seed");
    sw->add_option("--folds", wa.folds, "evaluation folds");
    sw->add_option("--minor-class", wa.minor_class, "minority class label");
    sw->add_option("--config", wa.base.config, "JSON config overriding flags");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 1;  // usage error
    }

    try {
        if (synth->parsed()) return cmd_synth(sa);
        if (pre->parsed()) return cmd_pretrain(pa);
        if (ext->parsed()) return cmd_extract(ea);
        if (ev->parsed()) return cmd_evaluate(va);
        if (sw->parsed()) return cmd_sweep(wa);
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
