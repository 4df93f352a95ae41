#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ssrad/augment.hpp"
#include "ssrad/data.hpp"
#include "ssrad/evaluation.hpp"
#include "ssrad/imbalance.hpp"
#include "ssrad/siamese.hpp"

namespace ssrad {

// End-to-end orchestration shared by the command-line tool and the
// experiment suites: the pretraining schedule (warm-up epoch(s) of plain
// batches, then RE/SE iterations over freshly encoded candidate pools),
// feature extraction to CSV, and the evaluation protocol.

struct PretrainConfig {
    EncoderConfig encoder = EncoderConfig::desk();
    TrainerConfig trainer;
    AugmentPolicy augment;
    PlannerConfig planner;
    int epochs = 1;  // warm-up epochs; the whole schedule when iters == 0
    int iters = 0;   // planned iterations after the warm-up
    uint64_t seed = 0;
};

struct PretrainResult {
    Encoder encoder;
    nn::AdamState adam;
    int64_t steps = 0;
    std::vector<StepStats> trace;
};

// Deterministic given (config, data): every random choice is keyed by the
// master seed and a step/epoch/iteration index. Optional streams receive one
// JSON line per training step and per clustering refresh.
PretrainResult pretrain(const std::vector<Volume>& data, const PretrainConfig& cfg,
                        std::ostream* train_log = nullptr, std::ostream* cluster_log = nullptr,
                        const Checkpoint* resume = nullptr);

PairBatch build_pair_batch(const std::vector<Volume>& data, const BatchPlan& plan,
                           const AugmentPolicy& policy, uint64_t seed, int64_t step_index,
                           const EncoderConfig& enc_cfg);

// Feature table: CSV with header (id, label, feature names) plus a JSON
// schema sidecar.
void write_features_csv(const std::string& csv_path, const std::vector<FeatureRecord>& records,
                        FeatureSet set);
void write_feature_schema(const std::string& json_path,
                          const std::vector<FeatureRecord>& records, FeatureSet set);
std::vector<FeatureRecord> read_features_csv(const std::string& csv_path);

void write_metrics_json(const std::string& path, const MetricsReport& report);
void write_metrics_csv(const std::string& path, const MetricsReport& report);
void write_pearson_hist_csv(const std::string& path, const PearsonResult& res);

struct SweepRow {
    std::string param;
    int value = 0;
    int repeat = 0;
    uint64_t seed = 0;
    double auc = 0.0;
};

struct SweepConfig {
    std::string param = "k";       // "k" (0 disables SE) or "batch" (the SE m)
    std::vector<int> values;
    int repeats = 5;
    PretrainConfig base;           // mode/k/m overridden per point
    ProtocolConfig protocol;
};

std::vector<SweepRow> run_sweep(const std::vector<Volume>& data, const SweepConfig& cfg);
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

}  // namespace ssrad
