#include "ssrad/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ssrad/error.hpp"

namespace ssrad {

using nlohmann::json;

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::vector<std::vector<double>> encode_indices(Encoder& enc, const std::vector<Volume>& data,
                                                const std::vector<int>& indices, int batch) {
    const EncoderConfig& cfg = enc.cfg;
    std::vector<std::vector<double>> out(indices.size());
    for (size_t start = 0; start < indices.size(); start += static_cast<size_t>(batch)) {
        const size_t end = std::min(indices.size(), start + static_cast<size_t>(batch));
        const int nb = static_cast<int>(end - start);
        Tensor t({nb, cfg.in_channels, cfg.input_extent, cfg.input_extent, cfg.input_extent});
        for (int b = 0; b < nb; ++b) {
            const Volume& v = data[static_cast<size_t>(indices[start + static_cast<size_t>(b)])];
            for (size_t j = 0; j < v.intensity.size(); ++j)
                t.data[static_cast<size_t>(b) * v.intensity.size() + j] = v.intensity[j] / 255.0f;
        }
        Tensor reps = enc.encode(t, nn::Mode::eval);
        for (int b = 0; b < nb; ++b) {
            auto& row = out[start + static_cast<size_t>(b)];
            row.resize(static_cast<size_t>(cfg.repr_dim));
            for (int j = 0; j < cfg.repr_dim; ++j) row[static_cast<size_t>(j)] = reps.at2(b, j);
        }
    }
    return out;
}

void log_step(std::ostream* os, const StepStats& st) {
    if (!os) return;
    json j;
    j["step"] = st.step;
    j["loss"] = st.loss;
    j["collapse_metric"] = st.collapse;
    j["lr"] = st.lr;
    j["weights_min"] = st.weights_min;
    j["weights_max"] = st.weights_max;
    (*os) << j.dump() << "\n";
}

void log_cluster(std::ostream* os, const ClusterDiagnostics& d) {
    if (!os) return;
    json j;
    j["iteration"] = d.iteration;
    j["inertia"] = d.inertia;
    j["frequencies"] = d.frequencies;
    if (d.chosen_pair)
        j["chosen_pair"] = {d.chosen_pair->first, d.chosen_pair->second};
    else
        j["chosen_pair"] = nullptr;
    if (d.distance)
        j["distance"] = *d.distance;
    else
        j["distance"] = nullptr;
    (*os) << j.dump() << "\n";
}

}  // namespace

PairBatch build_pair_batch(const std::vector<Volume>& data, const BatchPlan& plan,
                           const AugmentPolicy& policy, uint64_t seed, int64_t step_index,
                           const EncoderConfig& enc_cfg) {
    const int n = static_cast<int>(plan.indices.size());
    const int e = enc_cfg.input_extent;
    PairBatch pb;
    pb.x1 = Tensor({n, enc_cfg.in_channels, e, e, e});
    pb.x2 = Tensor({n, enc_cfg.in_channels, e, e, e});
    pb.weights = plan.weights;
    for (int b = 0; b < n; ++b) {
        const Volume& src = data[static_cast<size_t>(plan.indices[static_cast<size_t>(b)])];
        if (src.d != e || src.h != e || src.w != e)
            throw DataError("volume " + src.source_id + " extent does not match encoder (" +
                            std::to_string(e) + ")");
        Rng rng = derive_rng(seed, "augment", static_cast<uint64_t>(step_index),
                             static_cast<uint64_t>(b));
        auto [v1, v2] = make_views(src, policy, rng);
        const size_t stride = v1.intensity.size();
        for (size_t j = 0; j < stride; ++j) {
            pb.x1.data[static_cast<size_t>(b) * stride + j] = v1.intensity[j] / 255.0f;
            pb.x2.data[static_cast<size_t>(b) * stride + j] = v2.intensity[j] / 255.0f;
        }
    }
    return pb;
}

PretrainResult pretrain(const std::vector<Volume>& data, const PretrainConfig& cfg,
                        std::ostream* train_log, std::ostream* cluster_log,
                        const Checkpoint* resume) {
    if (data.empty()) throw DataError("pretrain: empty dataset");
    cfg.augment.validate();
    PlannerConfig pcfg = cfg.planner;
    pcfg.seed = cfg.seed;
    BatchPlanner planner(static_cast<int>(data.size()), pcfg);

    SiamTrainer trainer(resume ? resume->encoder
                               : build_encoder(cfg.encoder, derive_seed(cfg.seed, "init")),
                        cfg.trainer);
    if (resume) {
        if (!(resume->encoder.cfg == cfg.encoder))
            throw ConfigError("resume checkpoint config fingerprint " +
                              resume->encoder.cfg.fingerprint() + " does not match run config " +
                              cfg.encoder.fingerprint());
        if (resume->has_adam) trainer.opt = resume->adam;
        trainer.step = resume->step;
    }

    PretrainResult result;
    int64_t schedule_pos = 0;  // global step index; resumed runs skip already-done steps
    auto run_plan = [&](const BatchPlan& plan) {
        if (schedule_pos++ < trainer.step) return;
        PairBatch pb = build_pair_batch(data, plan, cfg.augment, cfg.seed, trainer.step,
                                        cfg.encoder);
        StepStats st = trainer.train_step(pb);
        log_step(train_log, st);
        result.trace.push_back(st);
    };

    for (int e = 0; e < cfg.epochs; ++e)
        for (const BatchPlan& plan : planner.warmup_epoch(e)) run_plan(plan);

    auto encode_fn = [&](const std::vector<int>& idx) {
        return encode_indices(trainer.enc, data, idx, std::max(8, pcfg.batch));
    };
    for (int64_t it = 0; it < cfg.iters; ++it) {
        if (pcfg.mode == ImbalanceMode::none) {
            run_plan(planner.iteration_plan(it, encode_fn));
        } else {
            // skip the (expensive) pool encode entirely for already-done steps
            if (schedule_pos < trainer.step) {
                ++schedule_pos;
                continue;
            }
            ClusterDiagnostics diag;
            BatchPlan plan = planner.iteration_plan(it, encode_fn, &diag);
            log_cluster(cluster_log, diag);
            run_plan(plan);
        }
    }

    result.encoder = std::move(trainer.enc);
    result.adam = std::move(trainer.opt);
    result.steps = trainer.step;
    return result;
}

// ---------------------------------------------------------------------------
// feature table I/O
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> column_names(const std::vector<FeatureRecord>& records, FeatureSet set) {
    std::vector<std::string> names;
    const FeatureRecord& first = records.front();
    if (set == FeatureSet::trad || set == FeatureSet::concat)
        names.insert(names.end(), first.trad_names.begin(), first.trad_names.end());
    if (set == FeatureSet::ssl || set == FeatureSet::concat)
        for (size_t j = 0; j < first.f_ssl.size(); ++j)
            names.push_back("ssl_" + std::to_string(j));
    return names;
}

std::vector<double> row_values(const FeatureRecord& r, FeatureSet set) {
    switch (set) {
        case FeatureSet::trad: return r.f_trad;
        case FeatureSet::ssl: return r.f_ssl;
        case FeatureSet::concat: return r.f_concat();
    }
    return {};
}

}  // namespace

void write_features_csv(const std::string& csv_path, const std::vector<FeatureRecord>& records,
                        FeatureSet set) {
    if (records.empty()) throw DataError("no feature records to write");
    std::ofstream os(csv_path, std::ios::binary);
    if (!os) throw DataError("cannot open " + csv_path + " for writing");
    os << "id,label";
    for (const auto& n : column_names(records, set)) os << "," << n;
    os << "\n";
    for (const auto& r : records) {
        os << r.id << "," << r.label;
        for (double v : row_values(r, set)) os << "," << fmt_double(v);
        os << "\n";
    }
}

void write_feature_schema(const std::string& json_path,
                          const std::vector<FeatureRecord>& records, FeatureSet set) {
    json j;
    j["format"] = "ssrad-features";
    j["version"] = 1;
    json cols = json::array();
    cols.push_back("id");
    cols.push_back("label");
    for (const auto& n : column_names(records, set)) cols.push_back(n);
    j["columns"] = cols;
    j["trad_dim"] =
        (set == FeatureSet::ssl) ? 0 : records.front().trad_names.size();
    j["ssl_dim"] = (set == FeatureSet::trad) ? 0 : records.front().f_ssl.size();
    std::ofstream os(json_path, std::ios::binary);
    if (!os) throw DataError("cannot open " + json_path + " for writing");
    os << j.dump(2) << "\n";
}

std::vector<FeatureRecord> read_features_csv(const std::string& csv_path) {
    std::ifstream is(csv_path);
    if (!is) throw DataError("cannot open feature table " + csv_path);
    std::string header;
    if (!std::getline(is, header)) throw DataError("empty feature table " + csv_path);
    std::vector<std::string> cols;
    {
        std::stringstream ss(header);
        std::string tok;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
    }
    if (cols.size() < 3 || cols[0] != "id" || cols[1] != "label")
        throw DataError("feature table " + csv_path + " must start with id,label columns");

    std::vector<FeatureRecord> records;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        FeatureRecord r;
        if (!std::getline(ss, r.id, ',')) throw DataError("bad row in " + csv_path);
        if (!std::getline(ss, tok, ',')) throw DataError("bad row in " + csv_path);
        r.label = std::stoi(tok);
        size_t col = 2;
        while (std::getline(ss, tok, ',')) {
            if (col >= cols.size()) throw DataError("row wider than header in " + csv_path);
            const double v = std::stod(tok);
            if (cols[col].rfind("ssl_", 0) == 0) {
                r.f_ssl.push_back(v);
            } else {
                r.trad_names.push_back(cols[col]);
                r.f_trad.push_back(v);
            }
            ++col;
        }
        if (col != cols.size()) throw DataError("row narrower than header in " + csv_path);
        records.push_back(std::move(r));
    }
    if (records.empty()) throw DataError("feature table " + csv_path + " has no rows");
    return records;
}

// ---------------------------------------------------------------------------
// metrics output
// ---------------------------------------------------------------------------

namespace {

json fold_to_json(const FoldMetrics& m) {
    json j;
    j["sensitivity"] = m.sensitivity;
    j["specificity"] = m.specificity;
    j["overall_accuracy"] = m.overall_accuracy;
    j["minor_class_accuracy"] = m.minor_class_accuracy;
    j["auc"] = m.auc;
    j["chosen_C"] = m.chosen_C;
    j["confusion"] = m.confusion;
    return j;
}

}  // namespace

void write_metrics_json(const std::string& path, const MetricsReport& report) {
    json j;
    j["classes"] = report.classes;
    j["minor_class"] = report.minor_class;
    json folds = json::array();
    for (const auto& f : report.folds) folds.push_back(fold_to_json(f));
    j["folds"] = folds;
    json mean = fold_to_json(report.mean);
    mean.erase("chosen_C");
    j["mean"] = mean;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os << j.dump(2) << "\n";
}

void write_metrics_csv(const std::string& path, const MetricsReport& report) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os << "fold,sensitivity,specificity,overall_accuracy,minor_class_accuracy,auc,chosen_C\n";
    for (size_t f = 0; f < report.folds.size(); ++f) {
        const auto& m = report.folds[f];
        os << f << "," << fmt_double(m.sensitivity) << "," << fmt_double(m.specificity) << ","
           << fmt_double(m.overall_accuracy) << "," << fmt_double(m.minor_class_accuracy) << ","
           << fmt_double(m.auc) << "," << fmt_double(m.chosen_C) << "\n";
    }
    const auto& m = report.mean;
    os << "mean," << fmt_double(m.sensitivity) << "," << fmt_double(m.specificity) << ","
       << fmt_double(m.overall_accuracy) << "," << fmt_double(m.minor_class_accuracy) << ","
       << fmt_double(m.auc) << ",\n";
}

void write_pearson_hist_csv(const std::string& path, const PearsonResult& res) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os << "bin_lo,bin_hi,count,density\n";
    for (size_t b = 0; b + 1 < res.hist_edges.size(); ++b)
        os << fmt_double(res.hist_edges[b]) << "," << fmt_double(res.hist_edges[b + 1]) << ","
           << res.hist_counts[b] << "," << fmt_double(res.hist_density[b]) << "\n";
}

// ---------------------------------------------------------------------------
// sweeps
// ---------------------------------------------------------------------------

std::vector<SweepRow> run_sweep(const std::vector<Volume>& data, const SweepConfig& cfg) {
    if (cfg.values.empty()) throw ConfigError("sweep: empty value list");
    if (cfg.repeats < 1) throw ConfigError("sweep: repeats must be >= 1");
    if (cfg.param != "k" && cfg.param != "batch")
        throw ConfigError("sweep: unknown parameter '" + cfg.param + "' (expected k or batch)");

    std::vector<SweepRow> rows;
    for (size_t vi = 0; vi < cfg.values.size(); ++vi) {
        const int value = cfg.values[vi];
        for (int rep = 0; rep < cfg.repeats; ++rep) {
            PretrainConfig pc = cfg.base;
            pc.seed = derive_seed(cfg.base.seed, "sweep", static_cast<uint64_t>(vi),
                                  static_cast<uint64_t>(rep));
            if (cfg.param == "k") {
                if (value == 0) {
                    pc.planner.mode = ImbalanceMode::none;  // 0 clusters disables SE
                    pc.planner.batch = cfg.base.planner.m;
                } else {
                    pc.planner.mode = ImbalanceMode::se;
                    pc.planner.k = value;
                }
            } else {
                pc.planner.mode = ImbalanceMode::se;
                pc.planner.m = value;
            }

            PretrainResult pr = pretrain(data, pc);
            std::vector<FeatureRecord> records = extract_all(data, &pr.encoder);
            ProtocolConfig ev = cfg.protocol;
            ev.seed = derive_seed(pc.seed, "protocol");
            MetricsReport report = run_protocol(records, ev);

            SweepRow row;
            row.param = cfg.param;
            row.value = value;
            row.repeat = rep;
            row.seed = pc.seed;
            row.auc = report.mean.auc;
            rows.push_back(row);
        }
    }
    return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os << "param,value,repeat,seed,auc\n";
    for (const auto& r : rows)
        os << r.param << "," << r.value << "," << r.repeat << "," << r.seed << ","
           << fmt_double(r.auc) << "\n";
}

}  // namespace ssrad
