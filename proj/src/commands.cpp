#include "prectime/commands.hpp"

#include "prectime/checkpoint.hpp"
#include "prectime/config.hpp"
#include "prectime/data.hpp"
#include "prectime/errors.hpp"
#include "prectime/model.hpp"
#include "prectime/synth.hpp"
#include "prectime/train.hpp"

#include <algorithm>
#include <cstdio>
#include <fcntl.h>
#include <fstream>
#include <map>
#include <unistd.h>

namespace prectime {

namespace fs = std::filesystem;

DirectoryLock::DirectoryLock(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory '" + dir.string() + "': " + ec.message());
    path_ = dir / kFileName;
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        throw DataError("output directory '" + dir.string() + "' is locked by another run (remove " +
                        path_.string() + " if it is stale)");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

DirectoryLock::~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

fs::path resolve(const RunConfig& cfg, const fs::path& p) {
    return p.is_relative() && !cfg.base_dir.empty() ? cfg.base_dir / p : p;
}

RunConfig load_config(const CommandOptions& opts) {
    if (opts.config.empty()) throw ConfigError("--config is required");
    RunConfig cfg = load_run_config(opts.config);
    if (opts.seed) cfg.override_seed(*opts.seed);
    return cfg;
}

SynthSpec synth_from(const RunConfig& cfg) {
    if (cfg.data.synth == "synth-mirror-v1") return cfg.resolved_synth();
    return load_synth_spec(resolve(cfg, cfg.data.synth));
}

DatasetSplit load_split(const RunConfig& cfg) {
    if (!cfg.data.has_source()) throw ConfigError("data: no data source, set data.manifest or data.synth");
    if (!cfg.data.manifest.empty() && !cfg.data.synth.empty()) {
        throw ConfigError("data: data.manifest and data.synth are mutually exclusive");
    }
    if (!cfg.data.synth.empty()) {
        return split_dataset(synth_generate(synth_from(cfg)), cfg.data.split, cfg.split_seed());
    }
    DatasetSplit split;
    std::vector<Cycle> all;
    for (const auto& e : read_manifest(resolve(cfg, cfg.data.manifest))) {
        Cycle c = load_cycle(e.path);
        all.push_back(c);
        (e.split == "train" ? split.train : e.split == "val" ? split.val : split.test).push_back(std::move(c));
    }
    split.alphabet = Alphabet::from_cycles(all);
    return split;
}

// Sensors and classes come from the data; explicit settings must agree.
ModelConfig resolve_model(const RunConfig& cfg, std::size_t sensors, std::size_t classes) {
    ModelConfig m = cfg.model;
    if (cfg.is_set("model.sensors") && m.sensors != sensors) {
        throw ConfigError("model.sensors: config says " + std::to_string(m.sensors) + ", data has " +
                          std::to_string(sensors));
    }
    if (cfg.is_set("model.num_classes") && m.num_classes != classes) {
        throw ConfigError("model.num_classes: config says " + std::to_string(m.num_classes) + ", data has " +
                          std::to_string(classes));
    }
    m.sensors = sensors;
    m.num_classes = classes;
    m.validate();
    return m;
}

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

// Normalized, padded to a multiple of L, evaluated on real timesteps only.
Sample inference_sample(const Cycle& raw, const LoadedCheckpoint& ckpt) {
    const ModelConfig& m = ckpt.model.config();
    if (raw.sensor_count() != m.sensors) {
        throw DataError("cycle '" + raw.id + "' has " + std::to_string(raw.sensor_count()) +
                        " sensors, checkpoint expects " + std::to_string(m.sensors));
    }
    Cycle c = apply_norm(raw, ckpt.meta.stats);
    c = pad_min_value(c, round_up(c.length(), m.window_length), m.window_length);
    return make_sample(c, ckpt.meta.alphabet, true);
}

}  // namespace

int run_guarded(const std::function<int()>& body, std::ostream& err) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
}

int cmd_train(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return run_guarded([&] {
        RunConfig cfg = load_config(opts);
        if (cfg.dims.feature_width || cfg.dims.refine_input_channels) {
            throw ConfigError("model.feature_width/model.refine_input_channels only apply to params");
        }
        const TrainConfig tcfg = cfg.resolved_train();
        tcfg.validate();
        const fs::path dir = opts.out.empty() ? resolve(cfg, cfg.output_dir) : opts.out;

        DatasetSplit split = load_split(cfg);
        if (split.train.empty()) throw DataError("no training cycles");
        if (split.val.empty()) throw DataError("no validation cycles");
        const std::size_t sensors = split.train.front().sensor_count();
        for (const auto* part : {&split.train, &split.val, &split.test}) {
            for (const auto& c : *part) {
                if (c.sensor_count() != sensors) {
                    throw DataError("cycle '" + c.id + "' has " + std::to_string(c.sensor_count()) +
                                    " sensors, expected " + std::to_string(sensors));
                }
            }
        }
        PreparedData data = prepare_dataset(std::move(split), cfg.model.window_length, tcfg.mask_padding);
        const ModelConfig mcfg = resolve_model(cfg, sensors, data.alphabet.size());

        DirectoryLock lock(dir);
        PrecTimeModel model(mcfg, cfg.variant, cfg.init_seed());
        if (!opts.quiet) {
            out << "training " << variant_name(cfg.variant) << " on " << data.train.size() << "/" << data.val.size()
                << "/" << data.test.size() << " cycles, T=" << data.padded_length << ", "
                << model.parameters().element_count() << " parameters\n";
        }
        auto progress = [&](const EpochRecord& r) {
            if (opts.quiet) return;
            char buf[160];
            std::snprintf(buf, sizeof buf, "epoch %3zu  loss %.5f  val_loss %.5f  val_acc %.4f / %.4f  %.2fs\n",
                          r.epoch, r.train_loss, r.val_loss, r.val_acc_intermediate, r.val_acc_final, r.seconds);
            out << buf << std::flush;
        };
        TrainResult result = train(std::move(model), data.train, data.val, tcfg, progress);

        CheckpointMeta meta{data.alphabet, data.stats, tcfg, result.log.best_val_accuracy, result.log.best_epoch};
        save_checkpoint(dir / "checkpoint.bin", result.model, meta);
        write_text(dir / "train_log.csv", result.log.to_csv());
        const auto val = evaluate(result.model, data.val, data.alphabet, cfg.metrics);
        write_text(dir / "report_val.json", dump_json(report_to_json(val)));
        if (!data.test.empty()) {
            const auto test = evaluate(result.model, data.test, data.alphabet, cfg.metrics);
            write_text(dir / "report_test.json", dump_json(report_to_json(test)));
            if (!opts.quiet) {
                char buf[200];
                std::snprintf(buf, sizeof buf, "best epoch %zu; test accuracy %.4f, macro-F1 %.4f, cp %.3f/%.3f\n",
                              result.log.best_epoch, test.accuracy, test.macro_f1, test.cp_precision, test.cp_recall);
                out << buf;
            }
        } else {
            err << "warning: no test cycles, report_test.json not written\n";
        }
        return kExitOk;
    }, err);
}

int cmd_eval(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return run_guarded([&] {
        MetricsOptions metrics;
        if (!opts.config.empty()) metrics = load_config(opts).metrics;
        if (opts.checkpoint.empty()) throw ConfigError("--checkpoint is required");
        if (opts.manifest.empty()) throw ConfigError("--manifest is required");
        const LoadedCheckpoint ckpt = load_checkpoint(opts.checkpoint);
        std::vector<Sample> samples;
        for (const auto& e : read_manifest(opts.manifest)) {
            if (!opts.split.empty() && e.split != opts.split) continue;
            samples.push_back(inference_sample(load_cycle(e.path), ckpt));
        }
        if (samples.empty()) throw DataError("manifest selects no cycles");
        ReportBuilder builder(ckpt.meta.alphabet.codes(), metrics);
        const auto report = evaluate(ckpt.model, samples, ckpt.meta.alphabet, metrics, &builder);

        const fs::path dir = opts.out.empty() ? fs::path("eval") : opts.out;
        DirectoryLock lock(dir);
        write_text(dir / "report.json", dump_json(report_to_json(report)));
        write_text(dir / "changepoints.csv", builder.details_csv());
        if (!opts.quiet) {
            char buf[200];
            std::snprintf(buf, sizeof buf, "%zu cycles: accuracy %.4f, macro-F1 %.4f, cp %.3f/%.3f\n", samples.size(),
                          report.accuracy, report.macro_f1, report.cp_precision, report.cp_recall);
            out << buf;
        }
        return kExitOk;
    }, err);
}

int cmd_predict(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return run_guarded([&] {
        if (opts.checkpoint.empty()) throw ConfigError("--checkpoint is required");
        if (opts.input.empty()) throw ConfigError("an input cycle CSV is required");
        const LoadedCheckpoint ckpt = load_checkpoint(opts.checkpoint);
        const Cycle raw = load_cycle(opts.input);
        const ModelConfig& m = ckpt.model.config();
        if (raw.sensor_count() != m.sensors) {
            throw DataError("cycle '" + raw.id + "' has " + std::to_string(raw.sensor_count()) +
                            " sensors, checkpoint expects " + std::to_string(m.sensors));
        }
        Cycle c = apply_norm(raw, ckpt.meta.stats);
        c = pad_min_value(c, round_up(c.length(), m.window_length), m.window_length);
        const DualPrediction pred = ckpt.model.predict(c.sensors);
        const Tensor& probs = pred.final ? *pred.final : pred.intermediate;
        const auto dense = argmax_rows(probs);
        const std::size_t classes = probs.dim(1);

        std::string text = "t,label,confidence\n";
        char buf[64];
        for (std::size_t t = 0; t < raw.length(); ++t) {
            std::snprintf(buf, sizeof buf, "%zu,%d,%.17g\n", t,
                          ckpt.meta.alphabet.code_of(static_cast<std::size_t>(dense[t])),
                          probs.data()[t * classes + static_cast<std::size_t>(dense[t])]);
            text += buf;
        }
        if (opts.out.empty()) {
            out << text;
        } else {
            write_text(opts.out, text);
        }
        return kExitOk;
    }, err);
}

int cmd_synth(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return run_guarded([&] {
        const RunConfig cfg = load_config(opts);
        const SynthSpec spec = cfg.resolved_synth();
        auto cycles = synth_generate(spec);
        const fs::path dir = opts.out.empty() ? resolve(cfg, cfg.output_dir) : opts.out;

        std::map<std::string, std::string> assignment;
        {
            const DatasetSplit split = split_dataset(cycles, cfg.data.split, cfg.split_seed());
            for (const auto& c : split.train) assignment[c.id] = "train";
            for (const auto& c : split.val) assignment[c.id] = "val";
            for (const auto& c : split.test) assignment[c.id] = "test";
        }
        DirectoryLock lock(dir);
        std::vector<ManifestEntry> entries;
        for (const auto& c : cycles) {
            const fs::path name = c.id + ".csv";
            write_cycle(c, dir / name);
            entries.push_back({name, assignment.at(c.id)});
        }
        write_text(dir / "manifest.csv", format_manifest(entries));
        if (!opts.quiet) out << "wrote " << cycles.size() << " cycles to " << dir.string() << '\n';
        return kExitOk;
    }, err);
}

int cmd_params(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return run_guarded([&] {
        const RunConfig cfg = load_config(opts);
        cfg.model.validate();
        const ParamCount pc = count_params(cfg.model, cfg.variant, cfg.dims);
        std::size_t width = 5;
        for (const auto& l : pc.layers) width = std::max(width, l.layer.size());
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-*s %12s\n", static_cast<int>(width), "layer", "params");
        out << buf;
        for (const auto& l : pc.layers) {
            std::snprintf(buf, sizeof buf, "%-*s %12zu\n", static_cast<int>(width), l.layer.c_str(), l.count);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "%-*s %12zu\n", static_cast<int>(width), "total", pc.total);
        out << buf;
        return kExitOk;
    }, err);
}

}  // namespace prectime
