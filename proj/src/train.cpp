#include "prectime/train.hpp"

#include "prectime/errors.hpp"
#include "prectime/optim.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace prectime {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("train.lr: must be > 0");
    if (max_epochs < 1) throw ConfigError("train.max_epochs: must be >= 1");
    if (patience >= max_epochs) throw ConfigError("train.patience: must be < max_epochs");
    if (!(w_intermediate > 0.0)) throw ConfigError("train.w_intermediate: must be > 0");
    if (!(w_final > w_intermediate)) throw ConfigError("train.w_final: must exceed w_intermediate");
}

std::string TrainLog::to_csv() const {
    std::ostringstream os;
    os << "epoch,train_loss,val_loss,val_acc_intermediate,val_acc_final,seconds\n";
    char buf[256];
    for (const auto& e : epochs) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.3f\n", e.epoch, e.train_loss, e.val_loss,
                      e.val_acc_intermediate, e.val_acc_final, e.seconds);
        os << buf;
    }
    return os.str();
}

Var total_loss(Tape& tape, Var intermediate, Var final, const Tensor& target, std::span<const double> weights,
               double w_intermediate, double w_final) {
    Var li = ops::cross_entropy(tape, intermediate, target, weights);
    if (!final.valid()) return li;
    Var lf = ops::cross_entropy(tape, final, target, weights);
    return ops::add(tape, ops::scale(tape, li, w_intermediate), ops::scale(tape, lf, w_final));
}

std::vector<int> argmax_rows(const Tensor& probs) {
    if (probs.rank() != 2) throw ShapeError("argmax_rows: expected [T x C], got " + shape_string(probs.shape()));
    const std::size_t c = probs.dim(1);
    std::vector<int> out(probs.dim(0));
    for (std::size_t t = 0; t < out.size(); ++t) {
        const double* row = probs.data().data() + t * c;
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j) {
            if (row[j] > row[best]) best = j;
        }
        out[t] = static_cast<int>(best);
    }
    return out;
}

namespace {

struct Validation {
    double loss = 0.0;
    double acc_intermediate = 0.0;
    double acc_final = 0.0;
};

Validation validate_model(const PrecTimeModel& model, std::span<const Sample> samples, const TrainConfig& cfg) {
    Validation v;
    std::size_t total = 0, hit_i = 0, hit_f = 0;
    for (const auto& s : samples) {
        Tape tape;
        ForwardVars fv = model.forward(tape, tape.constant(s.sensors));
        v.loss += tape.scalar(total_loss(tape, fv.intermediate, fv.final, s.target, s.weights, cfg.w_intermediate,
                                         cfg.w_final));
        const auto pi = argmax_rows(tape.value(fv.intermediate));
        const auto pf = fv.final.valid() ? argmax_rows(tape.value(fv.final)) : pi;
        for (std::size_t t = 0; t < s.classes.size(); ++t) {
            if (!s.mask[t]) continue;
            ++total;
            hit_i += pi[t] == s.classes[t];
            hit_f += pf[t] == s.classes[t];
        }
    }
    v.loss /= static_cast<double>(samples.size());
    if (total > 0) {
        v.acc_intermediate = static_cast<double>(hit_i) / static_cast<double>(total);
        v.acc_final = static_cast<double>(hit_f) / static_cast<double>(total);
    }
    return v;
}

}  // namespace

TrainResult train(PrecTimeModel model, std::span<const Sample> train_set, std::span<const Sample> val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    if (train_set.empty()) throw ArgumentError("train: empty training set");
    if (val_set.empty()) throw ArgumentError("train: empty validation set");

    ParameterSet& params = model.parameters();
    AdamState adam = make_adam_state(params, config.lr);
    Rng dropout_rng = Rng(config.seed).fork("dropout");

    TrainLog log;
    std::vector<Tensor> best_values;
    bool have_best = false;
    const double inv_n = 1.0 / static_cast<double>(train_set.size());

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        params.zero_grad();
        double loss_sum = 0.0;
        for (const auto& s : train_set) {
            Tape tape;
            ForwardVars fv = model.forward(tape, tape.constant(s.sensors), true, &dropout_rng);
            Var loss = total_loss(tape, fv.intermediate, fv.final, s.target, s.weights, config.w_intermediate,
                                  config.w_final);
            loss_sum += tape.scalar(loss);
            tape.backward(loss);
        }
        const double train_loss = loss_sum * inv_n;
        if (!std::isfinite(train_loss)) {
            throw NumericError("training loss became non-finite in epoch " + std::to_string(epoch));
        }
        for (auto& p : params) {
            for (auto& g : p.grad.data()) g *= inv_n;
            p.grad.require_finite("gradient of '" + p.name + "' in epoch " + std::to_string(epoch));
        }
        adam_step(params, adam);

        const Validation v = validate_model(model, val_set, config);
        if (!std::isfinite(v.loss)) {
            throw NumericError("validation loss became non-finite in epoch " + std::to_string(epoch));
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = train_loss;
        rec.val_loss = v.loss;
        rec.val_acc_intermediate = v.acc_intermediate;
        rec.val_acc_final = v.acc_final;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        log.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (!have_best || v.acc_final > log.best_val_accuracy) {
            have_best = true;
            log.best_val_accuracy = v.acc_final;
            log.best_epoch = epoch;
            best_values.clear();
            for (const auto& p : params) best_values.push_back(p.value);
        } else if (epoch - log.best_epoch >= config.patience) {
            break;
        }
    }

    for (std::size_t k = 0; k < params.size(); ++k) params[k].value = best_values[k];
    params.zero_grad();
    return TrainResult{std::move(model), std::move(log)};
}

SegmentationReport evaluate(const PrecTimeModel& model, std::span<const Sample> samples, const Alphabet& alphabet,
                            const MetricsOptions& options, ReportBuilder* builder) {
    ReportBuilder local(alphabet.codes(), options);
    ReportBuilder& rb = builder ? *builder : local;
    for (const auto& s : samples) {
        if (s.codes.size() != s.sensors.dim(1)) throw DataError("sample '" + s.id + "' has inconsistent lengths");
        DualPrediction pred = model.predict(s.sensors);
        const Tensor& probs = pred.final ? *pred.final : pred.intermediate;
        if (probs.dim(1) != alphabet.size()) {
            throw DataError("model predicts " + std::to_string(probs.dim(1)) + " classes, alphabet has " +
                            std::to_string(alphabet.size()));
        }
        const auto dense = argmax_rows(probs);
        std::vector<int> codes(dense.size());
        for (std::size_t t = 0; t < dense.size(); ++t) codes[t] = alphabet.code_of(static_cast<std::size_t>(dense[t]));
        for (std::size_t t = 0; t < s.codes.size(); ++t) {
            if (s.mask[t] && !alphabet.contains(s.codes[t])) {
                throw DataError("label " + std::to_string(s.codes[t]) + " of '" + s.id + "' is not in the alphabet");
            }
        }
        rb.add(s.id, codes, s.codes, s.mask);
    }
    return rb.finish();
}

}  // namespace prectime
