#pragma once

#include "prectime/data.hpp"
#include "prectime/metrics.hpp"
#include "prectime/model.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace prectime {

struct TrainConfig {
    double lr = 0.001;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;
    double w_final = 2.0;
    double w_intermediate = 1.0;
    std::uint64_t seed = 0;
    bool mask_padding = true;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc_intermediate = 0.0;
    double val_acc_final = 0.0;  // equals the intermediate accuracy for A3
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_accuracy = 0.0;

    // Header: epoch,train_loss,val_loss,val_acc_intermediate,val_acc_final,seconds
    std::string to_csv() const;
};

// w_I * CE(intermediate) + w_F * CE(final); for a model without a final head
// (invalid `final`) only the intermediate term, weighted 1.
Var total_loss(Tape& tape, Var intermediate, Var final, const Tensor& target, std::span<const double> weights,
               double w_intermediate, double w_final);

struct TrainResult {
    PrecTimeModel model;  // parameters of the best validation epoch
    TrainLog log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Full-batch training: one Adam step per epoch on the mean per-sample loss,
// early stopping after `patience` epochs without strict improvement of the
// validation accuracy of the final head (intermediate head for A3).
TrainResult train(PrecTimeModel model, std::span<const Sample> train_set, std::span<const Sample> val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// Row-wise argmax as dense class indices.
std::vector<int> argmax_rows(const Tensor& probs);

// Argmax decoding of the evaluated head, pooled over every sample.
SegmentationReport evaluate(const PrecTimeModel& model, std::span<const Sample> samples, const Alphabet& alphabet,
                            const MetricsOptions& options = {}, ReportBuilder* builder = nullptr);

}  // namespace prectime
