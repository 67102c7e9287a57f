#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace prectime {

// Masks are byte sequences (nonzero = evaluated). An empty mask selects every timestep.
using Mask = std::vector<std::uint8_t>;

struct Changepoint {
    std::size_t t;  // first timestep of the new segment
    int from_class;
    int to_class;

    bool operator==(const Changepoint&) const = default;
};

// Throws ArgumentError when the mask selects nothing.
double accuracy(std::span<const int> pred, std::span<const int> truth, std::span<const std::uint8_t> mask = {});

struct ClassCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

struct F1Result {
    double macro = 0.0;
    std::map<int, double> per_class;
};

// F1_c = TP / (TP + (FP + FN) / 2), averaged over every alphabet class.
// Classes absent from both sequences score `absent_class_f1`.
F1Result macro_f1(std::span<const int> pred, std::span<const int> truth, std::span<const std::uint8_t> mask,
                  std::span<const int> alphabet, double absent_class_f1 = 0.0);

// One entry per evaluated adjacent pair (t-1, t) whose labels differ.
std::vector<Changepoint> extract_changepoints(std::span<const int> labels, std::span<const std::uint8_t> mask = {});

enum class Matching {
    existence,  // each side matched independently, one counterpart may serve many
    exclusive,  // one-to-one, greedy nearest-first
};

struct MatchResult {
    std::vector<bool> pred_matched;
    std::vector<bool> true_matched;
    std::size_t matched_pred() const;
    std::size_t matched_true() const;
};

// Equivalent changepoints share (from, to) and lie within `tolerance` steps (inclusive).
MatchResult match_changepoints(std::span<const Changepoint> pred, std::span<const Changepoint> truth,
                               long tolerance, Matching matching = Matching::existence);

// No predicted changepoints scores 0.
double cp_precision(std::span<const Changepoint> pred, std::span<const Changepoint> truth, long tolerance,
                    Matching matching = Matching::existence);
// No ground-truth changepoints scores 1.
double cp_recall(std::span<const Changepoint> pred, std::span<const Changepoint> truth, long tolerance,
                 Matching matching = Matching::existence);

inline constexpr long kDefaultTolerance = 20;

struct SegmentationReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::map<int, double> per_class_f1;
    double cp_precision = 0.0;
    double cp_recall = 0.0;
    std::map<int, ClassCounts> counts;
    std::size_t correct = 0;
    std::size_t evaluated = 0;
    std::size_t matched_pred = 0;
    std::size_t total_pred = 0;
    std::size_t matched_true = 0;
    std::size_t total_true = 0;
    long tolerance = kDefaultTolerance;
};

nlohmann::json report_to_json(const SegmentationReport& report);

enum class Pooling { micro, per_cycle };

struct MetricsOptions {
    long tolerance = kDefaultTolerance;
    Matching matching = Matching::existence;
    Pooling pooling = Pooling::micro;
    double absent_class_f1 = 0.0;
};

struct ChangepointDetail {
    std::string cycle_id;
    Changepoint cp;
    bool predicted;  // side: prediction or ground truth
    bool matched;
};

// Collects cycles one at a time and produces a dataset-level report.
class ReportBuilder {
public:
    ReportBuilder(std::vector<int> alphabet, MetricsOptions options = {});

    void add(const std::string& cycle_id, std::span<const int> pred, std::span<const int> truth,
             std::span<const std::uint8_t> mask = {});

    SegmentationReport finish() const;
    const std::vector<ChangepointDetail>& details() const noexcept { return details_; }
    // CSV with header cycle_id,t,from,to,side,matched.
    std::string details_csv() const;

private:
    std::vector<int> alphabet_;
    MetricsOptions options_;
    SegmentationReport pooled_;
    std::vector<SegmentationReport> per_cycle_;
    std::vector<ChangepointDetail> details_;
};

}  // namespace prectime
