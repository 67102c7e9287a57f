#pragma once

#include <cstddef>
#include <cstdint>

namespace prectime::testing {

struct MetricOutcome {
    std::size_t cases = 0;
    std::size_t cases_without_pred_cps = 0;
    std::size_t cases_without_true_cps = 0;
    std::size_t changepoint_mismatches = 0;
    double max_diff_accuracy = 0.0;
    double max_diff_macro_f1 = 0.0;
    double max_diff_precision = 0.0;
    double max_diff_recall = 0.0;
    double worked_example_macro = 0.0;  // truth [0,0,1,1], pred [0,1,1,1]
    double absent_class_macro = 0.0;    // same with alphabet {0,1,2}
    bool boundary_20_matches = false;
    bool boundary_21_rejected = false;
};

// Library metrics against the brute-force oracles on randomized label pairs
// (T <= 500, up to 6 classes), plus the fixed worked and boundary examples.
MetricOutcome run_metric_suite(std::uint64_t seed, std::size_t cases = 1000);

}  // namespace prectime::testing
