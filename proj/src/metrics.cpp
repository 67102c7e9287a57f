#include "prectime/metrics.hpp"

#include "prectime/errors.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>
#include <tuple>

namespace prectime {

namespace {

void require_lengths(std::span<const int> pred, std::span<const int> truth, std::span<const std::uint8_t> mask) {
    if (pred.size() != truth.size()) {
        throw ShapeError("metrics: prediction has " + std::to_string(pred.size()) + " labels, truth has " +
                         std::to_string(truth.size()));
    }
    if (!mask.empty() && mask.size() != truth.size()) {
        throw ShapeError("metrics: mask length " + std::to_string(mask.size()) + " does not match " +
                         std::to_string(truth.size()));
    }
}

bool selected(std::span<const std::uint8_t> mask, std::size_t t) { return mask.empty() || mask[t] != 0; }

std::map<int, ClassCounts> confusion(std::span<const int> pred, std::span<const int> truth,
                                     std::span<const std::uint8_t> mask, std::span<const int> alphabet) {
    std::map<int, ClassCounts> counts;
    for (int c : alphabet) counts[c];
    auto lookup = [&](int c) -> ClassCounts& {
        auto it = counts.find(c);
        if (it == counts.end()) throw DataError("metrics: label " + std::to_string(c) + " is not in the alphabet");
        return it->second;
    };
    for (std::size_t t = 0; t < truth.size(); ++t) {
        if (!selected(mask, t)) continue;
        if (pred[t] == truth[t]) {
            lookup(truth[t]).tp += 1;
        } else {
            lookup(pred[t]).fp += 1;
            lookup(truth[t]).fn += 1;
        }
    }
    return counts;
}

double f1_of(const ClassCounts& c, double absent) {
    const double denom = static_cast<double>(c.tp) + 0.5 * static_cast<double>(c.fp + c.fn);
    if (denom == 0.0) return absent;
    return static_cast<double>(c.tp) / denom;
}

F1Result f1_from_counts(const std::map<int, ClassCounts>& counts, double absent) {
    F1Result r;
    double total = 0.0;
    for (const auto& [c, cc] : counts) {
        const double f = f1_of(cc, absent);
        r.per_class[c] = f;
        total += f;
    }
    r.macro = total / static_cast<double>(counts.size());
    return r;
}

bool equivalent(const Changepoint& a, const Changepoint& b, long tolerance) {
    if (a.from_class != b.from_class || a.to_class != b.to_class) return false;
    const long d = static_cast<long>(a.t) - static_cast<long>(b.t);
    return std::labs(d) <= tolerance;
}

std::size_t count_true(const std::vector<bool>& v) {
    return static_cast<std::size_t>(std::count(v.begin(), v.end(), true));
}

}  // namespace

double accuracy(std::span<const int> pred, std::span<const int> truth, std::span<const std::uint8_t> mask) {
    require_lengths(pred, truth, mask);
    std::size_t total = 0, correct = 0;
    for (std::size_t t = 0; t < truth.size(); ++t) {
        if (!selected(mask, t)) continue;
        ++total;
        if (pred[t] == truth[t]) ++correct;
    }
    if (total == 0) throw ArgumentError("accuracy: no timesteps selected");
    return static_cast<double>(correct) / static_cast<double>(total);
}

F1Result macro_f1(std::span<const int> pred, std::span<const int> truth, std::span<const std::uint8_t> mask,
                  std::span<const int> alphabet, double absent_class_f1) {
    if (alphabet.empty()) throw ArgumentError("macro_f1: empty alphabet");
    require_lengths(pred, truth, mask);
    return f1_from_counts(confusion(pred, truth, mask, alphabet), absent_class_f1);
}

std::vector<Changepoint> extract_changepoints(std::span<const int> labels, std::span<const std::uint8_t> mask) {
    if (!mask.empty() && mask.size() != labels.size()) throw ShapeError("extract_changepoints: mask length mismatch");
    std::vector<Changepoint> out;
    for (std::size_t t = 1; t < labels.size(); ++t) {
        if (!selected(mask, t - 1) || !selected(mask, t)) continue;
        if (labels[t] != labels[t - 1]) out.push_back({t, labels[t - 1], labels[t]});
    }
    return out;
}

std::size_t MatchResult::matched_pred() const { return count_true(pred_matched); }
std::size_t MatchResult::matched_true() const { return count_true(true_matched); }

MatchResult match_changepoints(std::span<const Changepoint> pred, std::span<const Changepoint> truth, long tolerance,
                               Matching matching) {
    if (tolerance < 0) throw ArgumentError("changepoint tolerance must be >= 0");
    MatchResult r;
    r.pred_matched.assign(pred.size(), false);
    r.true_matched.assign(truth.size(), false);

    if (matching == Matching::existence) {
        auto by_time = [](std::span<const Changepoint> cps) {
            std::vector<std::size_t> idx(cps.size());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return cps[a].t < cps[b].t; });
            return idx;
        };
        const auto pi = by_time(pred);
        const auto ti = by_time(truth);
        std::size_t lo = 0;
        for (std::size_t i : pi) {
            const long pt = static_cast<long>(pred[i].t);
            while (lo < ti.size() && static_cast<long>(truth[ti[lo]].t) < pt - tolerance) ++lo;
            for (std::size_t k = lo; k < ti.size() && static_cast<long>(truth[ti[k]].t) <= pt + tolerance; ++k) {
                const std::size_t j = ti[k];
                if (equivalent(pred[i], truth[j], tolerance)) {
                    r.pred_matched[i] = true;
                    r.true_matched[j] = true;
                }
            }
        }
        return r;
    }

    std::vector<std::tuple<long, std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        for (std::size_t j = 0; j < truth.size(); ++j) {
            if (equivalent(pred[i], truth[j], tolerance)) {
                pairs.emplace_back(std::labs(static_cast<long>(pred[i].t) - static_cast<long>(truth[j].t)), i, j);
            }
        }
    }
    std::sort(pairs.begin(), pairs.end());
    for (const auto& [dist, i, j] : pairs) {
        if (r.pred_matched[i] || r.true_matched[j]) continue;
        r.pred_matched[i] = true;
        r.true_matched[j] = true;
    }
    return r;
}

double cp_precision(std::span<const Changepoint> pred, std::span<const Changepoint> truth, long tolerance,
                    Matching matching) {
    MatchResult m = match_changepoints(pred, truth, tolerance, matching);
    if (pred.empty()) return 0.0;
    return static_cast<double>(m.matched_pred()) / static_cast<double>(pred.size());
}

double cp_recall(std::span<const Changepoint> pred, std::span<const Changepoint> truth, long tolerance,
                 Matching matching) {
    MatchResult m = match_changepoints(pred, truth, tolerance, matching);
    if (truth.empty()) return 1.0;
    return static_cast<double>(m.matched_true()) / static_cast<double>(truth.size());
}

nlohmann::json report_to_json(const SegmentationReport& r) {
    nlohmann::json j;
    j["accuracy"] = r.accuracy;
    j["macro_f1"] = r.macro_f1;
    j["cp_precision"] = r.cp_precision;
    j["cp_recall"] = r.cp_recall;
    j["tolerance"] = r.tolerance;
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [c, f] : r.per_class_f1) per_class[std::to_string(c)] = f;
    j["per_class_f1"] = per_class;
    nlohmann::json classes = nlohmann::json::object();
    for (const auto& [c, cc] : r.counts) {
        classes[std::to_string(c)] = {{"tp", cc.tp}, {"fp", cc.fp}, {"fn", cc.fn}};
    }
    j["counts"] = {
        {"classes", classes},
        {"correct", r.correct},
        {"evaluated", r.evaluated},
        {"matched_pred", r.matched_pred},
        {"total_pred", r.total_pred},
        {"matched_true", r.matched_true},
        {"total_true", r.total_true},
    };
    return j;
}

ReportBuilder::ReportBuilder(std::vector<int> alphabet, MetricsOptions options)
    : alphabet_(std::move(alphabet)), options_(options) {
    if (alphabet_.empty()) throw ArgumentError("report: empty alphabet");
    if (options_.tolerance < 0) throw ArgumentError("changepoint tolerance must be >= 0");
    pooled_.tolerance = options_.tolerance;
    for (int c : alphabet_) pooled_.counts[c];
}

void ReportBuilder::add(const std::string& cycle_id, std::span<const int> pred, std::span<const int> truth,
                        std::span<const std::uint8_t> mask) {
    require_lengths(pred, truth, mask);
    SegmentationReport cycle;
    cycle.tolerance = options_.tolerance;
    cycle.counts = confusion(pred, truth, mask, alphabet_);
    for (std::size_t t = 0; t < truth.size(); ++t) {
        if (!selected(mask, t)) continue;
        ++cycle.evaluated;
        if (pred[t] == truth[t]) ++cycle.correct;
    }
    auto pcp = extract_changepoints(pred, mask);
    auto tcp = extract_changepoints(truth, mask);
    MatchResult m = match_changepoints(pcp, tcp, options_.tolerance, options_.matching);
    cycle.matched_pred = m.matched_pred();
    cycle.total_pred = pcp.size();
    cycle.matched_true = m.matched_true();
    cycle.total_true = tcp.size();
    for (std::size_t i = 0; i < pcp.size(); ++i) details_.push_back({cycle_id, pcp[i], true, m.pred_matched[i]});
    for (std::size_t j = 0; j < tcp.size(); ++j) details_.push_back({cycle_id, tcp[j], false, m.true_matched[j]});

    for (const auto& [c, cc] : cycle.counts) {
        auto& dst = pooled_.counts[c];
        dst.tp += cc.tp;
        dst.fp += cc.fp;
        dst.fn += cc.fn;
    }
    pooled_.correct += cycle.correct;
    pooled_.evaluated += cycle.evaluated;
    pooled_.matched_pred += cycle.matched_pred;
    pooled_.total_pred += cycle.total_pred;
    pooled_.matched_true += cycle.matched_true;
    pooled_.total_true += cycle.total_true;
    per_cycle_.push_back(std::move(cycle));
}

namespace {

void fill_rates(SegmentationReport& r, double absent) {
    if (r.evaluated == 0) throw ArgumentError("report: no timesteps evaluated");
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.evaluated);
    F1Result f = f1_from_counts(r.counts, absent);
    r.macro_f1 = f.macro;
    r.per_class_f1 = f.per_class;
    r.cp_precision = r.total_pred == 0 ? 0.0 : static_cast<double>(r.matched_pred) / static_cast<double>(r.total_pred);
    r.cp_recall = r.total_true == 0 ? 1.0 : static_cast<double>(r.matched_true) / static_cast<double>(r.total_true);
}

}  // namespace

SegmentationReport ReportBuilder::finish() const {
    SegmentationReport r = pooled_;
    fill_rates(r, options_.absent_class_f1);
    if (options_.pooling == Pooling::per_cycle && !per_cycle_.empty()) {
        double acc = 0, f1 = 0, prec = 0, rec = 0;
        std::map<int, double> per_class;
        for (SegmentationReport c : per_cycle_) {
            fill_rates(c, options_.absent_class_f1);
            acc += c.accuracy;
            f1 += c.macro_f1;
            prec += c.cp_precision;
            rec += c.cp_recall;
            for (const auto& [k, v] : c.per_class_f1) per_class[k] += v;
        }
        const double n = static_cast<double>(per_cycle_.size());
        r.accuracy = acc / n;
        r.macro_f1 = f1 / n;
        r.cp_precision = prec / n;
        r.cp_recall = rec / n;
        for (auto& [k, v] : per_class) v /= n;
        r.per_class_f1 = per_class;
    }
    return r;
}

std::string ReportBuilder::details_csv() const {
    std::ostringstream os;
    os << "cycle_id,t,from,to,side,matched\n";
    for (const auto& d : details_) {
        os << d.cycle_id << ',' << d.cp.t << ',' << d.cp.from_class << ',' << d.cp.to_class << ','
           << (d.predicted ? "pred" : "true") << ',' << (d.matched ? 1 : 0) << '\n';
    }
    return os.str();
}

}  // namespace prectime
