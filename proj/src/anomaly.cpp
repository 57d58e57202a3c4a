#include "trae/anomaly.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <tuple>

#include <json.hpp>

#include "trae/error.hpp"

namespace trae {

namespace {

struct DisjointSets {
    explicit DisjointSets(std::size_t n) : parent(n), min_index(n) {
        std::iota(parent.begin(), parent.end(), std::size_t{0});
        std::iota(min_index.begin(), min_index.end(), std::size_t{0});
    }
    std::size_t find(std::size_t i) {
        while (parent[i] != i) {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        return i;
    }
    std::vector<std::size_t> parent;
    std::vector<std::size_t> min_index;  // valid at roots
};

void require_sorted_disjoint(std::span<const Interval> list, const char* name) {
    for (std::size_t i = 0; i < list.size(); ++i) {
        if (list[i].start > list[i].end)
            throw Error(ErrorKind::InvalidInput, std::string(name) + ": interval with start > end");
        if (i > 0 && list[i].start <= list[i - 1].end)
            throw Error(ErrorKind::InvalidInput, std::string(name) + ": intervals overlap or are unsorted");
    }
}

}  // namespace

std::vector<PersistentMinimum> persistent_minima(std::span<const double> series, double threshold) {
    const std::size_t n = series.size();
    if (n == 0) return {};
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto before = [&](std::size_t a, std::size_t b) {
        return std::tie(series[a], a) < std::tie(series[b], b);
    };
    std::sort(order.begin(), order.end(), before);

    DisjointSets sets(n);
    std::vector<bool> seen(n, false);
    std::vector<PersistentMinimum> births;
    std::vector<std::size_t> birth_slot(n, SIZE_MAX);

    for (std::size_t i : order) {
        const bool left = i > 0 && seen[i - 1];
        const bool right = i + 1 < n && seen[i + 1];
        seen[i] = true;
        if (!left && !right) {
            birth_slot[i] = births.size();
            births.push_back({i, series[i], std::numeric_limits<double>::infinity()});
        } else if (left && right) {
            std::size_t a = sets.find(i - 1), b = sets.find(i + 1);
            // The component whose minimum comes later in the sweep dies here.
            if (before(sets.min_index[a], sets.min_index[b])) std::swap(a, b);
            const std::size_t dying = sets.min_index[a];
            births[birth_slot[dying]].persistence = series[i] - series[dying];
            sets.parent[a] = b;
            sets.parent[i] = b;
        } else {
            sets.parent[i] = sets.find(left ? i - 1 : i + 1);
        }
    }

    std::vector<PersistentMinimum> out;
    for (const PersistentMinimum& m : births)
        if (m.persistence >= threshold) out.push_back(m);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
    return out;
}

double default_persistence_threshold(std::span<const double> series) {
    if (series.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
    return 0.2 * (*hi - *lo);
}

std::vector<AnomalyEvent> build_events(std::span<const PersistentMinimum> minima, std::size_t window,
                                       std::size_t series_length) {
    std::vector<AnomalyEvent> events;
    if (series_length == 0) return events;
    const std::size_t half = window / 2;
    std::vector<std::size_t> idx;
    for (const auto& m : minima) idx.push_back(m.index);
    std::sort(idx.begin(), idx.end());
    for (std::size_t m : idx) {
        const std::size_t start = m > half ? m - half : 0;
        const std::size_t end = std::min(m + half, series_length - 1);
        if (!events.empty() && start <= events.back().end) {
            events.back().end = std::max(events.back().end, end);
            events.back().minima.push_back(m);
        } else {
            events.push_back({start, end, {m}});
        }
    }
    return events;
}

EvalReport match_events(std::span<const Interval> detected, std::span<const Interval> ground_truth) {
    require_sorted_disjoint(detected, "detected");
    require_sorted_disjoint(ground_truth, "ground truth");
    struct Candidate {
        std::size_t overlap, gt, det;
    };
    std::vector<Candidate> candidates;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
        for (std::size_t d = 0; d < detected.size(); ++d) {
            const std::size_t lo = std::max(ground_truth[g].start, detected[d].start);
            const std::size_t hi = std::min(ground_truth[g].end, detected[d].end);
            if (lo > hi) continue;
            const std::size_t overlap = hi - lo + 1;
            if (2 * overlap >= ground_truth[g].length()) candidates.push_back({overlap, g, d});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.overlap != b.overlap) return a.overlap > b.overlap;
        return std::tie(a.gt, a.det) < std::tie(b.gt, b.det);
    });
    std::vector<bool> gt_used(ground_truth.size(), false), det_used(detected.size(), false);
    EvalReport r;
    for (const Candidate& c : candidates) {
        if (gt_used[c.gt] || det_used[c.det]) continue;
        gt_used[c.gt] = det_used[c.det] = true;
        ++r.correct_detections;
    }
    r.false_alarms = detected.size() - r.correct_detections;
    r.missed = ground_truth.size() - r.correct_detections;
    return r;
}

RocCurve roc_auc_eer(std::span<const double> series, std::span<const int> labels) {
    if (series.size() != labels.size()) throw Error(ErrorKind::InvalidInput, "series and labels differ in length");
    std::size_t positives = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw Error(ErrorKind::InvalidInput, "labels must be 0 or 1");
        positives += static_cast<std::size_t>(l);
    }
    const std::size_t negatives = labels.size() - positives;
    if (positives == 0 || negatives == 0) throw Error(ErrorKind::UndefinedMetric, "labels contain a single class");

    std::vector<std::size_t> order(series.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Descending anomaly score 1 - s is ascending s.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return series[a] < series[b]; });

    RocCurve roc;
    roc.fpr.push_back(0.0);
    roc.tpr.push_back(0.0);
    std::size_t tp = 0, fp = 0;
    for (std::size_t k = 0; k < order.size();) {
        const double score = 1.0 - series[order[k]];
        while (k < order.size() && 1.0 - series[order[k]] == score) {
            (labels[order[k]] ? tp : fp) += 1;
            ++k;
        }
        roc.fpr.push_back(static_cast<double>(fp) / static_cast<double>(negatives));
        roc.tpr.push_back(static_cast<double>(tp) / static_cast<double>(positives));
    }
    for (std::size_t k = 1; k < roc.fpr.size(); ++k) {
        roc.auc += (roc.fpr[k] - roc.fpr[k - 1]) * (roc.tpr[k] + roc.tpr[k - 1]) * 0.5;
    }
    // fpr + tpr - 1 rises from -1 to +1 along the curve; EER sits at its zero crossing.
    for (std::size_t k = 1; k < roc.fpr.size(); ++k) {
        const double g1 = roc.fpr[k] + roc.tpr[k] - 1.0;
        if (g1 < 0.0) continue;
        const double g0 = roc.fpr[k - 1] + roc.tpr[k - 1] - 1.0;
        const double t = g1 == g0 ? 0.0 : -g0 / (g1 - g0);
        roc.eer = roc.fpr[k - 1] + t * (roc.fpr[k] - roc.fpr[k - 1]);
        break;
    }
    return roc;
}

std::string events_to_json(std::span<const AnomalyEvent> events) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& e : events) {
        nlohmann::ordered_json ev;
        ev["start"] = e.start;
        ev["end"] = e.end;
        ev["minima"] = e.minima;
        j.push_back(std::move(ev));
    }
    return j.dump(2);
}

std::vector<AnomalyEvent> events_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        std::vector<AnomalyEvent> events;
        for (const auto& ev : j) {
            events.push_back({ev.at("start").get<std::size_t>(), ev.at("end").get<std::size_t>(),
                              ev.at("minima").get<std::vector<std::size_t>>()});
        }
        return events;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::FormatError, std::string("events JSON: ") + e.what());
    }
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["correct_detections"] = report.correct_detections;
    j["false_alarms"] = report.false_alarms;
    j["missed"] = report.missed;
    j["auc"] = report.auc ? nlohmann::ordered_json(*report.auc) : nlohmann::ordered_json(nullptr);
    j["eer"] = report.eer ? nlohmann::ordered_json(*report.eer) : nlohmann::ordered_json(nullptr);
    return j.dump(2);
}

}  // namespace trae
