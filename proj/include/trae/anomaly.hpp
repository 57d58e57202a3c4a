#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace trae {

struct PersistentMinimum {
    std::size_t index = 0;
    double value = 0.0;
    double persistence = 0.0;  // +inf for the global minimum
};

/// 1-D sub-level-set persistence. Values are ordered by (value, index), so a
/// plateau contributes its leftmost sample. Each minimum is paired with the
/// sample at which its component merges into one with a lower minimum. Returns
/// minima with persistence >= threshold, sorted by index.
std::vector<PersistentMinimum> persistent_minima(std::span<const double> series, double threshold);

/// 0.2 * (max - min).
double default_persistence_threshold(std::span<const double> series);

struct Interval {
    std::size_t start = 0;
    std::size_t end = 0;  // inclusive
    std::size_t length() const { return end - start + 1; }
    bool operator==(const Interval&) const = default;
};

struct AnomalyEvent {
    std::size_t start = 0;
    std::size_t end = 0;  // inclusive
    std::vector<std::size_t> minima;
};

/// Each minimum spans [m - window/2, m + window/2] clamped to the series; spans
/// sharing at least one frame merge into a single event.
std::vector<AnomalyEvent> build_events(std::span<const PersistentMinimum> minima, std::size_t window,
                                       std::size_t series_length);

struct EvalReport {
    std::size_t correct_detections = 0;
    std::size_t false_alarms = 0;
    std::size_t missed = 0;
    std::optional<double> auc;
    std::optional<double> eer;
};

/// A detection is correct when it overlaps a ground-truth interval by at least
/// half that interval's length; matching is one-to-one, largest overlap first.
EvalReport match_events(std::span<const Interval> detected, std::span<const Interval> ground_truth);

struct RocCurve {
    std::vector<double> fpr;
    std::vector<double> tpr;
    double auc = 0.0;
    double eer = 0.0;
};

/// Anomaly score 1 - s(t); thresholds sweep the unique scores.
RocCurve roc_auc_eer(std::span<const double> series, std::span<const int> labels);

std::string events_to_json(std::span<const AnomalyEvent> events);
std::vector<AnomalyEvent> events_from_json(const std::string& text);
std::string report_to_json(const EvalReport& report);

}  // namespace trae
