// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace cxreval {

/// The 14 observation categories extracted from a chest radiograph report.
enum class Finding : std::size_t {
    atelectasis,
    cardiomegaly,
    consolidation,
    edema,
    enlarged_cardiomediastinum,
    fracture,
    lung_lesion,
    lung_opacity,
    no_finding,
    pleural_effusion,
    pleural_other,
    pneumonia,
    pneumothorax,
    support_devices,
};

inline constexpr std::size_t kFindingCount = 14;

inline constexpr std::array<Finding, kFindingCount> kAllFindings = {
    Finding::atelectasis,      Finding::cardiomegaly,
    Finding::consolidation,    Finding::edema,
    Finding::enlarged_cardiomediastinum, Finding::fracture,
    Finding::lung_lesion,      Finding::lung_opacity,
    Finding::no_finding,       Finding::pleural_effusion,
    Finding::pleural_other,    Finding::pneumonia,
    Finding::pneumothorax,     Finding::support_devices,
};

inline constexpr std::array<std::string_view, kFindingCount> kFindingNames = {
    "atelectasis",      "cardiomegaly",
    "consolidation",    "edema",
    "enlarged_cardiomediastinum", "fracture",
    "lung_lesion",      "lung_opacity",
    "no_finding",       "pleural_effusion",
    "pleural_other",    "pneumonia",
    "pneumothorax",     "support_devices",
};

// Column headers used by the public CheXpert label files.
inline constexpr std::array<std::string_view, kFindingCount> kFindingDisplayNames = {
    "Atelectasis",      "Cardiomegaly",
    "Consolidation",    "Edema",
    "Enlarged Cardiomediastinum", "Fracture",
    "Lung Lesion",      "Lung Opacity",
    "No Finding",       "Pleural Effusion",
    "Pleural Other",    "Pneumonia",
    "Pneumothorax",     "Support Devices",
};

constexpr std::size_t index_of(Finding f) noexcept { return static_cast<std::size_t>(f); }

constexpr std::string_view to_string(Finding f) noexcept { return kFindingNames[index_of(f)]; }

constexpr std::string_view display_name(Finding f) noexcept {
    return kFindingDisplayNames[index_of(f)];
}

inline std::optional<Finding> finding_from_string(std::string_view name) noexcept {
    for (std::size_t i = 0; i < kFindingCount; ++i)
        if (kFindingNames[i] == name) return kAllFindings[i];
    return std::nullopt;
}

/// no_finding is derived from the other labels rather than detected.
constexpr bool is_meta(Finding f) noexcept { return f == Finding::no_finding; }

/// support_devices is reported but is not a pathology.
constexpr bool is_non_pathology(Finding f) noexcept { return f == Finding::support_devices; }

enum class FindingLabel { NotMentioned, Negative, Uncertain, Positive };

/// Aggregation precedence: Positive > Uncertain > Negative > NotMentioned.
constexpr int precedence(FindingLabel l) noexcept {
    switch (l) {
    case FindingLabel::Positive: return 3;
    case FindingLabel::Uncertain: return 2;
    case FindingLabel::Negative: return 1;
    case FindingLabel::NotMentioned: return 0;
    }
    return 0;
}

constexpr FindingLabel stronger(FindingLabel a, FindingLabel b) noexcept {
    return precedence(a) >= precedence(b) ? a : b;
}

constexpr bool is_definite(FindingLabel l) noexcept {
    return l == FindingLabel::Positive || l == FindingLabel::Negative;
}

constexpr std::string_view to_string(FindingLabel l) noexcept {
    switch (l) {
    case FindingLabel::Positive: return "positive";
    case FindingLabel::Negative: return "negative";
    case FindingLabel::Uncertain: return "uncertain";
    case FindingLabel::NotMentioned: return "not_mentioned";
    }
    return "not_mentioned";
}

/// Total map Finding -> FindingLabel, indexed by `index_of`.
class LabelMap {
public:
    LabelMap() { values_.fill(FindingLabel::NotMentioned); }

    FindingLabel operator[](Finding f) const noexcept { return values_[index_of(f)]; }
    FindingLabel& operator[](Finding f) noexcept { return values_[index_of(f)]; }

    auto begin() const noexcept { return values_.begin(); }
    auto end() const noexcept { return values_.end(); }

    bool operator==(const LabelMap&) const = default;

private:
    std::array<FindingLabel, kFindingCount> values_;
};

} // namespace cxreval
