// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "corpus.hpp"
#include "error.hpp"
#include "finding.hpp"
#include "labeler.hpp"
#include "lexicon.hpp"
#include "parallel.hpp"
#include "random.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace cxreval {

// ---------------------------------------------------------------------------
// Label selection

struct ExclusionConfig {
    // nullopt disables the fraction rule.
    std::optional<double> min_class_fraction = 0.05;
    int min_class_count = 10;
    std::set<Finding> name_excluded = {Finding::enlarged_cardiomediastinum, Finding::no_finding};
    // When false, NotMentioned counts as Negative instead of being skipped.
    bool treat_not_mentioned_as_uncertain = true;

    bool operator==(const ExclusionConfig&) const = default;
};

inline void validate(const ExclusionConfig& c) {
    if (c.min_class_fraction && !(*c.min_class_fraction >= 0.0 && *c.min_class_fraction < 1.0))
        throw Error(ErrorKind::InvalidConfig, "min_class_fraction must be in [0, 1)");
    if (c.min_class_count < 0) throw Error(ErrorKind::InvalidConfig, "min_class_count must be >= 0");
}

inline const std::vector<std::string>& exclusion_preset_names() {
    static const std::vector<std::string> names = {"mimic-chexpert", "indiana"};
    return names;
}

/// "mimic-chexpert": count and 5% fraction rules. "indiana": count rule only.
inline ExclusionConfig exclusion_preset(std::string_view name) {
    ExclusionConfig c;
    if (name == "mimic-chexpert") return c;
    if (name == "indiana") {
        c.min_class_fraction.reset();
        return c;
    }
    std::string valid;
    for (const auto& n : exclusion_preset_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw Error(ErrorKind::InvalidConfig,
                "unknown preset '" + std::string(name) + "' (valid: " + valid + ")");
}

struct ClassCounts {
    std::size_t negative = 0;
    std::size_t positive = 0;

    bool operator==(const ClassCounts&) const = default;
};

using Distribution = std::array<ClassCounts, kFindingCount>;

struct LabelSelection {
    std::vector<Finding> included;  // in Finding order
    std::vector<std::pair<Finding, std::string>> excluded;
    Distribution distribution{};
};

/// Applies the exclusion rules to a per-finding (negative, positive) table.
inline LabelSelection select_from_distribution(const Distribution& dist,
                                               const ExclusionConfig& config) {
    validate(config);
    LabelSelection sel;
    sel.distribution = dist;
    for (auto f : kAllFindings) {
        const auto& d = dist[index_of(f)];
        const auto minority = std::min(d.negative, d.positive);
        const auto total = d.negative + d.positive;
        std::vector<std::string> reasons;
        if (config.name_excluded.count(f)) reasons.push_back("excluded by name");
        if (minority < static_cast<std::size_t>(config.min_class_count))
            reasons.push_back("minority class count " + std::to_string(minority) + " < " +
                              std::to_string(config.min_class_count));
        if (config.min_class_fraction &&
            (total == 0 ||
             static_cast<double>(minority) / static_cast<double>(total) < *config.min_class_fraction)) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "minority class fraction %.4f < %.4f",
                          total ? static_cast<double>(minority) / static_cast<double>(total) : 0.0,
                          *config.min_class_fraction);
            reasons.emplace_back(buf);
        }
        if (reasons.empty()) {
            sel.included.push_back(f);
        } else {
            std::string joined;
            for (const auto& r : reasons) joined += (joined.empty() ? "" : "; ") + r;
            sel.excluded.emplace_back(f, std::move(joined));
        }
    }
    return sel;
}

namespace detail {
inline FindingLabel effective(FindingLabel l, const ExclusionConfig& c) {
    if (l == FindingLabel::NotMentioned)
        return c.treat_not_mentioned_as_uncertain ? FindingLabel::Uncertain : FindingLabel::Negative;
    return l;
}
} // namespace detail

/// Counts definite ground-truth labels per finding and applies the rules.
inline LabelSelection select_labels(std::span<const LabelMap> gt, const ExclusionConfig& config) {
    if (gt.empty()) throw Error(ErrorKind::EmptyInput, "no ground-truth label vectors");
    Distribution dist{};
    for (const auto& v : gt) {
        for (auto f : kAllFindings) {
            auto l = detail::effective(v[f], config);
            if (l == FindingLabel::Positive) ++dist[index_of(f)].positive;
            if (l == FindingLabel::Negative) ++dist[index_of(f)].negative;
        }
    }
    return select_from_distribution(dist, config);
}

// ---------------------------------------------------------------------------
// Confusion counts and F1

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::size_t n_pairs_used = 0;
    std::size_t n_pairs_skipped = 0;

    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        n_pairs_used += o.n_pairs_used;
        n_pairs_skipped += o.n_pairs_skipped;
        return *this;
    }
    bool operator==(const ConfusionCounts&) const = default;
};

enum class PairOutcome : std::uint8_t { Skipped, TP, FP, FN, TN };

/// A pair counts only when both sides are definite.
inline PairOutcome classify_pair(FindingLabel gt, FindingLabel pred, const ExclusionConfig& config) {
    gt = detail::effective(gt, config);
    pred = detail::effective(pred, config);
    if (!is_definite(gt) || !is_definite(pred)) return PairOutcome::Skipped;
    const bool g = gt == FindingLabel::Positive;
    const bool p = pred == FindingLabel::Positive;
    if (g && p) return PairOutcome::TP;
    if (!g && p) return PairOutcome::FP;
    if (g && !p) return PairOutcome::FN;
    return PairOutcome::TN;
}

inline void add_outcome(ConfusionCounts& c, PairOutcome o) {
    switch (o) {
    case PairOutcome::Skipped: ++c.n_pairs_skipped; return;
    case PairOutcome::TP: ++c.tp; break;
    case PairOutcome::FP: ++c.fp; break;
    case PairOutcome::FN: ++c.fn; break;
    case PairOutcome::TN: ++c.tn; break;
    }
    ++c.n_pairs_used;
}

inline ConfusionCounts confusion_from_pairs(std::span<const LabelMap> gt,
                                            std::span<const LabelMap> pred, Finding finding,
                                            const ExclusionConfig& config) {
    if (gt.size() != pred.size())
        throw Error(ErrorKind::LengthMismatch, "ground truth has " + std::to_string(gt.size()) +
                                                   " vectors, predictions " +
                                                   std::to_string(pred.size()));
    ConfusionCounts c;
    for (std::size_t i = 0; i < gt.size(); ++i)
        add_outcome(c, classify_pair(gt[i][finding], pred[i][finding], config));
    return c;
}

/// Precision, recall and F1; nullopt marks an undefined value.
struct Prf1 {
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
};

inline Prf1 prf1(const ConfusionCounts& c) {
    Prf1 r;
    if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    // 2PR/(P+R) written over counts; it is 0 rather than 0/0 when tp == 0.
    if (c.tp + c.fp + c.fn > 0)
        r.f1 = 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
    return r;
}

enum class AverageMode { macro, micro };

inline std::string_view to_string(AverageMode m) { return m == AverageMode::macro ? "macro" : "micro"; }

/// Macro: unweighted mean of defined per-label F1. Micro: F1 of pooled counts.
inline double average_f1(std::span<const ConfusionCounts> per_label, AverageMode mode) {
    if (mode == AverageMode::macro) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& c : per_label) {
            if (auto f = prf1(c).f1) {
                sum += *f;
                ++n;
            }
        }
        if (n == 0) throw Error(ErrorKind::NothingToAverage, "no label has a defined F1");
        return sum / static_cast<double>(n);
    }
    ConfusionCounts pooled;
    for (const auto& c : per_label) pooled += c;
    auto f = prf1(pooled).f1;
    if (!f) throw Error(ErrorKind::NothingToAverage, "pooled tp + fp + fn is zero");
    return *f;
}

inline std::optional<double> try_average_f1(std::span<const ConfusionCounts> per_label,
                                            AverageMode mode) {
    try {
        return average_f1(per_label, mode);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::NothingToAverage) return std::nullopt;
        throw;
    }
}

// ---------------------------------------------------------------------------
// Bootstrap

/// Either one finding's F1 or an average over the included findings.
using BootstrapTarget = std::variant<Finding, AverageMode>;

struct BootstrapOptions {
    int iterations = 1000;
    std::uint64_t seed = 0;
    double level = 0.95;
    unsigned threads = 1;
};

struct ConfidenceInterval {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t n_defined = 0;
    std::size_t n_undefined = 0;

    bool operator==(const ConfidenceInterval&) const = default;
};

/// Nearest-rank percentile of an ascending sample: the value at rank
/// ceil(p * n), 1-based.
inline double nearest_rank(std::span<const double> sorted, double p) {
    const auto n = sorted.size();
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return sorted[rank - 1];
}

/// Pair outcomes per report for a set of findings, in report order. This is
/// all the bootstrap needs to recompute any statistic on a resample.
class OutcomeTable {
public:
    OutcomeTable(std::span<const LabelMap> gt, std::span<const LabelMap> pred,
                 std::vector<Finding> findings, const ExclusionConfig& config)
        : findings_(std::move(findings)), reports_(gt.size()) {
        if (gt.size() != pred.size())
            throw Error(ErrorKind::LengthMismatch, "ground truth and predictions differ in length");
        cells_.resize(reports_ * findings_.size());
        for (std::size_t r = 0; r < reports_; ++r)
            for (std::size_t j = 0; j < findings_.size(); ++j)
                cells_[r * findings_.size() + j] =
                    classify_pair(gt[r][findings_[j]], pred[r][findings_[j]], config);
    }

    std::size_t reports() const noexcept { return reports_; }
    const std::vector<Finding>& findings() const noexcept { return findings_; }

    /// Counts per finding when report r is drawn weight[r] times.
    std::vector<ConfusionCounts> counts(std::span<const std::uint32_t> weight) const {
        std::vector<ConfusionCounts> out(findings_.size());
        for (std::size_t r = 0; r < reports_; ++r) {
            if (weight[r] == 0) continue;
            for (std::size_t j = 0; j < findings_.size(); ++j) {
                ConfusionCounts one;
                add_outcome(one, cells_[r * findings_.size() + j]);
                for (std::uint32_t w = 0; w < weight[r]; ++w) out[j] += one;
            }
        }
        return out;
    }

    std::optional<double> statistic(std::span<const std::uint32_t> weight,
                                    const BootstrapTarget& target) const {
        auto c = counts(weight);
        if (const auto* f = std::get_if<Finding>(&target)) {
            auto it = std::find(findings_.begin(), findings_.end(), *f);
            if (it == findings_.end())
                throw Error(ErrorKind::InvalidConfig,
                            "finding '" + std::string(to_string(*f)) + "' not in table");
            return prf1(c[static_cast<std::size_t>(it - findings_.begin())]).f1;
        }
        return try_average_f1(c, std::get<AverageMode>(target));
    }

    std::optional<double> point_estimate(const BootstrapTarget& target) const {
        std::vector<std::uint32_t> ones(reports_, 1);
        return statistic(ones, target);
    }

private:
    std::vector<Finding> findings_;
    std::size_t reports_;
    std::vector<PairOutcome> cells_;
};

/// Percentile bootstrap CI over report resamples. Iteration i draws its n
/// indices from derive_stream(seed, i), so the result does not depend on the
/// thread count. Resamples with an undefined statistic are skipped.
inline ConfidenceInterval bootstrap_ci(const OutcomeTable& table, const BootstrapTarget& target,
                                       const BootstrapOptions& opt) {
    if (opt.iterations < 1) throw Error(ErrorKind::InvalidConfig, "iterations must be >= 1");
    if (!(opt.level > 0.0 && opt.level < 1.0))
        throw Error(ErrorKind::InvalidConfig, "level must be in (0, 1)");
    const std::size_t n = table.reports();
    if (n == 0) throw Error(ErrorKind::EmptyInput, "no reports to resample");

    std::vector<std::optional<double>> values(static_cast<std::size_t>(opt.iterations));
    parallel_for(values.size(), opt.threads, [&](std::size_t it) {
        auto rng = derive_stream(opt.seed, it);
        std::vector<std::uint32_t> weight(n, 0);
        for (std::size_t k = 0; k < n; ++k) ++weight[uniform_index(rng, n)];
        values[it] = table.statistic(weight, target);
    });

    std::vector<double> defined;
    defined.reserve(values.size());
    for (const auto& v : values)
        if (v) defined.push_back(*v);
    if (defined.empty())
        throw Error(ErrorKind::AllResamplesUndefined, "statistic undefined on every resample");
    std::sort(defined.begin(), defined.end());

    const double tail = (1.0 - opt.level) / 2.0;
    ConfidenceInterval ci;
    ci.lo = nearest_rank(defined, tail);
    ci.hi = nearest_rank(defined, 1.0 - tail);
    ci.n_defined = defined.size();
    ci.n_undefined = values.size() - defined.size();
    return ci;
}

inline ConfidenceInterval bootstrap_ci(std::span<const LabelMap> gt, std::span<const LabelMap> pred,
                                       const BootstrapTarget& target,
                                       std::vector<Finding> findings,
                                       const ExclusionConfig& config,
                                       const BootstrapOptions& opt) {
    return bootstrap_ci(OutcomeTable(gt, pred, std::move(findings), config), target, opt);
}

// ---------------------------------------------------------------------------
// Full evaluation

struct LabelMetrics {
    Finding finding = Finding::no_finding;
    ConfusionCounts counts;
    Prf1 scores;
    std::optional<ConfidenceInterval> ci;
};

struct AverageMetrics {
    std::optional<double> f1;
    std::optional<ConfidenceInterval> ci;
};

struct MetricsReport {
    std::vector<LabelMetrics> per_label;
    AverageMetrics macro;
    AverageMetrics micro;
    std::vector<std::pair<Finding, std::string>> excluded;
    Distribution distribution{};
    ExclusionConfig config;
    BootstrapOptions bootstrap;
    std::size_t n_reports = 0;
};

struct EvalOptions {
    BootstrapOptions bootstrap;
    // Set to false to skip bootstrap CIs entirely.
    bool with_ci = true;
};

/// Metrics for already-aligned label vectors.
inline MetricsReport evaluate_labels(std::span<const LabelMap> gt, std::span<const LabelMap> pred,
                                     const ExclusionConfig& config, const EvalOptions& opt = {}) {
    if (gt.size() != pred.size())
        throw Error(ErrorKind::LengthMismatch, "ground truth and predictions differ in length");
    MetricsReport report;
    report.config = config;
    report.bootstrap = opt.bootstrap;
    report.n_reports = gt.size();

    auto selection = select_labels(gt, config);
    report.distribution = selection.distribution;
    report.excluded = selection.excluded;

    std::vector<Finding> included;
    for (auto f : selection.included) {
        auto counts = confusion_from_pairs(gt, pred, f, config);
        if (counts.n_pairs_used == 0) {
            report.excluded.emplace_back(f, "no pair with definite labels on both sides");
            continue;
        }
        included.push_back(f);
        report.per_label.push_back({f, counts, prf1(counts), std::nullopt});
    }
    std::sort(report.excluded.begin(), report.excluded.end(),
              [](const auto& a, const auto& b) { return index_of(a.first) < index_of(b.first); });

    std::vector<ConfusionCounts> all_counts;
    for (const auto& m : report.per_label) all_counts.push_back(m.counts);
    report.macro.f1 = try_average_f1(all_counts, AverageMode::macro);
    report.micro.f1 = try_average_f1(all_counts, AverageMode::micro);

    if (opt.with_ci && !included.empty()) {
        OutcomeTable table(gt, pred, included, config);
        auto safe_ci = [&](const BootstrapTarget& t) -> std::optional<ConfidenceInterval> {
            try {
                return bootstrap_ci(table, t, opt.bootstrap);
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::AllResamplesUndefined) return std::nullopt;
                throw;
            }
        };
        for (auto& m : report.per_label)
            if (m.scores.f1) m.ci = safe_ci(m.finding);
        if (report.macro.f1) report.macro.ci = safe_ci(AverageMode::macro);
        if (report.micro.f1) report.micro.ci = safe_ci(AverageMode::micro);
    }
    return report;
}

/// Labels of a record: its binary labels when present, otherwise the labeler
/// run over its text.
inline LabelMap record_labels(const ReportRecord& rec, const Lexicon& lex) {
    if (rec.binary_labels) return *rec.binary_labels;
    if (trim(rec.text).empty())
        throw Error(ErrorKind::MissingField, "record '" + rec.id + "' has neither text nor labels");
    return label_text(rec.text, lex).labels;
}

inline std::vector<LabelMap> label_corpus(const Corpus& corpus, const Lexicon& lex,
                                          unsigned threads = 1) {
    std::vector<LabelMap> out(corpus.records.size());
    parallel_for(out.size(), threads, [&](std::size_t i) {
        try {
            out[i] = record_labels(corpus.records[i], lex);
        } catch (const Error& e) {
            throw Error(e.kind(), "record '" + corpus.records[i].id + "': " + e.what(),
                        {corpus.source_path});
        }
    });
    return out;
}

/// Aligns predictions to ground truth by id (prediction order), labels both
/// sides and computes the metrics.
inline MetricsReport evaluate(const Corpus& gt, const Corpus& pred, const Lexicon& lex,
                              const ExclusionConfig& config, const EvalOptions& opt = {}) {
    std::unordered_map<std::string, std::size_t> gt_index;
    for (std::size_t i = 0; i < gt.records.size(); ++i) gt_index.emplace(gt.records[i].id, i);

    Corpus aligned_gt;
    aligned_gt.source_path = gt.source_path;
    for (const auto& rec : pred.records) {
        auto it = gt_index.find(rec.id);
        if (it == gt_index.end())
            throw Error(ErrorKind::AlignmentError,
                        "prediction id '" + rec.id + "' has no ground-truth record",
                        {pred.source_path});
        aligned_gt.records.push_back(gt.records[it->second]);
    }
    if (pred.records.empty()) throw Error(ErrorKind::EmptyInput, "prediction corpus is empty");

    auto gt_labels = label_corpus(aligned_gt, lex, opt.bootstrap.threads);
    auto pred_labels = label_corpus(pred, lex, opt.bootstrap.threads);
    return evaluate_labels(gt_labels, pred_labels, config, opt);
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json to_json(const ConfusionCounts& c) {
    return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn},
            {"n_pairs_used", c.n_pairs_used}, {"n_pairs_skipped", c.n_pairs_skipped}};
}

inline nlohmann::json to_json(const std::optional<ConfidenceInterval>& ci) {
    if (!ci) return nullptr;
    return {{"lo", ci->lo}, {"hi", ci->hi}, {"n_defined", ci->n_defined},
            {"n_undefined", ci->n_undefined}};
}

inline nlohmann::json to_json(const ExclusionConfig& c) {
    nlohmann::json names = nlohmann::json::array();
    for (auto f : c.name_excluded) names.push_back(std::string(to_string(f)));
    return {{"min_class_fraction", optional_json(c.min_class_fraction)},
            {"min_class_count", c.min_class_count},
            {"name_excluded", names},
            {"treat_not_mentioned_as_uncertain", c.treat_not_mentioned_as_uncertain}};
}

inline nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json j;
    nlohmann::json per_label = nlohmann::json::object();
    for (const auto& m : r.per_label) {
        per_label[std::string(to_string(m.finding))] = {
            {"counts", to_json(m.counts)},
            {"precision", optional_json(m.scores.precision)},
            {"recall", optional_json(m.scores.recall)},
            {"f1", optional_json(m.scores.f1)},
            {"ci", to_json(m.ci)},
        };
    }
    j["per_label"] = per_label;
    j["macro_f1"] = optional_json(r.macro.f1);
    j["macro_f1_ci"] = to_json(r.macro.ci);
    j["micro_f1"] = optional_json(r.micro.f1);
    j["micro_f1_ci"] = to_json(r.micro.ci);
    nlohmann::json excluded = nlohmann::json::array();
    for (const auto& [f, why] : r.excluded)
        excluded.push_back({{"finding", std::string(to_string(f))}, {"reason", why}});
    j["excluded"] = excluded;
    nlohmann::json dist = nlohmann::json::object();
    for (auto f : kAllFindings)
        dist[std::string(to_string(f))] = {{"negative", r.distribution[index_of(f)].negative},
                                           {"positive", r.distribution[index_of(f)].positive}};
    j["distribution"] = dist;
    j["config"] = to_json(r.config);
    j["seed"] = r.bootstrap.seed;
    j["iterations"] = r.bootstrap.iterations;
    j["level"] = r.bootstrap.level;
    j["n_reports"] = r.n_reports;
    return j;
}

inline std::string format_f1_cell(const std::optional<double>& f1,
                                  const std::optional<ConfidenceInterval>& ci) {
    if (!f1) return "undefined";
    char buf[64];
    if (ci)
        std::snprintf(buf, sizeof buf, "%.2f (%.2f, %.2f)", *f1, ci->lo, ci->hi);
    else
        std::snprintf(buf, sizeof buf, "%.2f", *f1);
    return buf;
}

/// Markdown table in the "F1 (lo, hi)" layout, micro average as the headline.
inline std::string to_markdown(const MetricsReport& r) {
    std::string out;
    char pct[16];
    std::snprintf(pct, sizeof pct, "%g", r.bootstrap.level * 100.0);
    out += "| Label | F1 (" + std::string(pct) + "% CI) | Precision | Recall | Pairs used |\n";
    out += "|---|---|---|---|---|\n";
    auto fmt = [](const std::optional<double>& v) {
        if (!v) return std::string("undefined");
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", *v);
        return std::string(buf);
    };
    for (const auto& m : r.per_label) {
        out += "| " + std::string(display_name(m.finding)) + " | " +
               format_f1_cell(m.scores.f1, m.ci) + " | " + fmt(m.scores.precision) + " | " +
               fmt(m.scores.recall) + " | " + std::to_string(m.counts.n_pairs_used) + " |\n";
    }
    out += "| Average (micro) | " + format_f1_cell(r.micro.f1, r.micro.ci) + " | | | |\n";
    out += "| Average (macro) | " + format_f1_cell(r.macro.f1, r.macro.ci) + " | | | |\n";
    if (!r.excluded.empty()) {
        out += "\nExcluded labels:\n\n";
        for (const auto& [f, why] : r.excluded)
            out += "- " + std::string(display_name(f)) + ": " + why + "\n";
    }
    return out;
}

} // namespace cxreval
