// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "error.hpp"
#include "text.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace cxreval {

enum class SectionName { findings, impression, other };

inline std::string_view to_string(SectionName s) noexcept {
    switch (s) {
    case SectionName::findings: return "findings";
    case SectionName::impression: return "impression";
    case SectionName::other: return "other";
    }
    return "other";
}

/// A sentence and its [begin, end) character span in the raw report text.
/// After refinement `text` may differ from the raw span.
struct Sentence {
    std::string text;
    std::size_t begin = 0;
    std::size_t end = 0;

    bool operator==(const Sentence&) const = default;
};

struct Section {
    SectionName name = SectionName::findings;
    // Span of the section body (after the header colon) in the raw text.
    std::size_t begin = 0;
    std::size_t end = 0;
    std::vector<Sentence> sentences;

    bool operator==(const Section&) const = default;
};

struct StructuredReport {
    std::string id;
    std::string raw;
    std::vector<Section> sections;

    std::size_t sentence_count() const noexcept {
        std::size_t n = 0;
        for (const auto& s : sections) n += s.sentences.size();
        return n;
    }

    bool operator==(const StructuredReport&) const = default;
};

/// Splits at '.', '!' or '?' followed by whitespace or end of text, and at
/// blank lines. A period closing a bare leading integer ("1.") is an
/// enumerator and stays attached to its sentence. Offsets are shifted by
/// `base` so they index the enclosing report.
inline std::vector<Sentence> segment_sentences(std::string_view text, std::size_t base = 0) {
    std::vector<Sentence> out;
    std::size_t i = 0;
    const std::size_t n = text.size();

    auto emit = [&](std::size_t b, std::size_t e) {
        while (b < e && is_space(text[b])) ++b;
        while (e > b && is_space(text[e - 1])) --e;
        if (b < e) out.push_back({std::string(text.substr(b, e - b)), base + b, base + e});
    };

    while (i < n) {
        while (i < n && is_space(text[i])) ++i;
        if (i >= n) break;
        const std::size_t start = i;
        std::size_t stop = n;
        for (; i < n; ++i) {
            char c = text[i];
            if (c == '\n') {
                std::size_t j = i + 1;
                while (j < n && (text[j] == ' ' || text[j] == '\t' || text[j] == '\r')) ++j;
                if (j < n && text[j] == '\n') {
                    stop = i;
                    break;
                }
                continue;
            }
            if (c != '.' && c != '!' && c != '?') continue;
            if (i + 1 < n && !is_space(text[i + 1])) continue;
            if (c == '.') {
                auto head = text.substr(start, i - start);
                if (!head.empty() && std::all_of(head.begin(), head.end(), [](char ch) {
                        return std::isdigit(static_cast<unsigned char>(ch)) != 0;
                    }))
                    continue;
            }
            stop = i + 1;
            break;
        }
        emit(start, stop);
        i = stop;
    }
    return out;
}

namespace detail {

struct HeaderHit {
    std::size_t start;      // header word start
    std::size_t body_start; // one past the colon
    SectionName name;
};

inline std::vector<HeaderHit> find_headers(std::string_view text) {
    static constexpr std::pair<std::string_view, SectionName> kHeaders[] = {
        {"findings", SectionName::findings},
        {"impression", SectionName::impression},
    };
    std::vector<HeaderHit> hits;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (i > 0 && is_word_char(text[i - 1])) continue;
        for (const auto& [word, name] : kHeaders) {
            if (i + word.size() > text.size()) continue;
            bool match = true;
            for (std::size_t k = 0; k < word.size() && match; ++k)
                match = std::tolower(static_cast<unsigned char>(text[i + k])) == word[k];
            if (!match) continue;
            std::size_t j = i + word.size();
            while (j < text.size() && (text[j] == ' ' || text[j] == '\t')) ++j;
            if (j < text.size() && text[j] == ':') {
                hits.push_back({i, j + 1, name});
                i = j;
                break;
            }
        }
    }
    return hits;
}

} // namespace detail

/// Splits a report at "Findings:" / "Impression:" headers (case-insensitive,
/// spaces allowed before the colon). Text before the first header becomes an
/// `other` section; a report without headers is one `findings` section.
inline StructuredReport extract_sections(std::string_view text, std::string id = {}) {
    if (trim(text).empty()) throw Error(ErrorKind::EmptyReport, "report text is empty");

    StructuredReport report;
    report.id = std::move(id);
    report.raw = std::string(text);

    auto make = [&](SectionName name, std::size_t b, std::size_t e) {
        Section s;
        s.name = name;
        s.begin = b;
        s.end = e;
        s.sentences = segment_sentences(text.substr(b, e - b), b);
        report.sections.push_back(std::move(s));
    };

    auto headers = detail::find_headers(text);
    if (headers.empty()) {
        make(SectionName::findings, 0, text.size());
        return report;
    }
    if (!trim(text.substr(0, headers.front().start)).empty())
        make(SectionName::other, 0, headers.front().start);
    for (std::size_t h = 0; h < headers.size(); ++h) {
        std::size_t end = h + 1 < headers.size() ? headers[h + 1].start : text.size();
        make(headers[h].name, headers[h].body_start, end);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Rule-based refinement

struct RefinementRules {
    std::vector<std::string> forbidden_temporal_words = {
        "new",     "previous", "comparison", "stable",  "improved",  "improving",
        "decreased", "increased", "changed",  "unchanged", "resolved", "cleared",
    };
    // Phrase rules checked alongside the temporal words.
    std::vector<std::string> forbidden_phrases = {"comparison with prior study", "prior study"};
    std::vector<std::string> device_terms = {
        "catheter", "chest tube", "endotracheal tube", "PICC",
        "chemoport", "central line", "nasogastric tube",
    };
    bool delete_measurements = true;
    bool drop_lateral = true;
    bool strip_underbars = true;
};

struct AuditEntry {
    std::string sentence;
    std::string rule;
    // For measurement edits, the deleted text.
    std::string removed;

    bool operator==(const AuditEntry&) const = default;
};

struct RefinementResult {
    StructuredReport report;
    std::vector<AuditEntry> dropped;
    std::vector<AuditEntry> edited;
};

namespace detail {

/// Whole-word match that also accepts a plural of the final word.
inline bool contains_term(std::string_view text, std::string_view term) {
    if (contains_phrase(text, term)) return true;
    std::string plural(term);
    if (contains_phrase(text, plural + "s")) return true;
    return contains_phrase(text, plural + "es");
}

inline const std::regex& measurement_regex() {
    static const std::regex re(
        R"((\b(measuring|measures|measured)\s+)?(\b(approximately|about)\s+)?)"
        R"(\b\d+(\.\d+)?(\s*(x|by)\s*\d+(\.\d+)?)*\s*(mm|cm|millimeters?|centimeters?)\b)",
        std::regex::ECMAScript | std::regex::icase);
    return re;
}

} // namespace detail

/// Deletes numeric measurement runs such as "measuring approximately 7 mm"
/// or "2.5 x 3 cm" until none remain. Returns the deleted fragments.
inline std::vector<std::string> delete_measurements(std::string& sentence) {
    std::vector<std::string> removed;
    for (;;) {
        std::smatch m;
        if (!std::regex_search(sentence, m, detail::measurement_regex())) break;
        removed.push_back(m.str());
        sentence = collapse_whitespace(std::string(m.prefix()) + " " + std::string(m.suffix()));
    }
    return removed;
}

/// First rule that would drop `sentence`, or an empty string.
inline std::string drop_rule_for(std::string_view sentence, const RefinementRules& rules) {
    for (const auto& w : rules.forbidden_temporal_words)
        if (contains_phrase(sentence, w)) return "temporal:" + w;
    for (const auto& p : rules.forbidden_phrases)
        if (contains_phrase(sentence, p)) return "prior_study:" + p;
    for (const auto& d : rules.device_terms)
        if (detail::contains_term(sentence, d)) return "device:" + to_lower(d);
    if (rules.drop_lateral && contains_phrase(sentence, "lateral")) return "lateral";
    return {};
}

/// Deterministic report cleanup: sentences with temporal wording, prior-study
/// references, device terms or lateral-view references are dropped whole;
/// measurement runs are deleted from the rest. Section structure is kept.
inline RefinementResult refine_rule_based(const StructuredReport& report,
                                          const RefinementRules& rules = {}) {
    RefinementResult result;
    result.report.id = report.id;
    result.report.raw = report.raw;
    for (const auto& section : report.sections) {
        Section out = section;
        out.sentences.clear();
        for (const auto& sentence : section.sentences) {
            std::string text = sentence.text;
            if (rules.strip_underbars) std::replace(text.begin(), text.end(), '_', ' ');
            text = collapse_whitespace(text);
            if (rules.delete_measurements) {
                for (auto& frag : delete_measurements(text))
                    result.edited.push_back({sentence.text, "measurement", std::move(frag)});
            }
            std::string rule = drop_rule_for(text, rules);
            if (rule.empty() &&
                std::none_of(text.begin(), text.end(), [](char c) { return is_word_char(c); }))
                rule = "empty";
            if (!rule.empty()) {
                result.dropped.push_back({sentence.text, std::move(rule), {}});
                continue;
            }
            out.sentences.push_back({std::move(text), sentence.begin, sentence.end});
        }
        result.report.sections.push_back(std::move(out));
    }
    return result;
}

/// Rebuilds a plain report from structured sections, with "Findings:" /
/// "Impression:" headers when the report has more than one section.
inline std::string render_report(const StructuredReport& report) {
    std::string out;
    const bool headers = report.sections.size() > 1;
    for (const auto& section : report.sections) {
        std::string body;
        for (const auto& s : section.sentences) {
            if (!body.empty()) body += ' ';
            body += s.text;
        }
        if (body.empty()) continue;
        if (!out.empty()) out += '\n';
        if (headers && section.name == SectionName::findings) out += "Findings: ";
        if (headers && section.name == SectionName::impression) out += "Impression: ";
        out += body;
    }
    return out;
}

} // namespace cxreval
