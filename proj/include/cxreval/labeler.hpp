// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "error.hpp"
#include "finding.hpp"
#include "lexicon.hpp"
#include "normalizer.hpp"
#include "text.hpp"

#include <algorithm>
#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cxreval {

struct Mention {
    Finding finding = Finding::no_finding;
    std::size_t sentence_index = 0;  // across all sections, in reading order
    std::size_t start = 0;           // token offsets into the sentence, [start, end)
    std::size_t end = 0;
    std::string matched_phrase;

    bool operator==(const Mention&) const = default;
};

struct ProvenanceEntry {
    Mention mention;
    FindingLabel polarity = FindingLabel::Positive;

    bool operator==(const ProvenanceEntry&) const = default;
};

struct LabelVector {
    LabelMap labels;
    std::array<std::vector<ProvenanceEntry>, kFindingCount> provenance;

    FindingLabel operator[](Finding f) const noexcept { return labels[f]; }
    const std::vector<ProvenanceEntry>& provenance_for(Finding f) const {
        return provenance[index_of(f)];
    }

    bool operator==(const LabelVector&) const = default;
};

/// no_finding is Positive iff no pathology (excluding support devices) is
/// Positive or Uncertain; otherwise NotMentioned.
inline void derive_no_finding(LabelMap& labels) {
    bool any = false;
    for (auto f : kAllFindings) {
        if (is_meta(f) || is_non_pathology(f)) continue;
        if (labels[f] == FindingLabel::Positive || labels[f] == FindingLabel::Uncertain) any = true;
    }
    labels[Finding::no_finding] = any ? FindingLabel::NotMentioned : FindingLabel::Positive;
}

inline LabelVector make_label_vector(const LabelMap& labels) {
    LabelVector v;
    v.labels = labels;
    return v;
}

namespace detail {

inline bool match_at(const std::vector<Token>& tokens, std::size_t pos,
                     const std::vector<std::string>& words) {
    if (pos + words.size() > tokens.size()) return false;
    for (std::size_t k = 0; k < words.size(); ++k) {
        const auto& t = tokens[pos + k];
        if (!t.is_word() || t.opaque || t.norm != words[k]) return false;
    }
    return true;
}

enum class CueKind { PreNegation, PostNegation, Uncertainty };

struct Cue {
    CueKind kind;
    std::size_t start;
    std::size_t end;
};

/// Longest-match-first, non-overlapping scan over all cue lists.
inline std::vector<Cue> find_cues(const std::vector<Token>& tokens, const Lexicon& lex) {
    struct Entry {
        std::vector<std::string> words;
        CueKind kind;
    };
    std::vector<Entry> entries;
    for (const auto& c : lex.pre_negation) entries.push_back({phrase_words(c), CueKind::PreNegation});
    for (const auto& c : lex.post_negation) entries.push_back({phrase_words(c), CueKind::PostNegation});
    for (const auto& c : lex.uncertainty) entries.push_back({phrase_words(c), CueKind::Uncertainty});
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return a.words.size() > b.words.size();
    });

    std::vector<Cue> cues;
    for (std::size_t i = 0; i < tokens.size();) {
        const Entry* hit = nullptr;
        for (const auto& e : entries) {
            if (match_at(tokens, i, e.words)) {
                hit = &e;
                break;
            }
        }
        if (hit) {
            cues.push_back({hit->kind, i, i + hit->words.size()});
            i += hit->words.size();
        } else {
            ++i;
        }
    }
    return cues;
}

inline bool is_blocker(const Token& t) {
    return t.kind == TokenKind::Comma ||
           (t.is_word() && (t.norm == "but" || t.norm == "although" || t.norm == "however"));
}

/// Number of word tokens in [from, to) and whether a scope blocker lies there.
inline std::pair<std::size_t, bool> gap_between(const std::vector<Token>& tokens, std::size_t from,
                                                std::size_t to) {
    std::size_t words = 0;
    bool blocked = false;
    for (std::size_t i = from; i < to && i < tokens.size(); ++i) {
        if (tokens[i].is_word()) ++words;
        if (is_blocker(tokens[i])) blocked = true;
    }
    return {words, blocked};
}

} // namespace detail

/// Mentions within one tokenized sentence.
inline std::vector<Mention> detect_mentions_in_sentence(const std::vector<Token>& tokens,
                                                        std::size_t sentence_index,
                                                        const Lexicon& lex) {
    std::vector<Mention> out;
    for (auto f : kAllFindings) {
        if (is_meta(f)) continue;
        std::vector<Mention> found;
        for (const auto& phrase : lex.phrases_for(f)) {
            auto words = phrase_words(phrase);
            if (words.empty()) continue;
            for (std::size_t i = 0; i + words.size() <= tokens.size(); ++i)
                if (detail::match_at(tokens, i, words))
                    found.push_back({f, sentence_index, i, i + words.size(), phrase});
        }
        // Same-finding overlaps keep the longest (then earliest) match.
        std::stable_sort(found.begin(), found.end(), [](const Mention& a, const Mention& b) {
            if (a.end - a.start != b.end - b.start) return a.end - a.start > b.end - b.start;
            return a.start < b.start;
        });
        std::vector<Mention> kept;
        for (auto& m : found) {
            bool overlaps = std::any_of(kept.begin(), kept.end(), [&](const Mention& k) {
                return m.start < k.end && k.start < m.end;
            });
            if (!overlaps) kept.push_back(std::move(m));
        }
        out.insert(out.end(), std::make_move_iterator(kept.begin()),
                   std::make_move_iterator(kept.end()));
    }
    std::stable_sort(out.begin(), out.end(), [](const Mention& a, const Mention& b) {
        return a.start < b.start;
    });
    return out;
}

inline std::vector<std::vector<Token>> tokenize_sentences(const StructuredReport& report) {
    std::vector<std::vector<Token>> out;
    for (const auto& section : report.sections)
        for (const auto& s : section.sentences) out.push_back(tokenize(s.text));
    return out;
}

/// Case-insensitive whole-word phrase matches, ordered by (sentence, start).
inline std::vector<Mention> detect_mentions(const StructuredReport& report, const Lexicon& lex) {
    std::vector<Mention> out;
    auto sentences = tokenize_sentences(report);
    for (std::size_t s = 0; s < sentences.size(); ++s) {
        auto m = detect_mentions_in_sentence(sentences[s], s, lex);
        out.insert(out.end(), m.begin(), m.end());
    }
    return out;
}

/// Window-scoped polarity. Negation is checked first, so a mention governed
/// by both a negation and an uncertainty cue is Negative.
inline FindingLabel classify_mention(const Mention& mention, const std::vector<Token>& tokens,
                                     const Lexicon& lex) {
    const auto window = static_cast<std::size_t>(lex.negation_window);
    auto cues = detail::find_cues(tokens, lex);

    for (const auto& cue : cues) {
        if (cue.kind == detail::CueKind::PreNegation && cue.end <= mention.start) {
            auto [gap, blocked] = detail::gap_between(tokens, cue.end, mention.start);
            if (gap <= window && !blocked) return FindingLabel::Negative;
        }
        if (cue.kind == detail::CueKind::PostNegation && cue.start >= mention.end) {
            auto [gap, blocked] = detail::gap_between(tokens, mention.end, cue.start);
            if (gap <= window && !blocked) return FindingLabel::Negative;
        }
    }
    for (const auto& cue : cues) {
        if (cue.kind != detail::CueKind::Uncertainty) continue;
        if (cue.end <= mention.start) {
            if (detail::gap_between(tokens, cue.end, mention.start).first <= window)
                return FindingLabel::Uncertain;
        } else if (cue.start >= mention.end) {
            if (detail::gap_between(tokens, mention.end, cue.start).first <= window)
                return FindingLabel::Uncertain;
        }
    }
    return FindingLabel::Positive;
}

/// Labels all 14 findings. Throws EmptyReport when the report has no sentences.
inline LabelVector label_report(const StructuredReport& report, const Lexicon& lex) {
    auto sentences = tokenize_sentences(report);
    if (sentences.empty()) throw Error(ErrorKind::EmptyReport, "report has no sentences");

    LabelVector result;
    for (std::size_t s = 0; s < sentences.size(); ++s) {
        for (auto& m : detect_mentions_in_sentence(sentences[s], s, lex)) {
            auto polarity = classify_mention(m, sentences[s], lex);
            auto f = m.finding;
            result.labels[f] = stronger(result.labels[f], polarity);
            result.provenance[index_of(f)].push_back({std::move(m), polarity});
        }
    }
    derive_no_finding(result.labels);
    return result;
}

inline LabelVector label_text(std::string_view text, const Lexicon& lex) {
    return label_report(extract_sections(text), lex);
}

} // namespace cxreval
