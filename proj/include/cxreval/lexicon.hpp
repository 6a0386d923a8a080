// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "error.hpp"
#include "finding.hpp"
#include "text.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace cxreval {

/// Mention phrases per finding plus the global negation and uncertainty cue
/// lists. All entries are lowercase.
struct Lexicon {
    std::array<std::vector<std::string>, kFindingCount> phrases;
    std::vector<std::string> pre_negation;
    std::vector<std::string> post_negation;
    std::vector<std::string> uncertainty;
    int negation_window = 6;

    const std::vector<std::string>& phrases_for(Finding f) const { return phrases[index_of(f)]; }
    std::vector<std::string>& phrases_for(Finding f) { return phrases[index_of(f)]; }

    bool operator==(const Lexicon&) const = default;
};

/// Throws InvalidLexicon when an invariant does not hold.
inline void validate(const Lexicon& lex) {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidLexicon, msg); };
    auto check_list = [&](const std::vector<std::string>& list, const std::string& what) {
        std::set<std::string> seen;
        for (const auto& p : list) {
            if (trim(p).empty()) fail(what + " contains an empty entry");
            if (to_lower(p) != p) fail(what + " entry '" + p + "' is not lowercase");
            if (phrase_words(p).empty()) fail(what + " entry '" + p + "' has no words");
            if (!seen.insert(p).second) fail(what + " repeats '" + p + "'");
        }
    };
    for (auto f : kAllFindings) {
        const auto& list = lex.phrases_for(f);
        if (!is_meta(f) && list.empty())
            fail("finding '" + std::string(to_string(f)) + "' has no phrases");
        check_list(list, "phrases for " + std::string(to_string(f)));
    }
    check_list(lex.pre_negation, "pre_negation");
    check_list(lex.post_negation, "post_negation");
    check_list(lex.uncertainty, "uncertainty");
    auto disjoint = [&](const std::vector<std::string>& a, const std::vector<std::string>& b,
                        const char* an, const char* bn) {
        for (const auto& x : a)
            if (std::find(b.begin(), b.end(), x) != b.end())
                fail(std::string("cue '") + x + "' appears in both " + an + " and " + bn);
    };
    disjoint(lex.pre_negation, lex.post_negation, "pre_negation", "post_negation");
    disjoint(lex.pre_negation, lex.uncertainty, "pre_negation", "uncertainty");
    disjoint(lex.post_negation, lex.uncertainty, "post_negation", "uncertainty");
    if (lex.negation_window < 1) fail("negation_window must be >= 1");
}

inline Lexicon default_lexicon() {
    Lexicon lex;
    auto set = [&](Finding f, std::vector<std::string> p) { lex.phrases_for(f) = std::move(p); };

    set(Finding::atelectasis,
        {"atelectasis", "atelectases", "atelectatic", "collapse", "volume loss"});
    set(Finding::cardiomegaly,
        {"cardiomegaly", "enlarged heart", "cardiac enlargement", "heart size is enlarged",
         "heart enlargement", "heart is enlarged", "heart size", "cardiac silhouette",
         "enlarged cardiac silhouette", "cardiac contour", "cardiac size"});
    set(Finding::consolidation, {"consolidation", "consolidations", "consolidative"});
    set(Finding::edema,
        {"edema", "pulmonary edema", "interstitial edema", "vascular congestion",
         "pulmonary congestion", "fluid overload"});
    set(Finding::enlarged_cardiomediastinum,
        {"enlarged cardiomediastinum", "cardiomediastinal silhouette",
         "cardiomeastinal silhouette", "cardiomediastinal contour", "cardiomediastinal contours",
         "mediastinal silhouette", "mediastinal contour", "mediastinal contours",
         "mediastinal widening", "widened mediastinum", "widening of the mediastinum",
         "enlarged mediastinum", "mediastinal enlargement"});
    set(Finding::fracture, {"fracture", "fractures", "fractured"});
    set(Finding::lung_lesion,
        {"nodule", "nodules", "nodular", "mass", "masses", "lesion", "lesions", "metastases",
         "metastatic disease", "neoplasm", "tumor", "carcinoma", "granuloma", "granulomas"});
    set(Finding::lung_opacity,
        {"opacity", "opacities", "opacification", "airspace disease", "air space disease",
         "infiltrate", "infiltrates", "infiltration"});
    set(Finding::no_finding, {});
    set(Finding::pleural_effusion,
        {"pleural effusion", "pleural effusions", "effusion", "effusions", "pleural fluid"});
    set(Finding::pleural_other,
        {"pleural thickening", "pleural plaque", "pleural plaques", "pleural scarring",
         "pleural calcification", "fibrothorax"});
    set(Finding::pneumonia,
        {"pneumonia", "pneumonias", "infectious process", "infection", "bronchopneumonia"});
    set(Finding::pneumothorax, {"pneumothorax", "pneumothoraces", "hydropneumothorax"});
    set(Finding::support_devices,
        {"catheter", "catheters", "chest tube", "chest tubes", "endotracheal tube", "picc",
         "picc line", "chemoport", "central line", "central venous catheter",
         "nasogastric tube", "pacemaker", "sternotomy wires", "venous access device",
         "tracheostomy tube", "defibrillator", "port"});

    lex.pre_negation = {"no",          "no evidence of", "without",     "absence of",
                        "free of",     "negative for",   "clear of",    "rather than",
                        "no signs of", "no sign of",     "without evidence of"};
    lex.post_negation = {"is absent",        "are absent",          "not seen",
                         "is excluded",      "is normal",           "are normal",
                         "appears normal",   "appear normal",       "within normal limits",
                         "is unremarkable",  "are unremarkable",    "normal in size",
                         "is not enlarged",  "not enlarged",        "has resolved"};
    lex.uncertainty = {"may",          "might",         "possible",      "possibly",
                       "could",        "cannot exclude", "cannot be excluded",
                       "suspicious for", "suggestive of", "concerning for", "versus",
                       "question of",  "borderline",    "may represent", "likely",
                       "probable",     "questionable",  "cannot be ruled out",
                       "differential diagnosis", "concern for"};
    lex.negation_window = 6;
    return lex;
}

inline nlohmann::json to_json(const Lexicon& lex) {
    nlohmann::json j;
    nlohmann::json phrases = nlohmann::json::object();
    for (auto f : kAllFindings) phrases[std::string(to_string(f))] = lex.phrases_for(f);
    j["phrases"] = phrases;
    j["pre_negation"] = lex.pre_negation;
    j["post_negation"] = lex.post_negation;
    j["uncertainty"] = lex.uncertainty;
    j["negation_window"] = lex.negation_window;
    return j;
}

/// Builds a lexicon from its JSON form. Findings absent from `phrases` get no
/// phrases (and fail validation unless they are no_finding).
inline Lexicon lexicon_from_json(const nlohmann::json& j) {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidLexicon, msg); };
    if (!j.is_object()) fail("lexicon must be a JSON object");
    Lexicon lex;
    try {
        if (!j.contains("phrases") || !j["phrases"].is_object()) fail("missing 'phrases' object");
        for (const auto& [key, value] : j["phrases"].items()) {
            auto f = finding_from_string(key);
            if (!f) fail("unknown finding '" + key + "'");
            lex.phrases_for(*f) = value.get<std::vector<std::string>>();
        }
        for (const char* key : {"pre_negation", "post_negation", "uncertainty"})
            if (!j.contains(key)) fail(std::string("missing '") + key + "'");
        lex.pre_negation = j["pre_negation"].get<std::vector<std::string>>();
        lex.post_negation = j["post_negation"].get<std::vector<std::string>>();
        lex.uncertainty = j["uncertainty"].get<std::vector<std::string>>();
        lex.negation_window = j.value("negation_window", 6);
    } catch (const nlohmann::json::exception& e) {
        fail(e.what());
    }
    validate(lex);
    return lex;
}

inline Lexicon load_lexicon(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open lexicon", {path});
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::InvalidLexicon, e.what(), {path});
    }
    return lexicon_from_json(j);
}

} // namespace cxreval
