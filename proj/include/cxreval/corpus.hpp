// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "error.hpp"
#include "finding.hpp"
#include "text.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cxreval {

inline constexpr const char* kCorpusSchemaVersion = "1";

struct ReportRecord {
    std::string id;
    // Empty only for label-only records (CSV ground truth, model label files).
    std::string text;
    std::optional<std::string> ground_truth_text;
    std::optional<bool> abnormal;
    // Never holds Uncertain.
    std::optional<LabelMap> binary_labels;
    // Opaque image path or URL for reader studies.
    std::optional<std::string> image;

    bool operator==(const ReportRecord&) const = default;
};

struct Corpus {
    std::vector<ReportRecord> records;
    std::string source_path;
    std::string schema_version = kCorpusSchemaVersion;
    // Number of unrecognized JSON keys seen while loading (ignored).
    std::size_t unknown_key_warnings = 0;

    const ReportRecord* find(std::string_view id) const {
        for (const auto& r : records)
            if (r.id == id) return &r;
        return nullptr;
    }

    bool operator==(const Corpus& o) const {
        return records == o.records && schema_version == o.schema_version;
    }
};

namespace detail {

inline bool is_known_corpus_key(std::string_view key) {
    return key == "id" || key == "text" || key == "ground_truth_text" || key == "abnormal" ||
           key == "labels" || key == "image";
}

inline FindingLabel binary_label_from_json(const nlohmann::json& v, const SourceLocation& where,
                                           std::string_view finding) {
    if (v.is_null()) return FindingLabel::NotMentioned;
    if (v.is_number_integer() || v.is_number_unsigned()) {
        auto n = v.get<long long>();
        if (n == 1) return FindingLabel::Positive;
        if (n == 0) return FindingLabel::Negative;
    }
    auto loc = where;
    loc.column = std::string(finding);
    throw Error(ErrorKind::BadCell, "label value must be 1, 0 or null, got " + v.dump(), loc);
}

inline std::string require_string(const nlohmann::json& obj, const char* key,
                                   const SourceLocation& where) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null())
        throw Error(ErrorKind::MissingField, std::string("field '") + key + "' is absent", where);
    if (!it->is_string())
        throw Error(ErrorKind::MalformedLine, std::string("field '") + key + "' must be a string",
                    where);
    auto s = it->get<std::string>();
    if (trim(s).empty())
        throw Error(ErrorKind::MissingField, std::string("field '") + key + "' is empty", where);
    return s;
}

} // namespace detail

/// Parses one corpus JSONL object. `labels_only` permits records without text
/// as long as they carry a `labels` object.
inline ReportRecord record_from_json(const nlohmann::json& obj, const SourceLocation& where,
                                     std::size_t* unknown_keys = nullptr,
                                     bool labels_only = false) {
    if (!obj.is_object())
        throw Error(ErrorKind::MalformedLine, "line is not a JSON object", where);

    ReportRecord rec;
    rec.id = detail::require_string(obj, "id", where);
    bool has_labels = obj.contains("labels") && !obj["labels"].is_null();
    if (labels_only && has_labels && (!obj.contains("text") || obj["text"].is_null()))
        rec.text.clear();
    else
        rec.text = detail::require_string(obj, "text", where);

    if (auto it = obj.find("ground_truth_text"); it != obj.end() && !it->is_null()) {
        if (!it->is_string())
            throw Error(ErrorKind::MalformedLine, "ground_truth_text must be a string", where);
        rec.ground_truth_text = it->get<std::string>();
    }
    if (auto it = obj.find("abnormal"); it != obj.end() && !it->is_null()) {
        if (!it->is_boolean())
            throw Error(ErrorKind::MalformedLine, "abnormal must be a boolean", where);
        rec.abnormal = it->get<bool>();
    }
    if (auto it = obj.find("image"); it != obj.end() && !it->is_null()) {
        if (!it->is_string()) throw Error(ErrorKind::MalformedLine, "image must be a string", where);
        rec.image = it->get<std::string>();
    }
    if (has_labels) {
        const auto& labels = obj["labels"];
        if (!labels.is_object())
            throw Error(ErrorKind::MalformedLine, "labels must be an object", where);
        LabelMap map;
        for (const auto& [key, value] : labels.items()) {
            auto f = finding_from_string(key);
            if (!f) {
                auto loc = where;
                loc.column = key;
                throw Error(ErrorKind::BadCell, "unknown finding '" + key + "'", loc);
            }
            map[*f] = detail::binary_label_from_json(value, where, key);
        }
        rec.binary_labels = map;
    }
    if (unknown_keys) {
        for (const auto& [key, value] : obj.items())
            if (!detail::is_known_corpus_key(key)) ++*unknown_keys;
    }
    return rec;
}

inline nlohmann::json record_to_json(const ReportRecord& rec) {
    nlohmann::json obj;
    obj["id"] = rec.id;
    if (!rec.text.empty()) obj["text"] = rec.text;
    if (rec.ground_truth_text) obj["ground_truth_text"] = *rec.ground_truth_text;
    if (rec.abnormal) obj["abnormal"] = *rec.abnormal;
    if (rec.image) obj["image"] = *rec.image;
    if (rec.binary_labels) {
        nlohmann::json labels = nlohmann::json::object();
        for (auto f : kAllFindings) {
            switch ((*rec.binary_labels)[f]) {
            case FindingLabel::Positive: labels[std::string(to_string(f))] = 1; break;
            case FindingLabel::Negative: labels[std::string(to_string(f))] = 0; break;
            default: labels[std::string(to_string(f))] = nullptr; break;
            }
        }
        obj["labels"] = labels;
    }
    return obj;
}

/// Reads corpus JSONL from a stream. Blank lines are skipped; record order
/// follows line order.
inline Corpus parse_corpus(std::istream& in, const std::string& source_name,
                           bool labels_only = false) {
    Corpus corpus;
    corpus.source_path = source_name;
    std::unordered_map<std::string, std::size_t> seen;  // id -> line
    std::string line;
    std::size_t line_no = 0;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t line_start = offset;
        offset += line.size() + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;

        SourceLocation where{source_name, line_no, line_start, std::nullopt};
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            where.byte_offset = line_start + (e.byte > 0 ? e.byte - 1 : 0);
            throw Error(ErrorKind::MalformedLine, "invalid JSON", where);
        }
        auto rec = record_from_json(obj, where, &corpus.unknown_key_warnings, labels_only);
        if (auto [it, inserted] = seen.emplace(rec.id, line_no); !inserted)
            throw Error(ErrorKind::DuplicateId,
                        "id '" + rec.id + "' already used on line " + std::to_string(it->second),
                        where);
        corpus.records.push_back(std::move(rec));
    }
    return corpus;
}

inline Corpus load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open file", {path});
    return parse_corpus(in, path);
}

/// Loads a label-only JSONL file: each line needs `id` and `labels`; `text`
/// is optional. Label values may be 1/0/null.
inline Corpus load_label_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open file", {path});
    return parse_corpus(in, path, /*labels_only=*/true);
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
    for (const auto& rec : corpus.records) out << record_to_json(rec).dump() << '\n';
}

// ---------------------------------------------------------------------------
// CSV ground truth (binary labels).

namespace detail {

/// Splits one CSV record (RFC 4180 quoting). Embedded newlines inside quotes
/// are not supported.
inline std::vector<std::string> split_csv_row(std::string_view row) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < row.size(); ++i) {
        char c = row[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < row.size() && row[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else {
            cell += c;
        }
    }
    cells.push_back(std::move(cell));
    return cells;
}

} // namespace detail

using ColumnMap = std::vector<std::pair<std::string, Finding>>;

/// Maps every header that spells a finding (snake_case or CheXpert display
/// name, case-insensitive) to that finding.
inline ColumnMap default_column_map(const std::vector<std::string>& headers) {
    ColumnMap map;
    for (const auto& h : headers) {
        auto key = to_lower(trim(h));
        for (auto f : kAllFindings) {
            if (key == to_string(f) || key == to_lower(display_name(f))) {
                map.emplace_back(h, f);
                break;
            }
        }
    }
    return map;
}

inline std::vector<std::string> read_csv_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open file", {path});
    std::string line;
    if (!std::getline(in, line)) return {};
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return detail::split_csv_row(line);
}

/// Parses CSV ground truth: 1 -> Positive, 0 -> Negative, empty -> NotMentioned.
/// "1.0"/"0.0" are accepted as spellings of 1/0.
inline Corpus parse_binary_labels(std::istream& in, const std::string& source_name,
                                  const std::string& id_column, const ColumnMap& column_map) {
    Corpus corpus;
    corpus.source_path = source_name;

    std::string line;
    if (!std::getline(in, line))
        throw Error(ErrorKind::MalformedLine, "missing header row", {source_name, 1, 0});
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto headers = detail::split_csv_row(line);

    auto column_of = [&](const std::string& name) -> std::size_t {
        std::size_t found = headers.size();
        for (std::size_t i = 0; i < headers.size(); ++i) {
            if (headers[i] != name) continue;
            if (found != headers.size())
                throw Error(ErrorKind::DuplicateColumn, "header appears more than once",
                            {source_name, 1, 0, name});
            found = i;
        }
        if (found == headers.size())
            throw Error(ErrorKind::UnknownColumn, "header not found", {source_name, 1, 0, name});
        return found;
    };

    const std::size_t id_idx = column_of(id_column);
    std::vector<std::pair<std::size_t, Finding>> mapped;
    for (const auto& [header, finding] : column_map) mapped.emplace_back(column_of(header), finding);

    std::unordered_map<std::string, std::size_t> seen;
    std::size_t line_no = 1;
    std::size_t offset = line.size() + 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t line_start = offset;
        offset += line.size() + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        SourceLocation where{source_name, line_no, line_start, std::nullopt};

        auto cells = detail::split_csv_row(line);
        if (cells.size() != headers.size())
            throw Error(ErrorKind::MalformedLine,
                        "expected " + std::to_string(headers.size()) + " cells, got " +
                            std::to_string(cells.size()),
                        where);
        ReportRecord rec;
        rec.id = std::string(trim(cells[id_idx]));
        if (rec.id.empty()) {
            where.column = id_column;
            throw Error(ErrorKind::MissingField, "empty id", where);
        }
        LabelMap labels;
        for (const auto& [col, finding] : mapped) {
            auto v = trim(cells[col]);
            if (v.empty()) {
                labels[finding] = FindingLabel::NotMentioned;
            } else if (v == "1" || v == "1.0") {
                labels[finding] = FindingLabel::Positive;
            } else if (v == "0" || v == "0.0") {
                labels[finding] = FindingLabel::Negative;
            } else {
                where.column = headers[col];
                throw Error(ErrorKind::BadCell, "value '" + std::string(v) + "' is not 1, 0 or empty",
                            where);
            }
        }
        rec.binary_labels = labels;
        if (auto [it, inserted] = seen.emplace(rec.id, line_no); !inserted)
            throw Error(ErrorKind::DuplicateId,
                        "id '" + rec.id + "' already used on line " + std::to_string(it->second),
                        where);
        corpus.records.push_back(std::move(rec));
    }
    return corpus;
}

inline Corpus load_binary_labels(const std::string& path, const std::string& id_column,
                                 const ColumnMap& column_map) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open file", {path});
    return parse_binary_labels(in, path, id_column, column_map);
}

} // namespace cxreval
