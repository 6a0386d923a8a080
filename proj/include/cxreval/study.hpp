// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "corpus.hpp"
#include "error.hpp"
#include "random.hpp"
#include "stats.hpp"

#include <json.hpp>

#include <array>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

namespace cxreval {

enum class Condition { model, ground_truth };

inline std::string_view to_string(Condition c) noexcept {
    return c == Condition::model ? "model" : "ground_truth";
}

enum class Grade { A, B, C, D };

inline constexpr std::array<Grade, 4> kAllGrades = {Grade::A, Grade::B, Grade::C, Grade::D};

inline std::string_view to_string(Grade g) noexcept {
    static constexpr std::string_view names[] = {"A", "B", "C", "D"};
    return names[static_cast<int>(g)];
}

inline std::string_view grade_meaning(Grade g) noexcept {
    static constexpr std::string_view meanings[] = {
        "acceptable without any revision",
        "acceptable with minor revision",
        "acceptable with major revision",
        "unacceptable",
    };
    return meanings[static_cast<int>(g)];
}

inline Grade parse_grade(std::string_view s) {
    if (s == "A") return Grade::A;
    if (s == "B") return Grade::B;
    if (s == "C") return Grade::C;
    if (s == "D") return Grade::D;
    throw Error(ErrorKind::BadGrade, "grade must be one of A, B, C, D; got '" + std::string(s) + "'");
}

/// Reports rated A or B count as successful autonomous reporting.
constexpr bool is_success(Grade g) noexcept { return g == Grade::A || g == Grade::B; }

struct StudyItem {
    std::string record_id;
    Condition condition = Condition::model;
    std::string image_ref;    // original path or URL, never sent to raters
    std::string image_token;  // opaque alias served under /images/
    std::string report_text;

    bool operator==(const StudyItem&) const = default;
};

struct StudySession {
    std::string session_id;
    std::uint64_t seed = 0;
    std::string created_at;
    std::size_t n_abnormal = 0;
    std::size_t n_normal = 0;
    std::vector<std::string> raters;
    std::vector<StudyItem> items;
    // orders[r][pos] = item index shown to raters[r] at position pos.
    std::vector<std::vector<std::size_t>> orders;

    std::size_t rater_index(std::string_view rater) const {
        for (std::size_t i = 0; i < raters.size(); ++i)
            if (raters[i] == rater) return i;
        throw Error(ErrorKind::UnknownRater, "rater '" + std::string(rater) + "' is not registered");
    }

    std::size_t item_at(std::string_view rater, std::size_t position) const {
        const auto r = rater_index(rater);
        if (position >= items.size())
            throw Error(ErrorKind::PositionOutOfRange,
                        "position " + std::to_string(position) + " outside [0, " +
                            std::to_string(items.size()) + ")");
        return orders[r][position];
    }

    std::size_t expected_ratings() const noexcept { return items.size() * raters.size(); }

    bool operator==(const StudySession&) const = default;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool,
                                                           std::size_t k, std::mt19937_64 rng) {
    for (std::size_t i = 0; i < k; ++i)
        std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
    pool.resize(k);
    return pool;
}

} // namespace detail

inline std::string utc_timestamp() {
    auto now = std::chrono::system_clock::now();
    auto t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Samples n_abnormal + n_normal records and builds two items per record (one
/// per condition). All raters share the sampled records; each gets an
/// independently shuffled presentation order.
inline StudySession create_session(const Corpus& corpus, std::size_t n_abnormal,
                                   std::size_t n_normal, const std::vector<std::string>& raters,
                                   std::uint64_t seed, std::string created_at = {}) {
    if (raters.empty()) throw Error(ErrorKind::InvalidConfig, "at least one rater is required");
    if (std::set<std::string>(raters.begin(), raters.end()).size() != raters.size())
        throw Error(ErrorKind::InvalidConfig, "rater ids must be distinct");
    for (const auto& r : raters)
        if (trim(r).empty()) throw Error(ErrorKind::InvalidConfig, "rater id is empty");

    std::vector<std::size_t> abnormal, normal;
    for (std::size_t i = 0; i < corpus.records.size(); ++i) {
        const auto& rec = corpus.records[i];
        if (!rec.abnormal) continue;
        auto missing = [&](const char* what) {
            throw Error(ErrorKind::MissingField, "record '" + rec.id + "' lacks " + what,
                        {corpus.source_path});
        };
        if (!rec.image || trim(*rec.image).empty()) missing("an image");
        if (trim(rec.text).empty()) missing("a model report (text)");
        if (!rec.ground_truth_text || trim(*rec.ground_truth_text).empty())
            missing("a ground-truth report");
        (*rec.abnormal ? abnormal : normal).push_back(i);
    }
    if (abnormal.size() < n_abnormal)
        throw Error(ErrorKind::InsufficientRecords,
                    "abnormal class short by " + std::to_string(n_abnormal - abnormal.size()) +
                        " (have " + std::to_string(abnormal.size()) + ", need " +
                        std::to_string(n_abnormal) + ")");
    if (normal.size() < n_normal)
        throw Error(ErrorKind::InsufficientRecords,
                    "normal class short by " + std::to_string(n_normal - normal.size()) +
                        " (have " + std::to_string(normal.size()) + ", need " +
                        std::to_string(n_normal) + ")");

    auto chosen = detail::sample_without_replacement(abnormal, n_abnormal, derive_stream(seed, 0));
    auto chosen_normal = detail::sample_without_replacement(normal, n_normal, derive_stream(seed, 1));
    chosen.insert(chosen.end(), chosen_normal.begin(), chosen_normal.end());

    StudySession s;
    s.seed = seed;
    s.created_at = std::move(created_at);
    s.n_abnormal = n_abnormal;
    s.n_normal = n_normal;
    s.raters = raters;

    std::uint64_t id_hash = detail::fnv1a(std::to_string(seed));
    for (auto idx : chosen) {
        const auto& rec = corpus.records[idx];
        id_hash = detail::fnv1a(rec.id, id_hash);
        s.items.push_back({rec.id, Condition::model, *rec.image, {}, rec.text});
        s.items.push_back({rec.id, Condition::ground_truth, *rec.image, {}, *rec.ground_truth_text});
    }
    // Item indices must not reveal the condition (e.g. by parity).
    auto item_rng = derive_stream(seed, 2);
    shuffle(s.items, item_rng);
    s.session_id = detail::hex64(id_hash).substr(0, 12);
    for (std::size_t i = 0; i < s.items.size(); ++i)
        s.items[i].image_token =
            detail::hex64(splitmix64(id_hash ^ splitmix64(seed + 0x1000 + i))) + ".img";

    for (std::size_t r = 0; r < raters.size(); ++r) {
        std::vector<std::size_t> order(s.items.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        auto rng = derive_stream(seed, 16 + r);
        shuffle(order, rng);
        s.orders.push_back(std::move(order));
    }
    return s;
}

/// What a rater sees: no condition, record id or item index.
struct Presentation {
    std::string image_url;
    std::string report_text;
    std::size_t position = 0;
    std::size_t total = 0;
};

inline Presentation present_item(const StudySession& s, std::string_view rater,
                                 std::size_t position) {
    const auto& item = s.items[s.item_at(rater, position)];
    return {"/images/" + item.image_token, item.report_text, position, s.items.size()};
}

inline nlohmann::json to_json(const Presentation& p) {
    return {{"image_ref", p.image_url},
            {"report_text", p.report_text},
            {"position", p.position},
            {"total", p.total}};
}

inline nlohmann::json to_json(const StudySession& s) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& it : s.items)
        items.push_back({{"record_id", it.record_id},
                         {"condition", std::string(to_string(it.condition))},
                         {"image_ref", it.image_ref},
                         {"image_token", it.image_token},
                         {"report_text", it.report_text}});
    nlohmann::json orders = nlohmann::json::object();
    for (std::size_t r = 0; r < s.raters.size(); ++r) orders[s.raters[r]] = s.orders[r];
    return {{"session_id", s.session_id}, {"seed", s.seed},       {"created_at", s.created_at},
            {"n_abnormal", s.n_abnormal}, {"n_normal", s.n_normal}, {"raters", s.raters},
            {"items", items},             {"orders", orders}};
}

inline StudySession session_from_json(const nlohmann::json& j) {
    StudySession s;
    try {
        s.session_id = j.at("session_id").get<std::string>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.created_at = j.value("created_at", "");
        s.n_abnormal = j.at("n_abnormal").get<std::size_t>();
        s.n_normal = j.at("n_normal").get<std::size_t>();
        s.raters = j.at("raters").get<std::vector<std::string>>();
        for (const auto& it : j.at("items")) {
            StudyItem item;
            item.record_id = it.at("record_id").get<std::string>();
            auto cond = it.at("condition").get<std::string>();
            if (cond == "model") item.condition = Condition::model;
            else if (cond == "ground_truth") item.condition = Condition::ground_truth;
            else throw Error(ErrorKind::SchemaError, "unknown condition '" + cond + "'");
            item.image_ref = it.at("image_ref").get<std::string>();
            item.image_token = it.at("image_token").get<std::string>();
            item.report_text = it.at("report_text").get<std::string>();
            s.items.push_back(std::move(item));
        }
        for (const auto& r : s.raters) {
            auto order = j.at("orders").at(r).get<std::vector<std::size_t>>();
            std::vector<bool> seen(s.items.size(), false);
            if (order.size() != s.items.size())
                throw Error(ErrorKind::SchemaError, "order for '" + r + "' has wrong length");
            for (auto i : order) {
                if (i >= s.items.size() || seen[i])
                    throw Error(ErrorKind::SchemaError, "order for '" + r + "' is not a permutation");
                seen[i] = true;
            }
            s.orders.push_back(std::move(order));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::SchemaError, std::string("session file: ") + e.what());
    }
    return s;
}

inline StudySession load_session(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open session file", {path});
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::SchemaError, e.what(), {path});
    }
    return session_from_json(j);
}

inline void save_session(const StudySession& s, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write session file", {path});
    out << to_json(s).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Ratings

struct Rating {
    std::uint64_t seq = 0;
    std::string rater_id;
    std::size_t item_index = 0;
    std::size_t position = 0;
    Grade grade = Grade::A;
    std::string submitted_at;

    bool operator==(const Rating&) const = default;
};

inline nlohmann::json to_json(const Rating& r) {
    return {{"seq", r.seq},           {"rater", r.rater_id},
            {"item", r.item_index},   {"pos", r.position},
            {"grade", std::string(to_string(r.grade))},
            {"submitted_at", r.submitted_at}};
}

inline Rating rating_from_json(const nlohmann::json& j) {
    Rating r;
    r.seq = j.at("seq").get<std::uint64_t>();
    r.rater_id = j.at("rater").get<std::string>();
    r.item_index = j.at("item").get<std::size_t>();
    r.position = j.value("pos", std::size_t{0});
    r.grade = parse_grade(j.at("grade").get<std::string>());
    r.submitted_at = j.value("submitted_at", "");
    return r;
}

/// Parses a ratings log. Only complete lines ('\n'-terminated) count; a torn
/// final line is reported through `valid_bytes` and otherwise ignored.
inline std::vector<Rating> parse_ratings_log(std::string_view data, std::size_t* valid_bytes = nullptr) {
    std::vector<Rating> out;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < data.size()) {
        auto nl = data.find('\n', pos);
        if (nl == std::string_view::npos) break;
        ++line_no;
        auto line = trim(data.substr(pos, nl - pos));
        if (!line.empty()) {
            try {
                out.push_back(rating_from_json(nlohmann::json::parse(line)));
            } catch (const nlohmann::json::exception& e) {
                throw Error(ErrorKind::StorageError, e.what(), {"ratings log", line_no, pos});
            }
        }
        pos = nl + 1;
    }
    if (valid_bytes) *valid_bytes = pos;
    return out;
}

/// Append-only JSONL rating log. Appends are serialized by a mutex and are
/// fsync'ed before the sequence number is returned.
class RatingStore {
public:
    RatingStore(const StudySession& session, std::string path)
        : session_(session), path_(std::move(path)) {
        std::string data;
        if (std::ifstream in(path_, std::ios::binary); in)
            data.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        std::size_t valid = 0;
        ratings_ = parse_ratings_log(data, &valid);
        for (const auto& r : ratings_) next_seq_ = std::max(next_seq_, r.seq + 1);

        fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT, 0644);
        if (fd_ < 0) throw Error(ErrorKind::StorageError, "cannot open ratings log", {path_});
        // Drop a torn tail left by a crash mid-append.
        if (valid != data.size() && ::ftruncate(fd_, static_cast<off_t>(valid)) != 0) {
            ::close(fd_);
            throw Error(ErrorKind::StorageError, "cannot truncate torn log tail", {path_});
        }
        ::lseek(fd_, 0, SEEK_END);
    }

    ~RatingStore() {
        if (fd_ >= 0) ::close(fd_);
    }

    RatingStore(const RatingStore&) = delete;
    RatingStore& operator=(const RatingStore&) = delete;

    /// Validates and durably appends a rating; returns the entry as written.
    Rating record(std::string_view rater, std::size_t position, std::string_view grade) {
        const auto g = parse_grade(grade);
        const auto item = session_.item_at(rater, position);

        std::lock_guard lock(mutex_);
        Rating r;
        r.seq = next_seq_;
        r.rater_id = std::string(rater);
        r.item_index = item;
        r.position = position;
        r.grade = g;
        r.submitted_at = utc_timestamp();
        const std::string line = to_json(r).dump() + "\n";
        std::size_t written = 0;
        while (written < line.size()) {
            auto n = ::write(fd_, line.data() + written, line.size() - written);
            if (n <= 0) throw Error(ErrorKind::StorageError, "write failed", {path_});
            written += static_cast<std::size_t>(n);
        }
        if (::fsync(fd_) != 0) throw Error(ErrorKind::StorageError, "fsync failed", {path_});
        ++next_seq_;
        ratings_.push_back(r);
        return r;
    }

    std::vector<Rating> ratings() const {
        std::lock_guard lock(mutex_);
        return ratings_;
    }

    const std::string& path() const noexcept { return path_; }

private:
    const StudySession& session_;
    std::string path_;
    int fd_ = -1;
    mutable std::mutex mutex_;
    std::vector<Rating> ratings_;
    std::uint64_t next_seq_ = 1;
};

/// Last write per (rater, item), in log order.
inline std::map<std::pair<std::string, std::size_t>, Rating> effective_ratings(
    const std::vector<Rating>& log) {
    std::map<std::pair<std::string, std::size_t>, Rating> out;
    for (const auto& r : log) out[{r.rater_id, r.item_index}] = r;
    return out;
}

// ---------------------------------------------------------------------------
// Analysis

struct ConditionSummary {
    std::array<std::size_t, 4> counts{};  // indexed by Grade
    std::size_t total = 0;

    std::size_t success() const noexcept { return counts[0] + counts[1]; }
    double percent(Grade g) const noexcept {
        return total ? 100.0 * static_cast<double>(counts[static_cast<int>(g)]) / static_cast<double>(total)
                     : 0.0;
    }
    double success_percent() const noexcept {
        return total ? 100.0 * static_cast<double>(success()) / static_cast<double>(total) : 0.0;
    }
};

struct StudySummary {
    ConditionSummary model;
    ConditionSummary ground_truth;
    CochranQResult cochran;
    std::size_t received = 0;
    std::size_t expected = 0;

    double completeness() const noexcept {
        return expected ? static_cast<double>(received) / static_cast<double>(expected) : 0.0;
    }
};

/// Unblinds effective ratings and tabulates per-condition grades. Cochran's Q
/// runs on (rater, record) subjects that rated both conditions, with A/B as
/// success.
inline StudySummary analyze_session(const StudySession& s, const std::vector<Rating>& log) {
    if (log.empty()) throw Error(ErrorKind::EmptyRatings, "no ratings to analyze");
    StudySummary out;
    out.expected = s.expected_ratings();

    std::map<std::pair<std::string, std::string>, std::array<std::optional<bool>, 2>> subjects;
    for (const auto& [key, r] : effective_ratings(log)) {
        s.rater_index(r.rater_id);
        if (r.item_index >= s.items.size())
            throw Error(ErrorKind::PositionOutOfRange, "rating refers to unknown item");
        const auto& item = s.items[r.item_index];
        auto& cs = item.condition == Condition::model ? out.model : out.ground_truth;
        ++cs.counts[static_cast<int>(r.grade)];
        ++cs.total;
        ++out.received;
        subjects[{r.rater_id, item.record_id}][item.condition == Condition::model ? 0 : 1] =
            is_success(r.grade);
    }

    std::vector<std::vector<int>> matrix;
    for (const auto& [key, pair] : subjects)
        if (pair[0] && pair[1]) matrix.push_back({*pair[0] ? 1 : 0, *pair[1] ? 1 : 0});
    if (!matrix.empty()) {
        out.cochran = cochran_q(matrix);
    } else {
        out.cochran.degenerate = true;
    }
    return out;
}

inline std::string format_percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

inline nlohmann::json to_json(const StudySummary& s) {
    auto cond = [](const ConditionSummary& c) {
        nlohmann::json counts = nlohmann::json::object();
        nlohmann::json pct = nlohmann::json::object();
        for (auto g : kAllGrades) {
            counts[std::string(to_string(g))] = c.counts[static_cast<int>(g)];
            pct[std::string(to_string(g))] = format_percent(c.percent(g));
        }
        return nlohmann::json{{"counts", counts},
                              {"percent", pct},
                              {"total", c.total},
                              {"success", c.success()},
                              {"success_percent", format_percent(c.success_percent())}};
    };
    return {{"model", cond(s.model)},
            {"ground_truth", cond(s.ground_truth)},
            {"cochran_q",
             {{"q", s.cochran.q_statistic},
              {"df", s.cochran.df},
              {"p_value", s.cochran.p_value},
              {"n_subjects", s.cochran.n_subjects},
              {"n_subjects_used", s.cochran.n_subjects_used},
              {"degenerate", s.cochran.degenerate}}},
            {"received", s.received},
            {"expected", s.expected},
            {"completeness", s.completeness()}};
}

inline std::string to_markdown(const StudySummary& s) {
    auto cell = [](std::size_t n, double pct) {
        return std::to_string(n) + " (" + format_percent(pct) + "%)";
    };
    std::string out = "| Class | Meaning | Model | Ground truth |\n|---|---|---|---|\n";
    for (auto g : kAllGrades) {
        out += "| " + std::string(to_string(g)) + " | " + std::string(grade_meaning(g)) + " | " +
               cell(s.model.counts[static_cast<int>(g)], s.model.percent(g)) + " | " +
               cell(s.ground_truth.counts[static_cast<int>(g)], s.ground_truth.percent(g)) + " |\n";
    }
    char p[64];
    if (s.cochran.degenerate)
        std::snprintf(p, sizeof p, "p = 1 (no discordant subjects)");
    else
        std::snprintf(p, sizeof p, "Q = %.3f, p = %.4g", s.cochran.q_statistic, s.cochran.p_value);
    out += "| A+B | successful autonomous reporting | " +
           cell(s.model.success(), s.model.success_percent()) + " | " +
           cell(s.ground_truth.success(), s.ground_truth.success_percent()) + " |\n";
    out += "\nCochran Q: " + std::string(p) + "\n";
    out += "Completeness: " + std::to_string(s.received) + "/" + std::to_string(s.expected) + "\n";
    return out;
}

} // namespace cxreval
