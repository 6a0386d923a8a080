// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cxreval/corpus.hpp>

#include "test_helpers.hpp"

#include <random>
#include <sstream>

using namespace cxreval;

namespace {

Corpus parse(const std::string& text) {
    std::istringstream in(text);
    return parse_corpus(in, "mem.jsonl");
}

template <typename Fn>
ErrorKind error_kind(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected cxreval::Error");
    return ErrorKind::Io;
}

} // namespace

TEST_CASE("Finding enumeration", "[corpus]") {
    STATIC_REQUIRE(kFindingCount == 14);
    for (auto f : kAllFindings) {
        auto name = to_string(f);
        REQUIRE(finding_from_string(name) == f);
        for (char c : name) REQUIRE((std::islower(static_cast<unsigned char>(c)) || c == '_'));
    }
    REQUIRE(is_meta(Finding::no_finding));
    REQUIRE(is_non_pathology(Finding::support_devices));
    REQUIRE_FALSE(is_meta(Finding::edema));
    REQUIRE_FALSE(finding_from_string("Edema"));
}

TEST_CASE("FindingLabel precedence and definiteness", "[corpus]") {
    REQUIRE(precedence(FindingLabel::Positive) > precedence(FindingLabel::Uncertain));
    REQUIRE(precedence(FindingLabel::Uncertain) > precedence(FindingLabel::Negative));
    REQUIRE(precedence(FindingLabel::Negative) > precedence(FindingLabel::NotMentioned));
    REQUIRE(is_definite(FindingLabel::Positive));
    REQUIRE(is_definite(FindingLabel::Negative));
    REQUIRE_FALSE(is_definite(FindingLabel::Uncertain));
    REQUIRE_FALSE(is_definite(FindingLabel::NotMentioned));
}

TEST_CASE("load_corpus keeps file order", "[corpus]") {
    auto c = parse(R"({"id":"b","text":"No pneumothorax."}
{"id":"a","text":"Cardiomegaly.","abnormal":true,"ground_truth_text":"Enlarged heart."}
)");
    REQUIRE(c.records.size() == 2);
    CHECK(c.records[0].id == "b");
    CHECK(c.records[1].id == "a");
    CHECK(c.records[1].abnormal == true);
    CHECK(c.records[1].ground_truth_text == "Enlarged heart.");
    CHECK(c.unknown_key_warnings == 0);
}

TEST_CASE("load_corpus errors", "[corpus]") {
    SECTION("duplicate id reports line 2") {
        try {
            parse("{\"id\":\"x\",\"text\":\"a\"}\n{\"id\":\"x\",\"text\":\"b\"}\n");
            FAIL("no error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::DuplicateId);
            CHECK(e.where().line == 2u);
            CHECK(std::string(e.what()).find("'x'") != std::string::npos);
        }
    }
    SECTION("empty text") {
        CHECK(error_kind([] { parse(R"({"id":"x","text":""})"); }) == ErrorKind::MissingField);
        CHECK(error_kind([] { parse(R"({"id":"x","text":"   "})"); }) == ErrorKind::MissingField);
    }
    SECTION("missing id") {
        CHECK(error_kind([] { parse(R"({"text":"abc"})"); }) == ErrorKind::MissingField);
    }
    SECTION("malformed JSON carries line and offset") {
        try {
            parse("{\"id\":\"a\",\"text\":\"ok\"}\n{\"id\": oops}\n");
            FAIL("no error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::MalformedLine);
            CHECK(e.where().line == 2u);
            REQUIRE(e.where().byte_offset);
            CHECK(*e.where().byte_offset >= 23u);
        }
    }
    SECTION("label values restricted to 1/0/null") {
        CHECK(error_kind([] { parse(R"({"id":"a","text":"t","labels":{"edema":-1}})"); }) ==
              ErrorKind::BadCell);
        CHECK(error_kind([] { parse(R"({"id":"a","text":"t","labels":{"bogus":1}})"); }) ==
              ErrorKind::BadCell);
    }
}

TEST_CASE("unknown keys are counted, not fatal", "[corpus]") {
    auto c = parse(R"({"id":"a","text":"t","extra":1,"more":"x"})");
    CHECK(c.records.size() == 1);
    CHECK(c.unknown_key_warnings == 2);
}

TEST_CASE("binary labels in JSONL never hold Uncertain", "[corpus]") {
    auto c = parse(R"({"id":"a","text":"t","labels":{"edema":1,"fracture":0,"pneumonia":null}})");
    const auto& l = *c.records[0].binary_labels;
    CHECK(l[Finding::edema] == FindingLabel::Positive);
    CHECK(l[Finding::fracture] == FindingLabel::Negative);
    CHECK(l[Finding::pneumonia] == FindingLabel::NotMentioned);
    CHECK(l[Finding::atelectasis] == FindingLabel::NotMentioned);
    for (auto v : l) CHECK(v != FindingLabel::Uncertain);
}

TEST_CASE("corpus JSONL round trip and determinism (property)", "[corpus][property]") {
    std::mt19937_64 rng(20240601);
    auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<unsigned>(n)); };
    const std::vector<std::string> words = {"No", "pleural", "effusion", "XXXX", "\"quoted\"",
                                            "caf\xc3\xa9", "line\nbreak", "tab\there", "7 mm."};
    for (int round = 0; round < 200; ++round) {
        Corpus c;
        const int n = 1 + pick(8);
        for (int i = 0; i < n; ++i) {
            ReportRecord r;
            r.id = "r" + std::to_string(round) + "_" + std::to_string(i);
            for (int w = 0; w < 1 + pick(6); ++w) r.text += words[pick(words.size())] + " ";
            r.text += "end";
            if (pick(2)) r.ground_truth_text = "gt " + words[pick(words.size())];
            if (pick(2)) r.abnormal = pick(2) == 1;
            if (pick(2)) r.image = "img/" + r.id + ".png";
            if (pick(2)) {
                LabelMap m;
                for (auto f : kAllFindings) {
                    static constexpr FindingLabel opts[] = {FindingLabel::Positive,
                                                            FindingLabel::Negative,
                                                            FindingLabel::NotMentioned};
                    m[f] = opts[pick(3)];
                }
                r.binary_labels = m;
            }
            c.records.push_back(r);
        }
        std::ostringstream out;
        write_corpus(out, c);
        auto reloaded = parse(out.str());
        REQUIRE(reloaded == c);
        REQUIRE(parse(out.str()) == reloaded);
    }
}

TEST_CASE("load_binary_labels maps 1/0/empty", "[corpus]") {
    const std::string csv =
        "Path,Pleural Effusion,Pneumothorax,Edema\n"
        "p1,1,0,\n"
        "p2,,,\n"
        "\"p,3\",1.0,0.0,1\n";
    std::istringstream in(csv);
    ColumnMap map = {{"Pleural Effusion", Finding::pleural_effusion},
                     {"Pneumothorax", Finding::pneumothorax},
                     {"Edema", Finding::edema}};
    auto c = parse_binary_labels(in, "gt.csv", "Path", map);
    REQUIRE(c.records.size() == 3);

    const auto& l1 = *c.records[0].binary_labels;
    CHECK(l1[Finding::pleural_effusion] == FindingLabel::Positive);
    CHECK(l1[Finding::pneumothorax] == FindingLabel::Negative);
    for (auto f : kAllFindings)
        if (f != Finding::pleural_effusion && f != Finding::pneumothorax)
            CHECK(l1[f] == FindingLabel::NotMentioned);

    for (auto v : *c.records[1].binary_labels) CHECK(v == FindingLabel::NotMentioned);
    CHECK(c.records[2].id == "p,3");
    CHECK((*c.records[2].binary_labels)[Finding::edema] == FindingLabel::Positive);
}

TEST_CASE("load_binary_labels errors", "[corpus]") {
    ColumnMap map = {{"Edema", Finding::edema}};
    SECTION("bad cell names row and column") {
        std::istringstream in("id,Edema\na,2\n");
        try {
            parse_binary_labels(in, "gt.csv", "id", map);
            FAIL("no error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::BadCell);
            CHECK(e.where().line == 2u);
            CHECK(e.where().column == "Edema");
        }
    }
    SECTION("uncertain -1 is rejected") {
        std::istringstream in("id,Edema\na,-1\n");
        CHECK(error_kind([&] { parse_binary_labels(in, "gt.csv", "id", map); }) ==
              ErrorKind::BadCell);
    }
    SECTION("unknown mapped column") {
        std::istringstream in("id,Oedema\na,1\n");
        CHECK(error_kind([&] { parse_binary_labels(in, "gt.csv", "id", map); }) ==
              ErrorKind::UnknownColumn);
    }
    SECTION("duplicate mapped column") {
        std::istringstream in("id,Edema,Edema\na,1,0\n");
        CHECK(error_kind([&] { parse_binary_labels(in, "gt.csv", "id", map); }) ==
              ErrorKind::DuplicateColumn);
    }
}

TEST_CASE("default column map recognizes CheXpert headers", "[corpus]") {
    auto map = default_column_map({"Path", "Sex", "No Finding", "Enlarged Cardiomediastinum",
                                   "support_devices"});
    REQUIRE(map.size() == 3);
    CHECK(map[0].second == Finding::no_finding);
    CHECK(map[1].second == Finding::enlarged_cardiomediastinum);
    CHECK(map[2].second == Finding::support_devices);
}

TEST_CASE("load_corpus from disk", "[corpus]") {
    auto dir = test::temp_dir("corpus");
    auto path = test::write_file(dir / "c.jsonl", "{\"id\":\"a\",\"text\":\"x\"}\n\n");
    auto c = load_corpus(path);
    CHECK(c.records.size() == 1);
    CHECK(c.source_path == path);
    CHECK_THROWS_AS(load_corpus((dir / "missing.jsonl").string()), Error);
    std::filesystem::remove_all(dir);
}
