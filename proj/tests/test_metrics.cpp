// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cxreval/metrics.hpp>

#include <functional>
#include <map>
#include <random>

using namespace cxreval;
using Catch::Approx;
using FL = FindingLabel;

namespace {

constexpr FL P = FL::Positive, N = FL::Negative, U = FL::Uncertain, M = FL::NotMentioned;

Distribution make_dist(const std::map<Finding, std::pair<int, int>>& neg_pos) {
    Distribution d{};
    for (const auto& [f, np] : neg_pos)
        d[index_of(f)] = {static_cast<std::size_t>(np.first), static_cast<std::size_t>(np.second)};
    return d;
}

std::set<Finding> included_set(const LabelSelection& s) { return {s.included.begin(), s.included.end()}; }

// Label vectors realising a distribution: the first `pos` reports are
// Positive, the next `neg` Negative, the rest NotMentioned.
std::vector<LabelMap> vectors_for(const Distribution& d) {
    std::size_t n = 1;
    for (const auto& c : d) n = std::max(n, c.negative + c.positive);
    std::vector<LabelMap> out(n);
    for (auto f : kAllFindings) {
        const auto& c = d[index_of(f)];
        for (std::size_t i = 0; i < c.positive; ++i) out[i][f] = P;
        for (std::size_t i = c.positive; i < c.positive + c.negative; ++i) out[i][f] = N;
    }
    return out;
}

std::vector<LabelMap> column(Finding f, std::initializer_list<FL> values) {
    std::vector<LabelMap> out;
    for (auto v : values) {
        LabelMap m;
        m[f] = v;
        out.push_back(m);
    }
    return out;
}

ExclusionConfig permissive() {
    ExclusionConfig c;
    c.min_class_count = 1;
    c.min_class_fraction.reset();
    c.name_excluded.clear();
    return c;
}

using F = Finding;

const Distribution kMimic = make_dist({
    {F::enlarged_cardiomediastinum, {661, 114}}, {F::cardiomegaly, {255, 756}},
    {F::lung_opacity, {2, 17}}, {F::lung_lesion, {11, 369}}, {F::edema, {416, 53}},
    {F::consolidation, {175, 255}}, {F::pneumonia, {1183, 703}}, {F::atelectasis, {12, 416}},
    {F::pneumothorax, {63, 73}}, {F::pleural_effusion, {1206, 173}}, {F::pleural_other, {0, 3}},
    {F::fracture, {0, 7}}, {F::support_devices, {3, 134}}});

const Distribution kChexpert = make_dist({
    {F::no_finding, {450, 68}}, {F::enlarged_cardiomediastinum, {262, 256}},
    {F::cardiomegaly, {364, 154}}, {F::lung_opacity, {246, 272}}, {F::lung_lesion, {509, 9}},
    {F::edema, {439, 79}}, {F::consolidation, {489, 29}}, {F::pneumonia, {507, 11}},
    {F::atelectasis, {360, 158}}, {F::pneumothorax, {509, 9}}, {F::pleural_effusion, {413, 105}},
    {F::pleural_other, {518, 0}}, {F::fracture, {513, 5}}, {F::support_devices, {252, 266}}});

const Distribution kIndiana = make_dist({
    {F::enlarged_cardiomediastinum, {1105, 84}}, {F::cardiomegaly, {727, 371}},
    {F::lung_lesion, {3, 7}}, {F::consolidation, {285, 15}}, {F::edema, {109, 14}},
    {F::lung_opacity, {68, 154}}, {F::pleural_effusion, {2295, 118}}, {F::atelectasis, {1, 77}},
    {F::pneumonia, {57, 23}}, {F::pneumothorax, {1427, 27}}, {F::pleural_other, {0, 1}},
    {F::fracture, {1, 1}}, {F::support_devices, {3, 9}}});

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error thrown");
    return ErrorKind::Io;
}

} // namespace

TEST_CASE("label selection on published distributions", "[metrics][select]") {
    auto mimic = select_from_distribution(kMimic, exclusion_preset("mimic-chexpert"));
    CHECK(included_set(mimic) == std::set<Finding>{F::cardiomegaly, F::consolidation, F::edema,
                                                   F::pleural_effusion, F::pneumonia,
                                                   F::pneumothorax});

    auto chexpert = select_from_distribution(kChexpert, exclusion_preset("mimic-chexpert"));
    CHECK(included_set(chexpert) ==
          std::set<Finding>{F::atelectasis, F::cardiomegaly, F::consolidation, F::edema,
                            F::pleural_effusion, F::lung_opacity, F::support_devices});

    auto indiana = select_from_distribution(kIndiana, exclusion_preset("indiana"));
    CHECK(included_set(indiana) == std::set<Finding>{F::cardiomegaly, F::consolidation, F::edema,
                                                     F::lung_opacity, F::pleural_effusion,
                                                     F::pneumonia, F::pneumothorax});
    // The count rule alone keeps pneumothorax (27 positives); both rules drop it.
    auto indiana_both = select_from_distribution(kIndiana, exclusion_preset("mimic-chexpert"));
    CHECK(!included_set(indiana_both).count(F::pneumothorax));

    // Reasons are recorded for each excluded finding.
    for (const auto& [f, why] : mimic.excluded) CHECK(!why.empty());
    auto reason = [&](Finding f) {
        for (const auto& [g, why] : mimic.excluded)
            if (g == f) return why;
        return std::string();
    };
    CHECK(reason(F::enlarged_cardiomediastinum) == "excluded by name");
    CHECK(reason(F::fracture).find("minority class count 0 < 10") != std::string::npos);
    CHECK(reason(F::atelectasis).find("fraction") != std::string::npos);
}

TEST_CASE("select_labels counts definite labels from vectors", "[metrics][select]") {
    auto vectors = vectors_for(kMimic);
    auto sel = select_labels(vectors, exclusion_preset("mimic-chexpert"));
    for (auto f : kAllFindings) {
        CHECK(sel.distribution[index_of(f)].negative == kMimic[index_of(f)].negative);
        CHECK(sel.distribution[index_of(f)].positive == kMimic[index_of(f)].positive);
    }
    CHECK(included_set(sel) == included_set(select_from_distribution(kMimic, exclusion_preset("mimic-chexpert"))));

    // With NotMentioned read as Negative, the padding becomes negatives.
    auto cfg = exclusion_preset("mimic-chexpert");
    cfg.treat_not_mentioned_as_uncertain = false;
    auto sel2 = select_labels(vectors, cfg);
    CHECK(sel2.distribution[index_of(F::fracture)].negative == vectors.size() - 7);

    CHECK(kind_of([] { select_labels(std::vector<LabelMap>{}, ExclusionConfig{}); }) ==
          ErrorKind::EmptyInput);
}

TEST_CASE("balanced distribution keeps everything not excluded by name", "[metrics][select]") {
    Distribution d{};
    for (auto& c : d) c = {100, 100};
    auto sel = select_from_distribution(d, ExclusionConfig{});
    std::set<Finding> expect;
    for (auto f : kAllFindings)
        if (f != F::enlarged_cardiomediastinum && f != F::no_finding) expect.insert(f);
    CHECK(included_set(sel) == expect);
}

TEST_CASE("raising the count threshold only removes labels", "[metrics][select][property]") {
    std::mt19937_64 rng(31);
    for (int i = 0; i < 200; ++i) {
        Distribution d{};
        for (auto& c : d) c = {rng() % 60, rng() % 60};
        ExclusionConfig lo, hi;
        lo.min_class_count = static_cast<int>(rng() % 30);
        hi.min_class_count = lo.min_class_count + static_cast<int>(rng() % 30);
        auto a = included_set(select_from_distribution(d, lo));
        auto b = included_set(select_from_distribution(d, hi));
        REQUIRE(std::includes(a.begin(), a.end(), b.begin(), b.end()));
    }
}

TEST_CASE("exclusion presets", "[metrics]") {
    auto m = exclusion_preset("mimic-chexpert");
    CHECK(m.min_class_count == 10);
    CHECK(m.min_class_fraction == Approx(0.05));
    auto i = exclusion_preset("indiana");
    CHECK(i.min_class_count == 10);
    CHECK(!i.min_class_fraction);
    try {
        exclusion_preset("bogus");
        FAIL("expected InvalidConfig");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidConfig);
        CHECK(std::string(e.what()).find("mimic-chexpert") != std::string::npos);
    }
}

TEST_CASE("confusion counts", "[metrics]") {
    auto c = confusion_from_pairs(column(F::edema, {P, P, P, N, N, P}),
                                  column(F::edema, {P, P, P, P, N, N}), F::edema, ExclusionConfig{});
    CHECK(c.tp == 3);
    CHECK(c.fp == 1);
    CHECK(c.fn == 1);
    CHECK(c.tn == 1);

    auto s = confusion_from_pairs(column(F::edema, {P, U, P}), column(F::edema, {P, P, M}),
                                  F::edema, ExclusionConfig{});
    CHECK(s.n_pairs_used == 1);
    CHECK(s.n_pairs_skipped == 2);
    CHECK(s.tp == 1);

    auto same = column(F::edema, {P, N, N, P});
    auto id = confusion_from_pairs(same, same, F::edema, ExclusionConfig{});
    CHECK(id.fp == 0);
    CHECK(id.fn == 0);

    CHECK(kind_of([] {
              confusion_from_pairs(column(F::edema, {P}), column(F::edema, {P, N}), F::edema,
                                   ExclusionConfig{});
          }) == ErrorKind::LengthMismatch);
}

TEST_CASE("precision, recall and F1", "[metrics]") {
    ConfusionCounts c;
    c.tp = 3;
    c.fp = 1;
    c.fn = 2;
    auto s = prf1(c);
    CHECK(*s.precision == Approx(0.75).margin(1e-12));
    CHECK(*s.recall == Approx(0.6).margin(1e-12));
    CHECK(*s.f1 == Approx(2.0 / 3.0).margin(1e-9));

    auto none = prf1(ConfusionCounts{});
    CHECK(!none.precision);
    CHECK(!none.recall);
    CHECK(!none.f1);

    ConfusionCounts perfect;
    perfect.tp = 5;
    perfect.tn = 4;
    auto p = prf1(perfect);
    CHECK(*p.precision == 1.0);
    CHECK(*p.recall == 1.0);
    CHECK(*p.f1 == 1.0);

    // No true positives but errors on both sides: F1 is 0, not undefined.
    ConfusionCounts miss;
    miss.fp = 2;
    miss.fn = 3;
    CHECK(*prf1(miss).f1 == 0.0);
}

TEST_CASE("confusion counts match a brute-force recount", "[metrics][property]") {
    std::mt19937_64 rng(32);
    const FL values[] = {P, N, U, M};
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 1 + rng() % 40;
        std::vector<LabelMap> gt(n), pred(n);
        for (std::size_t r = 0; r < n; ++r) {
            gt[r][F::edema] = values[rng() % 4];
            pred[r][F::edema] = values[rng() % 4];
        }
        ExclusionConfig cfg;
        cfg.treat_not_mentioned_as_uncertain = rng() % 2;
        auto c = confusion_from_pairs(gt, pred, F::edema, cfg);

        std::size_t tp = 0, fp = 0, fn = 0, tn = 0, skipped = 0;
        for (std::size_t r = 0; r < n; ++r) {
            auto g = gt[r][F::edema], p = pred[r][F::edema];
            if (g == M) g = cfg.treat_not_mentioned_as_uncertain ? U : N;
            if (p == M) p = cfg.treat_not_mentioned_as_uncertain ? U : N;
            if (g == U || p == U) {
                ++skipped;
                continue;
            }
            if (g == P && p == P) ++tp;
            if (g == N && p == P) ++fp;
            if (g == P && p == N) ++fn;
            if (g == N && p == N) ++tn;
        }
        REQUIRE(c.tp == tp);
        REQUIRE(c.fp == fp);
        REQUIRE(c.fn == fn);
        REQUIRE(c.tn == tn);
        REQUIRE(c.n_pairs_skipped == skipped);
        REQUIRE(c.n_pairs_used + c.n_pairs_skipped == n);
        auto f1 = prf1(c).f1;
        if (tp + fp + fn == 0) {
            REQUIRE(!f1);
        } else {
            double pr = tp + fp ? double(tp) / double(tp + fp) : 0.0;
            double rc = tp + fn ? double(tp) / double(tp + fn) : 0.0;
            double expect = pr + rc > 0 ? 2 * pr * rc / (pr + rc) : 0.0;
            REQUIRE(std::abs(*f1 - expect) < 1e-12);
        }
    }
}

TEST_CASE("macro and micro averages", "[metrics]") {
    // F1 of 0.8 (tp 2, fp 1, fn 0) and 0.6 (tp 3, fp 4, fn 0).
    ConfusionCounts a, b;
    a.tp = 2;
    a.fp = 1;
    b.tp = 3;
    b.fp = 4;
    std::vector<ConfusionCounts> ab{a, b};
    CHECK(average_f1(ab, AverageMode::macro) == Approx(0.7).margin(1e-12));

    ConfusionCounts x, y;
    x.tp = 8;
    x.fp = 2;
    y.tp = 1;
    y.fn = 9;
    std::vector<ConfusionCounts> xy{x, y};
    CHECK(average_f1(xy, AverageMode::micro) == Approx(18.0 / 29.0).margin(1e-12));

    std::vector<ConfusionCounts> empty{ConfusionCounts{}};
    CHECK(kind_of([&] { average_f1(empty, AverageMode::macro); }) == ErrorKind::NothingToAverage);
    CHECK(kind_of([&] { average_f1(empty, AverageMode::micro); }) == ErrorKind::NothingToAverage);
    CHECK(!try_average_f1(empty, AverageMode::micro));

    // The unweighted mean of the six published per-label values is 0.72,
    // not the printed 0.81, so the printed average is not a plain macro mean.
    const double published[] = {0.86, 0.68, 0.84, 0.83, 0.65, 0.46};
    double sum = 0;
    for (double v : published) sum += v;
    CHECK(sum / 6 == Approx(0.72).margin(0.005));
}

namespace {

// Exact bootstrap distribution by enumerating every n^n resample.
struct Exact {
    std::vector<double> values;  // sorted, one entry per equally likely resample
    std::size_t undefined = 0;

    double quantile(double p) const {
        const double total = static_cast<double>(values.size());
        for (std::size_t i = 0; i < values.size(); ++i)
            if (static_cast<double>(i + 1) / total >= p - 1e-12) return values[i];
        return values.back();
    }
    // Distance between p and the nearest CDF step; small values make the
    // sampled percentile unstable.
    double margin(double p) const {
        const double total = static_cast<double>(values.size());
        double best = 1.0;
        for (std::size_t i = 0; i + 1 <= values.size(); ++i)
            if (i + 1 == values.size() || values[i] != values[i + 1])
                best = std::min(best, std::abs(static_cast<double>(i + 1) / total - p));
        return best;
    }
};

Exact enumerate(const OutcomeTable& table, const BootstrapTarget& target) {
    const std::size_t n = table.reports();
    std::size_t combos = 1;
    for (std::size_t i = 0; i < n; ++i) combos *= n;
    Exact e;
    for (std::size_t code = 0; code < combos; ++code) {
        std::vector<std::uint32_t> w(n, 0);
        for (std::size_t k = 0, c = code; k < n; ++k, c /= n) ++w[c % n];
        auto v = table.statistic(w, target);
        if (v)
            e.values.push_back(*v);
        else
            ++e.undefined;
    }
    std::sort(e.values.begin(), e.values.end());
    return e;
}

} // namespace

TEST_CASE("bootstrap CI matches exhaustive enumeration for n = 3", "[metrics][bootstrap][oracle]") {
    // One TP, one FN, one FP report: resampled F1 takes values 0, 0.5, 0.8, 1.
    auto gt = column(F::edema, {P, P, N});
    auto pred = column(F::edema, {P, N, P});
    OutcomeTable table(gt, pred, {F::edema}, permissive());
    auto exact = enumerate(table, F::edema);
    REQUIRE(exact.values.size() == 27);

    for (double level : {0.95, 0.6}) {
        const double tail = (1 - level) / 2;
        REQUIRE(exact.margin(tail) > 0.01);
        REQUIRE(exact.margin(1 - tail) > 0.01);
        BootstrapOptions opt;
        opt.iterations = 10000;
        opt.seed = 7;
        opt.level = level;
        auto ci = bootstrap_ci(table, F::edema, opt);
        CHECK(ci.lo == exact.quantile(tail));
        CHECK(ci.hi == exact.quantile(1 - tail));
        CHECK(ci.n_defined == 10000);
    }

    // A fixture with undefined resamples: drawing only the TN report leaves
    // tp + fp + fn = 0.
    auto gt2 = column(F::edema, {P, N, N});
    auto pred2 = column(F::edema, {P, N, P});
    OutcomeTable t2(gt2, pred2, {F::edema}, permissive());
    auto exact2 = enumerate(t2, F::edema);
    CHECK(exact2.undefined == 1);
    REQUIRE(exact2.margin(0.025) > 0.01);
    REQUIRE(exact2.margin(0.975) > 0.01);
    BootstrapOptions opt;
    opt.iterations = 10000;
    opt.seed = 8;
    auto ci2 = bootstrap_ci(t2, F::edema, opt);
    CHECK(ci2.lo == exact2.quantile(0.025));
    CHECK(ci2.hi == exact2.quantile(0.975));
    CHECK(ci2.n_undefined > 200);
    CHECK(ci2.n_undefined < 550);
}

TEST_CASE("bootstrap edge cases", "[metrics][bootstrap]") {
    auto same = column(F::edema, {P, N, P, N, P});
    BootstrapOptions opt;
    opt.seed = 1;
    auto ci = bootstrap_ci(same, same, F::edema, {F::edema}, permissive(), opt);
    CHECK(ci.lo == 1.0);
    CHECK(ci.hi == 1.0);

    auto negatives = column(F::edema, {N, N});
    CHECK(kind_of([&] {
              bootstrap_ci(negatives, negatives, F::edema, {F::edema}, permissive(), opt);
          }) == ErrorKind::AllResamplesUndefined);
    opt.iterations = 0;
    CHECK(kind_of([&] { bootstrap_ci(same, same, F::edema, {F::edema}, permissive(), opt); }) ==
          ErrorKind::InvalidConfig);
}

TEST_CASE("bootstrap is independent of thread count", "[metrics][bootstrap][property]") {
    std::mt19937_64 rng(33);
    const FL values[] = {P, N, U};
    std::vector<LabelMap> gt(80), pred(80);
    for (std::size_t r = 0; r < gt.size(); ++r)
        for (auto f : {F::edema, F::cardiomegaly}) {
            gt[r][f] = values[rng() % 3];
            pred[r][f] = values[rng() % 3];
        }
    OutcomeTable table(gt, pred, {F::edema, F::cardiomegaly}, permissive());
    for (BootstrapTarget target : {BootstrapTarget{F::edema}, BootstrapTarget{AverageMode::macro},
                                   BootstrapTarget{AverageMode::micro}}) {
        BootstrapOptions opt;
        opt.seed = 99;
        opt.threads = 1;
        auto a = bootstrap_ci(table, target, opt);
        for (unsigned t : {4u, 8u}) {
            opt.threads = t;
            auto b = bootstrap_ci(table, target, opt);
            CHECK(a.lo == b.lo);
            CHECK(a.hi == b.hi);
            CHECK(a.n_defined == b.n_defined);
        }
    }
}

TEST_CASE("bootstrap interval brackets the point estimate", "[metrics][bootstrap][property]") {
    std::mt19937_64 rng(34);
    const FL values[] = {P, N};
    int checked = 0;
    for (int i = 0; i < 40; ++i) {
        std::vector<LabelMap> gt(60), pred(60);
        for (std::size_t r = 0; r < gt.size(); ++r) {
            gt[r][F::edema] = values[rng() % 2];
            // Mostly correct predictions keep F1 away from the boundaries.
            pred[r][F::edema] = rng() % 5 ? gt[r][F::edema] : values[rng() % 2];
        }
        OutcomeTable table(gt, pred, {F::edema}, permissive());
        BootstrapOptions opt;
        opt.iterations = 400;
        opt.seed = static_cast<std::uint64_t>(i);
        auto ci = bootstrap_ci(table, F::edema, opt);
        auto point = *table.point_estimate(F::edema);
        REQUIRE(ci.lo <= ci.hi);
        REQUIRE(ci.lo <= point);
        REQUIRE(point <= ci.hi);
        ++checked;
    }
    CHECK(checked == 40);
}

TEST_CASE("evaluate_labels on a hand-computed fixture", "[metrics]") {
    // cardiomegaly pairs: TP TP FN FP TN TP TN skip skip skip -> tp3 fp1 fn1 tn2
    // edema pairs: TN FP TP TN skip TN FN TN TN FP -> tp1 fp2 fn1 tn5
    const FL gc[] = {P, P, P, N, N, P, N, N, M, U};
    const FL pc[] = {P, P, N, P, N, P, N, U, P, P};
    const FL ge[] = {N, N, P, N, N, N, P, N, N, N};
    const FL pe[] = {N, P, P, N, M, N, N, N, N, P};
    std::vector<LabelMap> gt(10), pred(10);
    for (int i = 0; i < 10; ++i) {
        gt[i][F::cardiomegaly] = gc[i];
        pred[i][F::cardiomegaly] = pc[i];
        gt[i][F::edema] = ge[i];
        pred[i][F::edema] = pe[i];
    }
    auto cfg = permissive();
    EvalOptions opt;
    opt.bootstrap.seed = 5;
    opt.bootstrap.iterations = 200;
    auto r = evaluate_labels(gt, pred, cfg, opt);
    REQUIRE(r.per_label.size() == 2);
    CHECK(r.per_label[0].finding == F::cardiomegaly);
    CHECK(r.per_label[0].counts.tp == 3);
    CHECK(r.per_label[0].counts.fp == 1);
    CHECK(r.per_label[0].counts.fn == 1);
    CHECK(r.per_label[0].counts.tn == 2);
    CHECK(r.per_label[0].counts.n_pairs_skipped == 3);
    CHECK(*r.per_label[0].scores.f1 == Approx(0.75).margin(1e-12));
    CHECK(r.per_label[1].finding == F::edema);
    CHECK(r.per_label[1].counts.tp == 1);
    CHECK(r.per_label[1].counts.fp == 2);
    CHECK(r.per_label[1].counts.fn == 1);
    CHECK(r.per_label[1].counts.tn == 5);
    CHECK(*r.per_label[1].scores.precision == Approx(1.0 / 3.0).margin(1e-12));
    CHECK(*r.per_label[1].scores.f1 == Approx(0.4).margin(1e-12));
    CHECK(*r.macro.f1 == Approx(0.575).margin(1e-12));
    CHECK(*r.micro.f1 == Approx(8.0 / 13.0).margin(1e-12));
    CHECK(r.excluded.size() == kFindingCount - 2);
    CHECK(r.per_label[0].ci.has_value());
    CHECK(r.macro.ci.has_value());

    auto md = to_markdown(r);
    CHECK(md.find("| Cardiomegaly | 0.75 (") != std::string::npos);
    CHECK(md.find("Excluded labels") != std::string::npos);
    auto j = to_json(r);
    CHECK(j.dump() == to_json(evaluate_labels(gt, pred, cfg, opt)).dump());
}

TEST_CASE("identity predictions score 1 everywhere", "[metrics][property]") {
    std::mt19937_64 rng(35);
    const FL values[] = {P, N, U, M};
    std::vector<LabelMap> gt(300);
    for (auto& v : gt)
        for (auto f : kAllFindings) v[f] = values[rng() % 4];
    for (auto& v : gt)
        for (auto f : {F::edema, F::cardiomegaly}) v[f] = values[rng() % 2];
    EvalOptions opt;
    opt.bootstrap.iterations = 100;
    auto r = evaluate_labels(gt, gt, ExclusionConfig{}, opt);
    REQUIRE(!r.per_label.empty());
    for (const auto& m : r.per_label) {
        CHECK(*m.scores.f1 == 1.0);
        CHECK(m.ci->lo == 1.0);
    }
    CHECK(*r.macro.f1 == 1.0);
    CHECK(*r.micro.f1 == 1.0);
}

TEST_CASE("evaluate aligns corpora by id", "[metrics]") {
    auto lex = default_lexicon();
    Corpus gt, pred;
    gt.records = {{"a", "Small left pleural effusion.", {}, {}, {}, {}},
                  {"b", "No pleural effusion.", {}, {}, {}, {}},
                  {"c", "Moderate pleural effusion.", {}, {}, {}, {}}};
    pred.records = {{"c", "Pleural effusion.", {}, {}, {}, {}},
                    {"b", "No pleural effusion.", {}, {}, {}, {}},
                    {"a", "No pleural effusion.", {}, {}, {}, {}}};
    auto cfg = permissive();
    EvalOptions opt;
    opt.with_ci = false;
    auto r = evaluate(gt, pred, lex, cfg, opt);
    CHECK(r.n_reports == 3);
    REQUIRE(!r.per_label.empty());
    const auto* pe = &r.per_label.front();
    for (const auto& m : r.per_label)
        if (m.finding == F::pleural_effusion) pe = &m;
    CHECK(pe->finding == F::pleural_effusion);
    CHECK(pe->counts.tp == 1);
    CHECK(pe->counts.fn == 1);
    CHECK(pe->counts.tn == 1);

    pred.records.push_back({"zzz", "Edema.", {}, {}, {}, {}});
    CHECK(kind_of([&] { evaluate(gt, pred, lex, cfg, opt); }) == ErrorKind::AlignmentError);
    Corpus empty;
    CHECK(kind_of([&] { evaluate(gt, empty, lex, cfg, opt); }) == ErrorKind::EmptyInput);
}
