#include "esglm/data.hpp"
#include "esglm/error.hpp"

#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace esglm;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an esglm::Error");
    return ErrorKind::InvalidInput;
}

std::map<std::string, ScoreSeries> parse(const std::string& text) {
    std::istringstream in(text);
    return parse_scores(in, "scores.csv");
}

ScoreSeries series(std::vector<ScorePoint> pts) { return ScoreSeries{"T", std::move(pts)}; }

QuarterLabel label(const std::string& t, int y, int q, double delta) {
    QuarterLabel l{t, y, q, delta, delta != 0.0, std::nullopt};
    if (l.change) l.positive = delta > 0;
    return l;
}

LabeledExample example(const std::string& ticker, int year, int q, int lab) {
    LabeledExample e;
    e.ticker = ticker;
    e.year = year;
    e.quarter = q;
    e.doc_id = make_doc_id(ticker, year, q);
    e.label = lab;
    return e;
}

fs::path temp_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_SUITE("data") {

TEST_CASE("parse scores") {
    auto m = parse("ticker,year,quarter,env_score\nAA,2015,1,10.0\nAA,2015,2,12.5\n");
    REQUIRE(m.size() == 1);
    CHECK(m["AA"].points.size() == 2);

    m = parse("ticker,year,quarter,env_score\nAA,2016,1,3\nAA,2015,4,2\nAA,2015,2,1\n");
    const auto& p = m["AA"].points;
    CHECK(p[0].year == 2015);
    CHECK(p[0].quarter == 2);
    CHECK(p[2].year == 2016);

    try {
        parse("ticker,year,quarter,env_score\nAA,2015,1,10\nAA,2015,2,abc\n");
        FAIL("expected ParseError");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ParseError);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK(kind_of([] { parse("ticker,year,quarter,env_score\nAA,2015,1,1\nAA,2015,1,2\n"); }) ==
          ErrorKind::DuplicateError);
    CHECK(kind_of([] { parse("ticker,year,quarter\nAA,2015,1\n"); }) == ErrorKind::ParseError);
    CHECK(kind_of([] { parse("ticker,year,quarter,env_score\nAA,2015,5,1\n"); }) == ErrorKind::ParseError);
}

TEST_CASE("derive labels") {
    auto l = derive_labels(series({{2015, 1, 10.0}, {2015, 2, 10.0}}));
    REQUIRE(l.size() == 1);
    CHECK(l[0].delta == 0.0);
    CHECK_FALSE(l[0].change);
    CHECK_FALSE(l[0].positive.has_value());

    l = derive_labels(series({{2015, 1, 10.0}, {2015, 2, 12.5}}));
    REQUIRE(l.size() == 1);
    CHECK(l[0].delta == 2.5);
    CHECK(l[0].change);
    CHECK(l[0].positive == true);
    CHECK(class_label(l[0], Task::A) == 1);
    CHECK(class_label(l[0], Task::B) == 1);

    l = derive_labels(series({{2014, 4, 5.0}, {2015, 1, 4.0}}));
    CHECK(l[0].year == 2015);
    CHECK(l[0].positive == false);

    l = derive_labels(series({{2015, 1, 1.0}, {2015, 2, 1.05}}), 0.1);
    CHECK_FALSE(l[0].change);

    CHECK(kind_of([] { derive_labels(series({{2015, 1, 1.0}})); }) == ErrorKind::InsufficientHistory);
}

TEST_CASE("hand-enumerated labels on the gap fixture") {
    const auto scores = load_scores(std::string(ESGLM_FIXTURE_DIR) + "/labels/scores_gap.csv");
    std::vector<QuarterLabel> all;
    for (const auto& [t, s] : scores) {
        auto l = derive_labels(s);
        all.insert(all.end(), l.begin(), l.end());
    }
    struct Row {
        const char* ticker;
        int year, quarter;
        double delta;
        bool change;
        int positive; // -1 absent
    };
    const std::vector<Row> expected = {
        {"ACME", 2015, 4, 0.0, false, -1}, {"ACME", 2016, 1, -1.5, true, 0}, {"ACME", 2016, 2, 0.0, false, -1},
        {"ACME", 2016, 3, 2.5, true, 1},   {"BETA", 2015, 1, 0.0, false, -1}, {"BETA", 2015, 2, 0.0, false, -1},
        {"BETA", 2015, 3, -1.5, true, 0},  {"BETA", 2015, 4, 0.0, false, -1}, {"BETA", 2016, 1, 0.5, true, 1},
        {"BETA", 2016, 2, 0.0, false, -1},
    };
    REQUIRE(all.size() == expected.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        CAPTURE(i);
        CHECK(all[i].ticker == expected[i].ticker);
        CHECK(all[i].year == expected[i].year);
        CHECK(all[i].quarter == expected[i].quarter);
        CHECK(all[i].delta == expected[i].delta);
        CHECK(all[i].change == expected[i].change);
        CHECK(all[i].positive.has_value() == (expected[i].positive >= 0));
        if (all[i].positive) CHECK(*all[i].positive == (expected[i].positive == 1));
    }
}

TEST_CASE("manifest loading") {
    const auto dir = temp_dir("esglm_manifest_test");
    std::ofstream(dir / "a.txt") << "Hello. World.";
    std::ofstream(dir / "m.jsonl") << R"({"ticker":"AA","year":2015,"quarter":2,"path":"a.txt"})" << "\n\n";
    const auto docs = load_manifest((dir / "m.jsonl").string());
    REQUIRE(docs.size() == 1);
    CHECK(docs[0].doc_id() == "AA-2015Q2");
    CHECK(docs[0].text == "Hello. World.");

    std::ofstream(dir / "dup.jsonl") << R"({"ticker":"AA","year":2015,"quarter":2,"path":"a.txt"})" << "\n"
                                     << R"({"ticker":"AA","year":2015,"quarter":2,"path":"a.txt"})" << "\n";
    CHECK(kind_of([&] { load_manifest((dir / "dup.jsonl").string()); }) == ErrorKind::DuplicateError);
    std::ofstream(dir / "bad.jsonl") << "{not json}\n";
    CHECK(kind_of([&] { load_manifest((dir / "bad.jsonl").string()); }) == ErrorKind::ParseError);
    fs::remove_all(dir);
}

TEST_CASE("build dataset join semantics") {
    const std::vector<FilingKey> filings = {{"AA", 2015, 2}, {"AA", 2015, 3}, {"BB", 2015, 2}};
    const std::vector<QuarterLabel> labels = {label("AA", 2015, 2, 1.0), label("BB", 2015, 2, 0.0),
                                              label("CC", 2015, 2, 0.0)};
    std::size_t calls = 0;
    const ExtractFn extract = [&](std::size_t i) {
        ++calls;
        ExtractedInput x;
        x.doc_id = make_doc_id(filings[i].ticker, filings[i].year, filings[i].quarter);
        x.token_ids = std::vector<TokenId>(10 + i, 7);
        return x;
    };
    const Dataset ds = build_dataset(filings, labels, extract, Task::A);
    CHECK(ds.examples.size() == 2);
    CHECK(calls == 2);
    CHECK(ds.report.unmatched_filings == 1);
    CHECK(ds.report.unmatched_labels == 1);
    CHECK(ds.report.matched + ds.report.unmatched_filings == filings.size());
    CHECK(ds.report.matched + ds.report.unmatched_labels == labels.size());
    CHECK(ds.examples[0].doc_id == "AA-2015Q2");
    CHECK(ds.examples[0].label == 1);
    CHECK(ds.examples[1].label == 0);
    for (const auto& ex : ds.examples) CHECK(ex.input.size() == 512);

    std::vector<FilingKey> ten;
    std::vector<QuarterLabel> mixed;
    for (int i = 0; i < 10; ++i) {
        ten.push_back({"T" + std::to_string(i), 2016, 1});
        mixed.push_back(label("T" + std::to_string(i), 2016, 1, i < 5 ? 1.0 : 0.0));
    }
    const ExtractFn simple = [](std::size_t) {
        ExtractedInput x;
        x.token_ids = {5, 6, 7};
        return x;
    };
    const Dataset b = build_dataset(ten, mixed, simple, Task::B);
    CHECK(b.examples.size() == 5);
    const Dataset a = build_dataset(ten, mixed, simple, Task::A);
    CHECK(a.examples.size() == 10);
    for (const auto& ex : a.examples) {
        CHECK(ex.input.size() == 512);
        CHECK(ex.input.real_len == 5);
    }

    const std::vector<QuarterLabel> none = {label("ZZ", 2000, 1, 1.0)};
    CHECK(kind_of([&] { build_dataset(filings, none, extract, Task::A); }) == ErrorKind::EmptyDataset);
}

TEST_CASE("largest remainder allocation") {
    CHECK(largest_remainder(10, {0.7, 0.15, 0.15}) == std::array<std::size_t, 3>{7, 2, 1});
    CHECK(largest_remainder(6, {0.7, 0.15, 0.15}) == std::array<std::size_t, 3>{4, 1, 1});
    CHECK(largest_remainder(4, {0.7, 0.15, 0.15}) == std::array<std::size_t, 3>{3, 1, 0});
    CHECK(largest_remainder(100, {0.7, 0.15, 0.15}) == std::array<std::size_t, 3>{70, 15, 15});
}

TEST_CASE("stratified split") {
    std::vector<LabeledExample> ds;
    for (int i = 0; i < 10; ++i) ds.push_back(example("T" + std::to_string(i), 2016, 1, i < 6 ? 0 : 1));
    const SplitSpec spec;
    const Splits s = split_dataset(ds, spec);
    CHECK(s.train.size() == 7);
    CHECK(s.validation.size() == 2);
    CHECK(s.test.size() == 1);
    auto count = [](const std::vector<LabeledExample>& v, int lab) {
        std::size_t n = 0;
        for (const auto& e : v) n += e.label == lab;
        return n;
    };
    CHECK(count(s.train, 0) == 4);
    CHECK(count(s.train, 1) == 3);

    std::set<std::string> seen;
    for (const auto* part : {&s.train, &s.validation, &s.test})
        for (const auto& e : *part) CHECK(seen.insert(e.doc_id).second);
    CHECK(seen.size() == ds.size());

    const Splits again = split_dataset(ds, spec);
    auto ids = [](const std::vector<LabeledExample>& v) {
        std::vector<std::string> out;
        for (const auto& e : v) out.push_back(e.doc_id);
        return out;
    };
    CHECK(ids(again.train) == ids(s.train));
    CHECK(ids(again.test) == ids(s.test));

    SplitSpec bad;
    bad.train_frac = 1.0;
    bad.val_frac = 0.0;
    bad.test_frac = 0.0;
    CHECK(kind_of([&] { split_dataset(ds, bad); }) == ErrorKind::StratificationError);

    std::vector<LabeledExample> lopsided = ds;
    lopsided[6].label = lopsided[7].label = 0;
    CHECK(kind_of([&] { split_dataset(lopsided, spec); }) == ErrorKind::StratificationError);
}

TEST_CASE("temporal and grouped splits") {
    std::vector<LabeledExample> ds;
    for (int i = 0; i < 20; ++i) ds.push_back(example("T" + std::to_string(i % 5), 2014 + i / 4, 1 + i % 4, i % 2));
    SplitSpec t;
    t.mode = SplitMode::Temporal;
    const Splits s = split_dataset(ds, t);
    int last_train = 0;
    for (const auto& e : s.train) last_train = std::max(last_train, e.year * 10 + e.quarter);
    for (const auto& e : s.test) CHECK(e.year * 10 + e.quarter > last_train);

    SplitSpec g;
    g.group_by_ticker = true;
    const Splits gs = split_dataset(ds, g);
    std::map<std::string, int> where;
    int part = 0;
    for (const auto* p : {&gs.train, &gs.validation, &gs.test}) {
        for (const auto& e : *p) {
            if (where.count(e.ticker)) CHECK(where[e.ticker] == part);
            where[e.ticker] = part;
        }
        ++part;
    }
}

TEST_CASE("eda statistics") {
    std::vector<QuarterLabel> labels;
    const std::vector<double> deltas = {0, 0, 1, -1, 0};
    for (std::size_t i = 0; i < deltas.size(); ++i) labels.push_back(label("T", 2015, 1 + static_cast<int>(i % 4), deltas[i]));
    std::vector<FilingDoc> filings = {{"T", 2015, 1, "Carbon emissions rose. Water use fell sharply."}};
    const Vocab vocab({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"});
    auto s = eda_stats(labels, filings, vocab);
    CHECK(s.zero_delta_count == 3);
    CHECK(s.zero_delta_fraction == 0.6);

    std::vector<QuarterLabel> zeros(4, label("T", 2015, 1, 0.0));
    s = eda_stats(zeros, filings, vocab);
    CHECK(s.zero_delta_fraction == 1.0);
    REQUIRE(s.delta_histogram.size() == 1);
    CHECK(s.delta_histogram[0].count == 4);

    // Sentence lengths against an independent count-and-bin oracle.
    Rng rng(3);
    std::string text;
    std::vector<std::size_t> lengths;
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = 1 + rng.below(30);
        std::string sentence;
        for (std::size_t w = 0; w < n; ++w) sentence += (w ? " w" : "W") + std::to_string(rng.below(9));
        text += sentence + ". ";
        lengths.push_back(n + 1); // every unseen word is one UNK, plus the period
    }
    filings = {{"T", 2015, 1, text}};
    EdaConfig cfg;
    cfg.sentence_bin_width = 5;
    s = eda_stats(labels, filings, vocab, cfg);
    CHECK(s.sentence_count == 100);
    std::map<std::size_t, std::size_t> bins;
    for (auto len : lengths) ++bins[len / 5];
    for (const auto& b : s.sentence_length_histogram) {
        const auto idx = static_cast<std::size_t>(b.start) / 5;
        CHECK(b.end - b.start == 5.0);
        CHECK(b.count == (bins.count(idx) ? bins[idx] : 0));
    }

    const auto dir = temp_dir("esglm_eda_test");
    write_eda(s, dir.string());
    CHECK(fs::exists(dir / "eda.json"));
    std::ifstream hist(dir / "sentlen_hist.csv");
    std::string header;
    std::getline(hist, header);
    CHECK(header == "bin_start,bin_end,count");
    std::ifstream j(dir / "eda.json");
    const auto parsed = nlohmann::json::parse(j);
    CHECK(parsed.at("zero_delta_count").get<std::size_t>() == 3);
    fs::remove_all(dir);
}

TEST_CASE("equal width histogram") {
    const std::vector<double> v = {-1.0, -0.5, 0.0, 0.0, 0.5, 1.0};
    const auto h = equal_width_histogram(v, 4);
    REQUIRE(h.size() == 4);
    CHECK(h[0].start == -1.0);
    CHECK(h[3].end == 1.0);
    CHECK(h[0].count == 1);
    CHECK(h[1].count == 1);
    CHECK(h[2].count == 2);
    CHECK(h[3].count == 2);
}

} // TEST_SUITE
