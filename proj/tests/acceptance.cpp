// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number
// of failing criteria.

#include "esglm/baselines.hpp"
#include "esglm/checkpoint.hpp"
#include "esglm/data.hpp"
#include "esglm/harness.hpp"
#include "esglm/mlm.hpp"
#include "esglm/relevance.hpp"
#include "esglm/synthetic.hpp"
#include "esglm/tokenizer.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <regex>
#include <sstream>
#include <sys/wait.h>

using namespace esglm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = true;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string kFixture = ESGLM_FIXTURE_DIR;

// ---------------------------------------------------------------------------
// Shared fixture pipeline, run twice through the CLI.

struct PipelineRun {
    fs::path dir;
    bool ok = false;
    double seconds = 0.0;
};

PipelineRun run_pipeline(const fs::path& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cli = ESGLM_CLI_PATH;
    const std::string cfg = " --config " + kFixture + "/pipeline.cfg";
    const std::string d = dir.string() + "/";
    std::vector<std::string> steps = {
        "vocab --corpus " + kFixture + "/corpus --out " + d + "vocab.txt",
        "pretrain --corpus " + kFixture + "/corpus --vocab " + d + "vocab.txt --out " + d + "pre.ckpt",
        "extract --manifest " + kFixture + "/filings.jsonl --vocab " + d + "vocab.txt --ckpt " + d +
            "pre.ckpt --out " + d + "extracted.jsonl",
    };
    for (const std::string t : {"a", "b"}) {
        const std::string data = d + "data_" + t;
        steps.push_back("dataset --extracted " + d + "extracted.jsonl --scores " + kFixture + "/scores.csv --task " +
                        t + " --split 0.7,0.15,0.15 --seed 7 --out " + data + " --manifest " + kFixture +
                        "/filings.jsonl --vocab " + d + "vocab.txt");
        steps.push_back("finetune --ckpt " + d + "pre.ckpt --data " + data + " --task " + t + " --out " + d +
                        "fin_" + t + ".ckpt --metrics " + d + "domain_" + t + ".json");
        steps.push_back("finetune --fresh --data " + data + " --task " + t + " --metrics " + d + "base_" + t + ".json");
        steps.push_back("baseline --data " + data + " --model common --metrics " + d + "common_" + t + ".json");
        steps.push_back("baseline --data " + data + " --model nb --metrics " + d + "nb_" + t + ".json");
        steps.push_back("evaluate --ckpt " + d + "fin_" + t + ".ckpt --data " + data + " --metrics " + d + "eval_" +
                        t + ".json");
        steps.push_back("report --metrics " + d + "common_" + t + ".json " + d + "nb_" + t + ".json " + d + "base_" +
                        t + ".json " + d + "domain_" + t + ".json --task " + t + " --out " + d + "report");
    }
    PipelineRun run{dir};
    const auto t0 = Clock::now();
    for (const auto& s : steps) {
        const std::string cmd = cli + " " + s + cfg + " >> " + d + "log.txt 2>&1";
        const int status = std::system(cmd.c_str());
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
            std::fprintf(stderr, "pipeline step failed: %s\n", s.c_str());
            run.seconds = seconds_since(t0);
            return run;
        }
    }
    run.seconds = seconds_since(t0);
    run.ok = true;
    return run;
}

// ---------------------------------------------------------------------------

Outcome gradients() {
    const auto t0 = Clock::now();
    ModelConfig c;
    c.vocab_size = 16;
    c.max_seq_len = 8;
    c.hidden_dim = 8;
    c.num_layers = 1;
    c.num_heads = 2;
    c.ffn_dim = 16;
    c.dropout_rate = 0.0;
    ParameterSet p = init_parameters(c, 101, false);
    init_classifier_head(p, c, 102);
    oracle::perturb(p, 0.3, 103);

    const auto in = [](std::vector<TokenId> body) { return prepare_input(body, 8); };
    TrainingBatch cls;
    cls.inputs = {in({5, 6, 7, 8}), in({9, 10}), in({11, 12, 13, 14, 15, 5})};
    cls.labels = {1, 0, 1};
    TrainingBatch mlm;
    mlm.inputs = {in({5, 4, 7, 8, 12}), in({4, 10, 11})};
    const TokenId x = kIgnoreIndex;
    mlm.token_targets = {{x, x, 6, x, 9, x, x, x}, {x, 13, x, 15, x, x, x, x}};

    const auto a = oracle::finite_difference_check(cls, p, c, Objective::Classify, 100, 7);
    const auto b = oracle::finite_difference_check(mlm, p, c, Objective::Mlm, 100, 8);
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = a.checked == 100 && b.checked == 100 && a.max_rel_error < 1e-4 && b.max_rel_error < 1e-4 && secs < 30;
    o.detail = fmt("classify max rel %.2e, mlm max rel %.2e over 100 coords each, %.2fs", a.max_rel_error,
                   b.max_rel_error, secs);
    return o;
}

Outcome masking(const Vocab& vocab) {
    Rng rng(11);
    std::vector<EncodedInput> batch;
    for (int i = 0; i < 500; ++i) {
        std::vector<TokenId> body(200 + rng.below(300));
        for (auto& id : body) id = static_cast<TokenId>(kNumSpecial + rng.below(vocab.size() - kNumSpecial));
        batch.push_back(prepare_input(body, 512));
    }
    MaskingConfig mc;
    Rng mrng(mc.seed);
    const auto m = mask_batch(batch, vocab, mc, mrng);
    std::size_t eligible = 0, selected = 0, masked = 0, random = 0, kept = 0, special = 0;
    for (std::size_t b = 0; b < batch.size(); ++b)
        for (std::size_t i = 0; i < batch[b].size(); ++i) {
            const TokenId orig = batch[b].ids[i];
            const bool sel = m.selection_mask[b][i] != 0;
            if (Vocab::is_special(orig)) {
                special += sel;
                continue;
            }
            ++eligible;
            if (!sel) continue;
            ++selected;
            const TokenId now = m.inputs[b].ids[i];
            if (now == kMaskId) ++masked;
            else if (now == orig) ++kept;
            else ++random;
        }
    const double s = static_cast<double>(selected);
    const double rate = s / static_cast<double>(eligible);
    const double fm = static_cast<double>(masked) / s, fr = static_cast<double>(random) / s,
                 fk = static_cast<double>(kept) / s;
    Outcome o;
    o.pass = eligible >= 100000 && std::abs(rate - 0.15) <= 0.01 && std::abs(fm - 0.8) <= 0.02 &&
             std::abs(fr - 0.1) <= 0.02 && std::abs(fk - 0.1) <= 0.02 && special == 0;
    o.detail = fmt("rate %.4f, mask/random/keep %.4f/%.4f/%.4f", rate, fm, fr, fk) + ", " +
               std::to_string(eligible) + " eligible, " + std::to_string(special) + " specials selected";
    return o;
}

Outcome input_contract(const PipelineRun& run, const Vocab& vocab) {
    Outcome o;
    std::size_t examples = 0;
    for (const char* t : {"data_a", "data_b"}) {
        const Splits s = read_dataset((run.dir / t).string());
        for (const auto* split : {&s.train, &s.validation, &s.test})
            for (const auto& e : *split) {
                ++examples;
                const auto& in = e.input;
                bool ok = in.size() == 512 && in.attention_mask.size() == 512 && in.real_len >= 2;
                for (std::size_t i = 0; ok && i < in.size(); ++i)
                    ok = in.attention_mask[i] == (i < in.real_len ? 1 : 0) && (i < in.real_len) == (in.ids[i] != kPadId);
                o.pass = o.pass && ok;
            }
    }

    // First 1,000 words of the fixture corpus.
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(kFixture + "/corpus")) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string text;
    std::size_t words = 0;
    for (const auto& f : files) {
        std::istringstream in(slurp(f));
        std::string w;
        while (words < 1000 && in >> w) {
            text += w + " ";
            ++words;
        }
        if (words == 1000) break;
    }
    std::string joined;
    for (const auto& w : pre_tokenize(text)) joined += (joined.empty() ? "" : " ") + w;
    const auto ids = encode(text, vocab);
    const bool no_unk = std::find(ids.begin(), ids.end(), kUnkId) == ids.end();
    const bool round_trip = decode(ids, vocab) == joined;
    o.pass = o.pass && examples > 0 && words == 1000 && no_unk && round_trip;
    o.detail = std::to_string(examples) + " dataset inputs checked; round trip on " + std::to_string(words) +
               " words " + (round_trip && no_unk ? "holds" : "fails");
    return o;
}

Outcome extraction(const PipelineRun& run, const Vocab& vocab) {
    const Checkpoint ck = load_checkpoint((run.dir / "pre.ckpt").string());
    const DanEmbedder dan(vocab, ck.params.token_embeddings, make_dan_params(ck.config.hidden_dim, 64, 17));
    const Embedder embed = [&](std::string_view s) { return dan.embed(s); };
    ExtractionConfig cfg;
    cfg.benchmark_sentences.push_back("Emissions and waste discharge permits under environmental regulation.");
    std::vector<SentenceEmbedding> bench;
    for (const auto& b : cfg.benchmark_sentences) bench.push_back(embed(b));

    std::vector<std::string> words;
    for (const auto& e : fs::directory_iterator(kFixture + "/filings"))
        for (const auto& w : pre_tokenize(slurp(e.path())))
            if (std::isalpha(static_cast<unsigned char>(w[0]))) words.push_back(w);
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());

    Rng rng(23);
    std::size_t matched = 0, invariant = 0;
    for (int d = 0; d < 100; ++d) {
        const std::string doc = oracle::random_document(rng, words, 50);
        const auto got = extract_top_k(doc, cfg, embed, vocab);
        std::vector<std::size_t> idx;
        for (const auto& s : got.selected) idx.push_back(s.index);
        matched += idx == oracle::extraction_indices(segment_sentences(doc), bench, embed, 3);

        bool same = true;
        for (const double scale : {1e-3, 0.37, 8.0, 1e4}) {
            const Embedder scaled = [&](std::string_view s) {
                SentenceEmbedding e = dan.embed(s);
                e.vector *= scale;
                e.norm *= scale;
                return e;
            };
            std::vector<std::size_t> sidx;
            for (const auto& s : extract_top_k(doc, cfg, scaled, vocab).selected) sidx.push_back(s.index);
            same = same && sidx == idx;
        }
        invariant += same;
    }
    return {matched == 100 && invariant == 100,
            std::to_string(matched) + "/100 match the oracle, " + std::to_string(invariant) + "/100 rescale invariant"};
}

Outcome baselines(const PipelineRun& run) {
    double worst_cc = 0.0;
    auto check_common = [&](const std::vector<int>& labels) {
        std::size_t ones = 0;
        for (int l : labels) ones += l == 1;
        const double majority =
            static_cast<double>(std::max(ones, labels.size() - ones)) / static_cast<double>(labels.size());
        worst_cc = std::max(worst_cc, std::abs(fit_predict_common_class(labels, labels).accuracy - majority));
    };
    std::size_t fixtures = 0;
    for (const char* t : {"data_a", "data_b"}) {
        const Splits s = read_dataset((run.dir / t).string());
        for (const auto* split : {&s.train, &s.validation, &s.test}) {
            std::vector<int> labels;
            for (const auto& e : *split) labels.push_back(e.label);
            check_common(labels);
            ++fixtures;
        }
    }
    std::vector<int> table(10000, 1);
    std::fill(table.begin(), table.begin() + 3893, 0);
    check_common(table);
    const bool table_ok = std::abs(fit_predict_common_class(table, table).accuracy - 0.6107) < 1e-12;

    const std::vector<std::string> v = {"a", "b", "c", "d", "e", "f"};
    Rng rng(31);
    double worst_nb = 0.0;
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<NaiveBayesExample> train;
        const std::size_t docs = 2 + rng.below(7);
        for (std::size_t i = 0; i < docs; ++i) {
            TokenBag bag(1 + rng.below(6));
            for (auto& w : bag) w = v[rng.below(v.size())];
            train.push_back({bag, static_cast<int>(i < 2 ? i : rng.below(2))});
        }
        const double alpha = trial % 2 == 0 ? 1.0 : 0.1 + 2.0 * rng.uniform();
        const auto model = fit_naive_bayes(train, alpha);
        TokenBag doc(rng.below(8));
        for (auto& w : doc) w = rng.uniform() < 0.1 ? "unseen" : v[rng.below(v.size())];
        const auto got = model.posterior(doc);
        for (const auto& [c, p] : oracle::naive_bayes_posterior(train, doc, alpha))
            worst_nb = std::max(worst_nb, std::abs(got.at(c) - p));
    }
    return {worst_cc < 1e-12 && table_ok && worst_nb < 1e-12,
            "common-class max deviation " + fmt("%.1e", worst_cc) + " over " + std::to_string(fixtures + 1) +
                " label sets, 0.6107 identity " + (table_ok ? "holds" : "fails") + ", NB max deviation " +
                fmt("%.1e", worst_nb) + " over 2000 instances"};
}

// Pretraining on a lexicon-driven corpus versus fresh initialization, same
// fine-tuning data, seed and order.
Outcome directional() {
    const auto t0 = Clock::now();
    double sum_domain = 0.0, sum_fresh = 0.0;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Lexicon lex = make_lexicon(40, 60, seed);
        Rng rng(mix_seed(seed, 2));
        CorpusSpec cs;
        cs.documents = 400;
        cs.words_per_document = 24;
        cs.topical_share = 0.7;
        const auto corpus = generate_domain_corpus(lex, cs, rng);
        const Vocab vocab = train_vocab(corpus, {2000, 2});

        ModelConfig mc;
        mc.vocab_size = vocab.size();
        mc.max_seq_len = 32;
        mc.hidden_dim = 32;
        mc.num_layers = 2;
        mc.num_heads = 4;
        mc.ffn_dim = 64;
        mc.dropout_rate = 0.1;

        TaskSpec ts;
        ts.lexicon_words = 2;
        ts.neutral_words = 8;
        auto make_split = [&](std::size_t n, std::uint64_t s, const std::string& prefix) {
            Rng r(s);
            std::vector<LabeledExample> out;
            const auto examples = generate_task(lex, n, ts, r);
            for (std::size_t i = 0; i < examples.size(); ++i) {
                LabeledExample e;
                e.ticker = prefix;
                e.doc_id = prefix + std::to_string(i);
                e.label = examples[i].label;
                e.input = prepare_input(encode(examples[i].text, vocab), mc.max_seq_len);
                out.push_back(std::move(e));
            }
            return out;
        };
        const Splits splits{make_split(40, mix_seed(seed, 3), "train"), make_split(40, mix_seed(seed, 4), "val"),
                            make_split(200, mix_seed(seed, 5), "test")};

        const ParameterSet init = init_parameters(mc, mix_seed(seed, 9));
        TrainConfig pre;
        pre.learning_rate = 3e-3;
        pre.epochs = 40;
        pre.batch_size = 16;
        pre.seed = seed;
        MaskingConfig mask;
        mask.seed = seed;
        const auto pretrained = run_pretraining(corpus, vocab, init, mc, pre, mask);

        TrainConfig ft;
        ft.learning_rate = 1e-3;
        ft.epochs = 10;
        ft.batch_size = 8;
        ft.seed = seed;
        const double domain =
            run_finetune(pretrained.params, mc, splits, Task::A, ft, "domain_lm").metrics.splits.at("test").accuracy;
        const double fresh = run_finetune(init, mc, splits, Task::A, ft, "base_lm").metrics.splits.at("test").accuracy;
        sum_domain += domain;
        sum_fresh += fresh;
        per_seed += fmt(" %.3f/%.3f", domain, fresh);
    }
    const double secs = seconds_since(t0);
    const double gap = (sum_domain - sum_fresh) / 5.0;
    return {gap >= 0.03 && secs < 900,
            fmt("domain %.4f vs fresh %.4f, gap %+.4f, %.0fs;", sum_domain / 5, sum_fresh / 5, gap, secs) +
                " per seed domain/fresh" + per_seed};
}

Outcome labels() {
    const auto scores = load_scores(kFixture + "/labels/scores_gap.csv");
    std::vector<QuarterLabel> all;
    for (const auto& [t, s] : scores) {
        auto l = derive_labels(s);
        all.insert(all.end(), l.begin(), l.end());
    }
    struct Row {
        const char* ticker;
        int year, quarter;
        double delta;
        int positive; // -1 for no change
    };
    const std::vector<Row> expected = {
        {"ACME", 2015, 4, 0.0, -1}, {"ACME", 2016, 1, -1.5, 0}, {"ACME", 2016, 2, 0.0, -1}, {"ACME", 2016, 3, 2.5, 1},
        {"BETA", 2015, 1, 0.0, -1}, {"BETA", 2015, 2, 0.0, -1}, {"BETA", 2015, 3, -1.5, 0}, {"BETA", 2015, 4, 0.0, -1},
        {"BETA", 2016, 1, 0.5, 1},  {"BETA", 2016, 2, 0.0, -1},
    };
    bool match = all.size() == expected.size();
    for (std::size_t i = 0; match && i < all.size(); ++i) {
        const auto& e = expected[i];
        match = all[i].ticker == e.ticker && all[i].year == e.year && all[i].quarter == e.quarter &&
                all[i].delta == e.delta && all[i].change == (e.positive >= 0) &&
                all[i].positive.has_value() == (e.positive >= 0) &&
                (!all[i].positive || *all[i].positive == (e.positive == 1));
    }
    const Vocab vocab({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"});
    const EdaStats eda = eda_stats(all, std::vector<FilingDoc>{}, vocab);
    const bool zeros = eda.zero_delta_count == 6 && eda.label_count == 10 && eda.zero_delta_fraction == 0.6;
    return {match && zeros, std::string("table ") + (match ? "matches" : "differs") + ", zero-delta " +
                                std::to_string(eda.zero_delta_count) + "/" + std::to_string(eda.label_count)};
}

Outcome determinism(const PipelineRun& a, const PipelineRun& b) {
    Outcome o;
    o.pass = a.ok && b.ok && a.seconds < 300 && b.seconds < 300;
    std::size_t identical = 0, compared = 0;
    for (const char* f : {"report/report_a.md", "report/report_a.json", "report/report_b.md", "report/report_b.json",
                          "pre.ckpt", "fin_a.ckpt", "fin_b.ckpt", "extracted.jsonl"}) {
        ++compared;
        const bool same = fs::exists(a.dir / f) && slurp(a.dir / f) == slurp(b.dir / f);
        identical += same;
    }
    o.pass = o.pass && identical == compared;

    bool persist = true;
    for (const char* t : {"a", "b"}) {
        const std::string path = (a.dir / (std::string("fin_") + t + ".ckpt")).string();
        const Checkpoint c = load_checkpoint(path);
        const std::string bytes = serialize_checkpoint(c);
        persist = persist && bytes == slurp(path);
        const Checkpoint again = deserialize_checkpoint(bytes);
        const Splits s = read_dataset((a.dir / (std::string("data_") + t)).string());
        for (const auto* split : {&s.train, &s.validation, &s.test}) {
            const SplitMetrics x = evaluate(c.params, c.config, *split);
            const SplitMetrics y = evaluate(again.params, again.config, *split);
            persist = persist && x.accuracy == y.accuracy && x.tp == y.tp && x.fp == y.fp && x.tn == y.tn &&
                      x.fn == y.fn;
        }
        const Metrics trained = read_metrics((a.dir / (std::string("domain_") + t + ".json")).string());
        const Metrics evaluated = read_metrics((a.dir / (std::string("eval_") + t + ".json")).string());
        for (const char* name : kSplitNames)
            persist = persist && trained.splits.at(name).accuracy == evaluated.splits.at(name).accuracy;
    }
    o.pass = o.pass && persist;
    o.detail = fmt("runs %.1fs and %.1fs, ", a.seconds, b.seconds) + std::to_string(identical) + "/" +
               std::to_string(compared) + " artifacts byte-identical, checkpoint round trip " +
               (persist ? "exact" : "differs");
    return o;
}

Outcome report_format(const PipelineRun& run) {
    const std::string header = "| Model | Train Accuracy | Validation Accuracy | Test Accuracy |";
    const std::regex row(R"(\| [A-Za-z ]+ \| [01]\.\d{4} \| [01]\.\d{4} \| [01]\.\d{4} \|)");
    bool ok = true;
    std::size_t rows = 0;
    for (const char* f : {"report/report_a.md", "report/report_b.md"}) {
        std::istringstream in(slurp(run.dir / f));
        std::string line;
        std::getline(in, line);
        ok = ok && line == header;
        std::getline(in, line);
        ok = ok && line == "|---|---|---|---|";
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ok = ok && std::regex_match(line, row);
            ++n;
        }
        ok = ok && n == 4;
        rows += n;
    }
    Metrics m;
    m.model = "common_class";
    const double acc[3] = {0.6107, 0.6140, 0.5791};
    for (int i = 0; i < 3; ++i) m.splits[kSplitNames[i]] = SplitMetrics{10000, acc[i], 0, 0, 0, 0};
    const bool exact = render_report_markdown(std::vector<Metrics>{m}) ==
                       header + "\n|---|---|---|---|\n| Common Class Prediction | 0.6107 | 0.6140 | 0.5791 |\n";
    return {ok && exact, std::to_string(rows) + " fixture report rows well formed, reference row " +
                             (exact ? "exact" : "differs")};
}

} // namespace

int main() {
    const fs::path work = fs::temp_directory_path() / "esglm_acceptance";
    const PipelineRun first = run_pipeline(work / "run1");
    const PipelineRun second = run_pipeline(work / "run2");
    if (!first.ok) {
        std::printf("fixture pipeline failed; see %s\n", (first.dir / "log.txt").c_str());
    }
    std::unique_ptr<Vocab> vocab;
    if (first.ok) vocab = std::make_unique<Vocab>(Vocab::load((first.dir / "vocab.txt").string()));

    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"gradient correctness", gradients},
        {"masking statistics", [&] { return vocab ? masking(*vocab) : Outcome{false, "no vocab"}; }},
        {"input-length contract", [&] { return vocab ? input_contract(first, *vocab) : Outcome{false, "no vocab"}; }},
        {"extraction oracle equivalence",
         [&] { return vocab ? extraction(first, *vocab) : Outcome{false, "no vocab"}; }},
        {"baseline exactness", [&] { return first.ok ? baselines(first) : Outcome{false, "no datasets"}; }},
        {"directional pretraining benefit", directional},
        {"label derivation", labels},
        {"determinism and persistence", [&] { return determinism(first, second); }},
        {"report fidelity", [&] { return first.ok ? report_format(first) : Outcome{false, "no report"}; }},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("criterion %zu %s: %s (%s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    return failures;
}
