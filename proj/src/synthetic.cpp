#include "esglm/synthetic.hpp"

#include "esglm/error.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

namespace esglm {

namespace fs = std::filesystem;

namespace {

const char* const kConsonants = "bdfgklmnprstvz";
const char* const kVowels = "aeiou";

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
    return v[static_cast<std::size_t>(rng.below(v.size()))];
}

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

void write_file(const fs::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + p.string());
    out << body;
}

const std::vector<std::string> kEnvWords = {"climate",   "emissions", "environmental", "regulation", "carbon",
                                            "energy",    "water",     "waste",         "pollution",  "sustainability",
                                            "remediation", "greenhouse", "discharge",  "permits",    "hazardous"};

const std::vector<std::string> kFinanceSentences = {
    "Revenue for the quarter increased compared with the prior year period.",
    "Operating expenses were higher due to increased headcount and marketing costs.",
    "Net income per diluted share was in line with management expectations.",
    "The company repurchased shares under its existing authorization.",
    "Cash provided by operating activities was sufficient to fund capital expenditures.",
    "Gross margin declined slightly as a result of product mix.",
    "The effective tax rate for the period was lower than the statutory rate.",
    "Inventory levels were reduced through improved supply chain planning.",
    "Interest expense decreased following the refinancing of long-term debt.",
    "The Board declared a quarterly dividend payable to shareholders of record.",
    "Foreign currency movements reduced reported sales in international markets.",
    "Selling, general and administrative expenses were flat as a percentage of sales.",
    "Management believes existing liquidity is adequate for the next twelve months.",
    "The segment reported higher volumes from new and existing customers.",
    "Goodwill was tested for impairment and no charge was recorded.",
    "Accounts receivable increased in line with higher quarterly sales.",
};

} // namespace

Lexicon make_lexicon(std::size_t per_group, std::size_t neutral, std::uint64_t seed) {
    Rng rng(seed);
    std::set<std::string> used;
    auto word = [&] {
        for (;;) {
            std::string w;
            const std::size_t syllables = 2 + rng.below(2);
            for (std::size_t s = 0; s < syllables; ++s) {
                w += kConsonants[rng.below(14)];
                w += kVowels[rng.below(5)];
            }
            w += kConsonants[rng.below(14)];
            if (used.insert(w).second) return w;
        }
    };
    Lexicon lex;
    for (std::size_t i = 0; i < per_group; ++i) lex.group_a.push_back(word());
    for (std::size_t i = 0; i < per_group; ++i) lex.group_b.push_back(word());
    for (std::size_t i = 0; i < neutral; ++i) lex.neutral.push_back(word());
    return lex;
}

std::vector<std::string> generate_domain_corpus(const Lexicon& lex, const CorpusSpec& spec, Rng& rng) {
    std::vector<std::string> docs;
    docs.reserve(spec.documents);
    for (std::size_t d = 0; d < spec.documents; ++d) {
        const auto& group = d % 2 == 0 ? lex.group_a : lex.group_b;
        std::vector<std::string> words;
        for (std::size_t i = 0; i < spec.words_per_document; ++i)
            words.push_back(rng.uniform() < spec.topical_share ? pick(group, rng) : pick(lex.neutral, rng));
        docs.push_back(join_words(words));
    }
    return docs;
}

std::vector<SyntheticExample> generate_task(const Lexicon& lex, std::size_t n, const TaskSpec& spec, Rng& rng) {
    std::vector<SyntheticExample> out;
    out.reserve(n);
    for (std::size_t e = 0; e < n; ++e) {
        const int label = static_cast<int>(e % 2);
        const auto& group = label == 0 ? lex.group_a : lex.group_b;
        std::vector<std::string> words;
        for (std::size_t i = 0; i < spec.lexicon_words; ++i) words.push_back(pick(group, rng));
        for (std::size_t i = 0; i < spec.neutral_words; ++i) words.push_back(pick(lex.neutral, rng));
        rng.shuffle(words);
        const int shown = rng.uniform() < spec.label_noise ? 1 - label : label;
        out.push_back({join_words(words), shown});
    }
    return out;
}

void write_fixture(const std::string& dir, const FixtureSpec& spec) {
    Rng rng(spec.seed);
    const Lexicon lex = make_lexicon(30, 40, mix_seed(spec.seed, 1));
    const fs::path root(dir);
    fs::create_directories(root / "corpus");
    fs::create_directories(root / "filings");

    // Environmental sentence: real domain words mixed with lexicon words.
    auto env_sentence = [&](const std::vector<std::string>* group) {
        std::vector<std::string> words;
        for (int i = 0; i < 3; ++i) words.push_back(pick(kEnvWords, rng));
        for (int i = 0; i < 3; ++i) {
            const auto* g = group ? group : (rng.uniform() < 0.5 ? &lex.group_a : &lex.group_b);
            words.push_back(pick(*g, rng));
        }
        for (int i = 0; i < 3; ++i) words.push_back(pick(lex.neutral, rng));
        rng.shuffle(words);
        std::string s = join_words(words) + ".";
        s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
        return s;
    };

    for (std::size_t d = 0; d < spec.corpus_documents; ++d) {
        const auto* group = d % 2 == 0 ? &lex.group_a : &lex.group_b;
        std::string body;
        for (int s = 0; s < 5; ++s) body += env_sentence(group) + " ";
        body += pick(kFinanceSentences, rng) + "\n";
        char name[32];
        std::snprintf(name, sizeof name, "doc_%03zu.txt", d);
        write_file(root / "corpus" / name, body);
    }

    std::string scores = "ticker,year,quarter,env_score\n";
    std::string manifest;
    for (std::size_t t = 0; t < spec.tickers; ++t) {
        const std::string ticker = std::string("T") + static_cast<char>('A' + t / 26) + static_cast<char>('A' + t % 26);
        double score = std::round((5.0 + 20.0 * rng.uniform()) * 10.0) / 10.0;
        bool first = true;
        for (int y = spec.first_year; y < spec.first_year + spec.years; ++y) {
            for (int q = 1; q <= 4; ++q) {
                double delta = 0.0;
                if (!first && rng.uniform() >= spec.zero_share) {
                    const double mag = std::round((0.1 + 1.9 * rng.uniform()) * 10.0) / 10.0;
                    delta = rng.uniform() < 0.5 ? -mag : mag;
                }
                score = std::round((score + delta) * 10.0) / 10.0;
                first = false;

                // ticker 0 has no 2015Q2 score (a gap); ticker 1 has no 2016Q3 filing
                const bool drop_score = t == 0 && y == spec.first_year + 1 && q == 2;
                const bool drop_filing = t == 1 && y == spec.first_year + 2 && q == 3;
                char line[96];
                std::snprintf(line, sizeof line, "%s,%d,%d,%.1f\n", ticker.c_str(), y, q, score);
                if (!drop_score) scores += line;
                if (drop_filing) continue;

                const bool noisy = rng.uniform() < spec.label_noise;
                const std::vector<std::string>* group = nullptr;
                if (delta != 0.0) group = (delta > 0) != noisy ? &lex.group_b : &lex.group_a;
                std::vector<std::string> sentences;
                const std::size_t finance = 6 + rng.below(5);
                for (std::size_t i = 0; i < finance; ++i) sentences.push_back(pick(kFinanceSentences, rng));
                const std::size_t env = 2 + rng.below(2);
                for (std::size_t i = 0; i < env; ++i) sentences.push_back(env_sentence(group));
                rng.shuffle(sentences);
                std::string body = "Quarterly report of " + ticker + " Inc. for fiscal " + std::to_string(y) + ".\n";
                for (const auto& s : sentences) body += s + " ";
                body += "\n";
                const std::string file = ticker + "_" + std::to_string(y) + "Q" + std::to_string(q) + ".txt";
                write_file(root / "filings" / file, body);
                manifest += "{\"ticker\":\"" + ticker + "\",\"year\":" + std::to_string(y) +
                            ",\"quarter\":" + std::to_string(q) + ",\"path\":\"filings/" + file + "\"}\n";
            }
        }
    }
    write_file(root / "scores.csv", scores);
    write_file(root / "filings.jsonl", manifest);
    write_file(root / "pipeline.cfg",
               "# Desk-scale settings for the shipped fixture.\n"
               "seq_len = 512\n"
               "hidden = 32\n"
               "layers = 2\n"
               "heads = 4\n"
               "ffn = 64\n"
               "dropout = 0.1\n"
               "vocab_size = 1500\n"
               "vocab_min_freq = 2\n"
               "mask_rate = 0.15\n"
               "pretrain_lr = 1e-3\n"
               "pretrain_epochs = 10\n"
               "pretrain_batch = 8\n"
               "lr = 2e-3\n"
               "eps = 1e-8\n"
               "epochs = 30\n"
               "batch = 8\n"
               "top_k = 3\n"
               "split = 0.7,0.15,0.15\n");
}

} // namespace esglm
