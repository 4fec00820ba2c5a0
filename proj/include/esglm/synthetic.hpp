#ifndef ESGLM_SYNTHETIC_HPP
#define ESGLM_SYNTHETIC_HPP

#include "esglm/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace esglm {

// A hidden "domain lexicon": two polar word groups plus neutral filler. The
// same lexicon drives an unlabeled corpus (documents are topical, one group
// each) and a labeled task (label = group of the lexicon words present).
struct Lexicon {
    std::vector<std::string> group_a; // label 0
    std::vector<std::string> group_b; // label 1
    std::vector<std::string> neutral;
};

// Deterministic pronounceable pseudo-words, unique across the three groups.
Lexicon make_lexicon(std::size_t per_group, std::size_t neutral, std::uint64_t seed);

struct CorpusSpec {
    std::size_t documents = 300;
    std::size_t words_per_document = 24;
    double topical_share = 0.5; // fraction of words drawn from the document's group
};

std::vector<std::string> generate_domain_corpus(const Lexicon& lex, const CorpusSpec& spec, Rng& rng);

struct TaskSpec {
    std::size_t lexicon_words = 3; // polar words per example
    std::size_t neutral_words = 9;
    double label_noise = 0.0;      // probability the label is flipped
};

struct SyntheticExample {
    std::string text;
    int label = 0;
};

std::vector<SyntheticExample> generate_task(const Lexicon& lex, std::size_t n, const TaskSpec& spec, Rng& rng);

// End-to-end fixture: corpus/*.txt, filings/*.txt, filings.jsonl, scores.csv
// and pipeline.cfg under `dir`.
struct FixtureSpec {
    std::uint64_t seed = 2024;
    std::size_t tickers = 12;
    int first_year = 2014;
    int years = 5;
    std::size_t corpus_documents = 160;
    double zero_share = 0.6;
    double label_noise = 0.15;
};

void write_fixture(const std::string& dir, const FixtureSpec& spec);

} // namespace esglm

#endif // ESGLM_SYNTHETIC_HPP
