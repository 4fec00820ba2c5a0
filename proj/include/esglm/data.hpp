#ifndef ESGLM_DATA_HPP
#define ESGLM_DATA_HPP

#include "esglm/relevance.hpp"
#include "esglm/tokenizer.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace esglm {

struct FilingDoc {
    std::string ticker;
    int year = 0;
    int quarter = 1;
    std::string text;

    std::string doc_id() const;
};

std::string make_doc_id(const std::string& ticker, int year, int quarter);

struct ScorePoint {
    int year = 0;
    int quarter = 1;
    double env_score = 0.0;
};

struct ScoreSeries {
    std::string ticker;
    std::vector<ScorePoint> points; // strictly increasing (year, quarter)
};

// Scores CSV with header `ticker,year,quarter,env_score`.
std::map<std::string, ScoreSeries> load_scores(const std::string& path);
std::map<std::string, ScoreSeries> parse_scores(std::istream& in, const std::string& source = "<scores>");

// JSON Lines manifest of {"ticker","year","quarter","path"}; relative paths
// resolve against the manifest's directory.
std::vector<FilingDoc> load_manifest(const std::string& path);

enum class Task { A, B };

Task parse_task(const std::string& s);
const char* to_string(Task task);

struct QuarterLabel {
    std::string ticker;
    int year = 0;
    int quarter = 1;
    double delta = 0.0;
    bool change = false;              // task A: |delta| > change_epsilon
    std::optional<bool> positive;     // task B, present iff change

    std::string doc_id() const { return make_doc_id(ticker, year, quarter); }
};

// One label per pair of adjacent quarters; no delta is taken across a gap.
std::vector<QuarterLabel> derive_labels(const ScoreSeries& series, double change_epsilon = 0.0);

// Binary class used by the classifiers: task A change=1, task B positive=1.
int class_label(const QuarterLabel& label, Task task);

struct LabeledExample {
    std::string doc_id;
    std::string ticker;
    int year = 0;
    int quarter = 1;
    double delta = 0.0;
    int label = 0;
    ExtractedInput extracted;
    EncodedInput input;
};

struct JoinReport {
    std::size_t filing_count = 0;
    std::size_t label_count = 0;
    std::size_t matched = 0;
    std::size_t unmatched_filings = 0;
    std::size_t unmatched_labels = 0;
};

struct Dataset {
    std::vector<LabeledExample> examples; // ordered by doc_id
    JoinReport report;
};

// Minimal identity of a filing for joining.
struct FilingKey {
    std::string ticker;
    int year = 0;
    int quarter = 1;
};

using ExtractFn = std::function<ExtractedInput(std::size_t filing_index)>;

// Inner join of filings to labels on (ticker, year, quarter). Task B keeps
// only change rows. `extract` runs once per matched filing.
Dataset build_dataset(std::span<const FilingKey> filings, std::span<const QuarterLabel> labels, const ExtractFn& extract,
                      Task task, std::size_t max_seq_len = 512);

Dataset build_dataset(std::span<const FilingDoc> filings, std::span<const QuarterLabel> labels,
                      const std::function<ExtractedInput(const FilingDoc&)>& extractor, Task task,
                      std::size_t max_seq_len = 512);

enum class SplitMode { Stratified, Temporal };

struct SplitSpec {
    double train_frac = 0.7;
    double val_frac = 0.15;
    double test_frac = 0.15;
    std::uint64_t seed = 13;
    SplitMode mode = SplitMode::Stratified;
    bool group_by_ticker = false;

    void validate() const;
};

struct Splits {
    std::vector<LabeledExample> train;
    std::vector<LabeledExample> validation;
    std::vector<LabeledExample> test;
};

// Integer allocation of n items to the fractions: floors first, then the
// remainder to the largest fractional parts (earlier split wins ties).
std::array<std::size_t, 3> largest_remainder(std::size_t n, const std::array<double, 3>& fractions);

Splits split_dataset(std::span<const LabeledExample> dataset, const SplitSpec& spec);

struct HistogramBin {
    double start = 0.0;
    double end = 0.0;
    std::size_t count = 0;
};

struct EdaConfig {
    std::size_t delta_bins = 20;
    std::size_t sentence_bin_width = 5;
};

struct EdaStats {
    std::size_t label_count = 0;
    std::size_t zero_delta_count = 0;
    double zero_delta_fraction = 0.0;
    std::vector<HistogramBin> delta_histogram;
    std::size_t sentence_count = 0;
    std::vector<HistogramBin> sentence_length_histogram; // token counts, [start, end)
};

// Equal-width bins over [min, max]; the last bin is closed. A constant input
// yields a single bin.
std::vector<HistogramBin> equal_width_histogram(std::span<const double> values, std::size_t bins);

EdaStats eda_stats(std::span<const QuarterLabel> labels, std::span<const FilingDoc> filings, const Vocab& vocab,
                   const EdaConfig& config = {});

// Writes eda.json, delta_hist.csv and sentlen_hist.csv.
void write_eda(const EdaStats& stats, const std::string& out_dir);

} // namespace esglm

#endif // ESGLM_DATA_HPP
