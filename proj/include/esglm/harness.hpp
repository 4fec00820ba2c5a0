#ifndef ESGLM_HARNESS_HPP
#define ESGLM_HARNESS_HPP

#include "esglm/baselines.hpp"
#include "esglm/checkpoint.hpp"
#include "esglm/data.hpp"
#include "esglm/encoder.hpp"

#include <json.hpp>

#include <map>
#include <span>
#include <string>
#include <vector>

namespace esglm {

// Class 1 is the positive class for confusion counts.
struct SplitMetrics {
    std::size_t count = 0;
    double accuracy = 0.0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

SplitMetrics score_predictions(std::span<const int> predictions, std::span<const int> labels);

inline constexpr const char* kSplitNames[3] = {"train", "validation", "test"};

struct Metrics {
    std::string model; // common_class | naive_bayes | base_lm | domain_lm
    Task task = Task::A;
    std::map<std::string, SplitMetrics> splits;
    nlohmann::json config = nlohmann::json::object();
};

nlohmann::json to_json(const Metrics& m);
Metrics metrics_from_json(const nlohmann::json& j);
void write_metrics(const Metrics& m, const std::string& path);
Metrics read_metrics(const std::string& path);

std::vector<int> labels_of(std::span<const LabeledExample> examples);

// Eval-mode predictions; parameters are not modified.
SplitMetrics evaluate(const ParameterSet& params, const ModelConfig& config, std::span<const LabeledExample> split);

struct FinetuneResult {
    ParameterSet params;
    Metrics metrics;
    std::vector<double> epoch_losses;
};

// Re-initializes the pooler/classifier from tc.seed, trains the whole model on
// splits.train with per-epoch seeded shuffling, then scores all three splits.
FinetuneResult run_finetune(ParameterSet init, const ModelConfig& config, const Splits& splits, Task task,
                            const TrainConfig& tc, const std::string& model_name);

Metrics run_common_class(const Splits& splits, Task task);

// Bag of words from the excerpt's word-level pre-tokenization.
TokenBag word_bag(const LabeledExample& ex);
Metrics run_naive_bayes(const Splits& splits, Task task, double alpha);

// Markdown table with one row per model and 4-decimal accuracies.
std::string render_report_markdown(std::span<const Metrics> rows);
std::string display_name(const std::string& model);
// Writes report_{task}.json and report_{task}.md.
void emit_report(std::span<const Metrics> rows, Task task, const std::string& out_dir);

// Extraction records (one JSON object per line).
struct ExtractedRecord {
    FilingKey key;
    ExtractedInput extracted;
};

nlohmann::json to_json(const ExtractedRecord& r);
ExtractedRecord extracted_from_json(const nlohmann::json& j);
void write_extracted(std::span<const ExtractedRecord> records, const std::string& path);
std::vector<ExtractedRecord> read_extracted(const std::string& path);

struct DatasetMeta {
    Task task = Task::A;
    std::size_t max_seq_len = 512;
    std::size_t vocab_size = 0;
    JoinReport report;
};

// data dir: dataset.json + train.jsonl, validation.jsonl, test.jsonl.
void write_dataset(const Splits& splits, const DatasetMeta& meta, const std::string& dir);
Splits read_dataset(const std::string& dir, DatasetMeta* meta = nullptr);

} // namespace esglm

#endif // ESGLM_HARNESS_HPP
