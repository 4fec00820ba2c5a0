#ifndef ESGLM_MLM_HPP
#define ESGLM_MLM_HPP

#include "esglm/encoder.hpp"
#include "esglm/rng.hpp"
#include "esglm/tokenizer.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace esglm {

struct MaskingConfig {
    double mask_rate = 0.15;
    double replace_with_mask = 0.8;
    double replace_with_random = 0.1;
    double keep_original = 0.1;
    std::uint64_t seed = 7;

    void validate() const;
};

struct MaskedBatch {
    std::vector<EncodedInput> inputs;             // corrupted ids
    std::vector<std::vector<int>> targets;        // original id or kIgnoreIndex
    std::vector<std::vector<std::uint8_t>> selection_mask;

    TrainingBatch as_training_batch() const { return TrainingBatch{inputs, targets, {}}; }
};

// Selects each real, non-special position with probability mask_rate, then
// corrupts it to MASK / a random non-special token / itself.
MaskedBatch mask_batch(std::span<const EncodedInput> batch, const Vocab& vocab, const MaskingConfig& mc, Rng& rng);

// Encodes each document and cuts it into consecutive windows of at most
// max_seq_len - 2 tokens, each prepared to max_seq_len.
std::vector<EncodedInput> make_windows(std::span<const std::string> docs, const Vocab& vocab,
                                       std::size_t max_seq_len);

struct PretrainResult {
    ParameterSet params;
    std::vector<double> epoch_losses; // mean batch loss per epoch
    std::vector<double> step_losses;  // loss of every batch before its update
    std::size_t window_count = 0;
};

using ProgressFn = std::function<void(std::size_t epoch, double mean_loss)>;

PretrainResult run_pretraining(std::span<const std::string> corpus_docs, const Vocab& vocab, ParameterSet params,
                               const ModelConfig& config, const TrainConfig& tc, const MaskingConfig& mc,
                               const ProgressFn& progress = {});

} // namespace esglm

#endif // ESGLM_MLM_HPP
