#include "esglm/mlm.hpp"

#include "esglm/error.hpp"

#include <cmath>

namespace esglm {

void MaskingConfig::validate() const {
    if (!(mask_rate >= 0.0 && mask_rate < 1.0)) throw Error(ErrorKind::InvalidConfig, "mask_rate must be in [0, 1)");
    if (replace_with_mask < 0.0 || replace_with_random < 0.0 || keep_original < 0.0)
        throw Error(ErrorKind::InvalidConfig, "replacement fractions must be non-negative");
    if (std::abs(replace_with_mask + replace_with_random + keep_original - 1.0) > 1e-9)
        throw Error(ErrorKind::InvalidConfig, "replacement fractions must sum to 1");
}

MaskedBatch mask_batch(std::span<const EncodedInput> batch, const Vocab& vocab, const MaskingConfig& mc, Rng& rng) {
    mc.validate();
    if (vocab.size() < static_cast<std::size_t>(kNumSpecial) + 1)
        throw Error(ErrorKind::InvalidConfig, "vocabulary has no non-special tokens to sample from");
    const std::uint64_t candidates = vocab.size() - static_cast<std::size_t>(kNumSpecial);

    MaskedBatch out;
    out.inputs.reserve(batch.size());
    for (const auto& in : batch) {
        EncodedInput corrupted = in;
        std::vector<int> targets(in.ids.size(), kIgnoreIndex);
        std::vector<std::uint8_t> selected(in.ids.size(), 0);
        for (std::size_t i = 0; i < in.real_len; ++i) {
            const TokenId original = in.ids[i];
            if (Vocab::is_special(original)) continue;
            if (rng.uniform() >= mc.mask_rate) continue;
            selected[i] = 1;
            targets[i] = original;
            const double r = rng.uniform();
            if (r < mc.replace_with_mask) {
                corrupted.ids[i] = kMaskId;
            } else if (r < mc.replace_with_mask + mc.replace_with_random) {
                corrupted.ids[i] = static_cast<TokenId>(kNumSpecial + rng.below(candidates));
            }
        }
        out.inputs.push_back(std::move(corrupted));
        out.targets.push_back(std::move(targets));
        out.selection_mask.push_back(std::move(selected));
    }
    return out;
}

std::vector<EncodedInput> make_windows(std::span<const std::string> docs, const Vocab& vocab,
                                       std::size_t max_seq_len) {
    if (max_seq_len < 3) throw Error(ErrorKind::InvalidConfig, "max_seq_len must be at least 3");
    const std::size_t body = max_seq_len - 2;
    std::vector<EncodedInput> windows;
    for (const auto& doc : docs) {
        const auto ids = encode(doc, vocab);
        for (std::size_t start = 0; start < ids.size(); start += body) {
            const std::size_t len = std::min(body, ids.size() - start);
            windows.push_back(prepare_input(std::span(ids).subspan(start, len), max_seq_len));
        }
    }
    return windows;
}

PretrainResult run_pretraining(std::span<const std::string> corpus_docs, const Vocab& vocab, ParameterSet params,
                               const ModelConfig& config, const TrainConfig& tc, const MaskingConfig& mc,
                               const ProgressFn& progress) {
    if (corpus_docs.empty()) throw Error(ErrorKind::InvalidInput, "pre-training corpus is empty");
    config.validate();
    tc.validate();
    mc.validate();
    if (config.vocab_size != vocab.size())
        throw Error(ErrorKind::CheckpointMismatch, "model vocab_size " + std::to_string(config.vocab_size) +
                                                       " differs from vocabulary size " +
                                                       std::to_string(vocab.size()));
    check_shapes(params, config);

    const auto windows = make_windows(corpus_docs, vocab, config.max_seq_len);
    if (windows.empty()) throw Error(ErrorKind::InvalidInput, "corpus produced no training windows");

    PretrainResult result;
    result.window_count = windows.size();
    OptimizerState state = OptimizerState::fresh(params);
    std::uint64_t step = 0;

    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        std::vector<std::size_t> order(windows.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng order_rng(mix_seed(tc.seed, 1000 + epoch));
        order_rng.shuffle(order);
        Rng mask_rng(mix_seed(mc.seed, epoch));

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
            std::vector<EncodedInput> chunk;
            for (std::size_t i = start; i < std::min(order.size(), start + tc.batch_size); ++i)
                chunk.push_back(windows[order[i]]);
            const MaskedBatch masked = mask_batch(chunk, vocab, mc, mask_rng);
            bool any = false;
            for (const auto& row : masked.selection_mask)
                for (auto s : row) any = any || s != 0;
            if (!any) continue;

            ForwardOptions fo;
            fo.mode = Mode::Train;
            fo.dropout_seed = mix_seed(tc.seed, step);
            const GradientResult g =
                compute_gradients(masked.as_training_batch(), params, config, Objective::Mlm, fo);
            adam_step(params, g.grads, state, tc);
            result.step_losses.push_back(g.loss);
            loss_sum += g.loss;
            ++batches;
            ++step;
        }
        const double mean = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
        result.epoch_losses.push_back(mean);
        if (progress) progress(epoch, mean);
    }
    result.params = std::move(params);
    return result;
}

} // namespace esglm
