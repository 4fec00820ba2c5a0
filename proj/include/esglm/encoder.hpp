#ifndef ESGLM_ENCODER_HPP
#define ESGLM_ENCODER_HPP

#include "esglm/rng.hpp"
#include "esglm/tokenizer.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace esglm {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Target marker for positions that do not contribute to a loss.
inline constexpr int kIgnoreIndex = -100;

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t max_seq_len = 512;
    std::size_t hidden_dim = 32;
    std::size_t num_layers = 2;
    std::size_t num_heads = 4;
    std::size_t ffn_dim = 128;
    double dropout_rate = 0.1;

    void validate() const;
    std::size_t head_dim() const { return hidden_dim / num_heads; }
};

struct TrainConfig {
    double learning_rate = 2e-5;
    double adam_epsilon = 1e-8;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    std::size_t epochs = 8;
    std::size_t batch_size = 8;
    std::uint64_t seed = 42;
    // Round parameters to float32 after each update so checkpoints are exact.
    bool f32_storage = true;

    void validate() const;
};

// Biases and layernorm vectors are stored as 1xN matrices so every tensor can
// be visited uniformly.
struct LayerParams {
    Matrix wq, bq, wk, bk, wv, bv, wo, bo;
    Matrix ln1_gain, ln1_bias;
    Matrix w1, b1, w2, b2;
    Matrix ln2_gain, ln2_bias;
};

// The MLM output projection is the token embedding matrix itself (tied), so
// only its bias is a separate tensor.
struct ParameterSet {
    Matrix token_embeddings;    // vocab x d
    Matrix position_embeddings; // max_seq_len x d
    std::vector<LayerParams> layers;
    Matrix mlm_bias;     // 1 x vocab
    Matrix pooler_w;     // d x d
    Matrix pooler_b;     // 1 x d
    Matrix classifier_w; // d x 2
    Matrix classifier_b; // 1 x 2

    const Matrix& mlm_projection() const { return token_embeddings; }

    // Visits tensors in a fixed canonical order with their checkpoint names.
    void for_each(const std::function<void(const std::string&, Matrix&)>& fn);
    void for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const;

    std::size_t parameter_count() const;
    bool all_finite() const;
};

// Same-shaped tensors set to zero.
ParameterSet zeros_like(const ParameterSet& params);

// Truncated normal (std 0.02) weights, zero biases, unit layernorm gains.
ParameterSet init_parameters(const ModelConfig& config, std::uint64_t seed, bool f32_storage = true);

// Pooler and classifier only; used to give every fine-tuning arm the same head.
void init_classifier_head(ParameterSet& params, const ModelConfig& config, std::uint64_t seed,
                          bool f32_storage = true);

struct TensorSpec {
    std::string name;
    std::size_t rows;
    std::size_t cols;
};

// Canonical tensor names and shapes, in ParameterSet::for_each order.
std::vector<TensorSpec> tensor_specs(const ModelConfig& config);

// Throws ShapeError when tensor shapes disagree with the config.
void check_shapes(const ParameterSet& params, const ModelConfig& config);

enum class Mode { Train, Eval };
enum class Objective { Mlm, Classify };

struct ForwardOptions {
    Mode mode = Mode::Eval;
    std::uint64_t dropout_seed = 0;
    // Compute hidden rows for real positions only. Real rows never attend to
    // padding, so their values match the full computation up to rounding.
    bool real_rows_only = false;
};

struct LayerCache {
    Matrix input;
    Matrix q, k, v;
    std::vector<Matrix> probs; // per head: rows x keys
    Matrix context;
    Matrix attn_drop;          // empty when dropout is off
    Matrix ln1_xhat;
    Eigen::VectorXd ln1_inv_std;
    Matrix ln1_out;
    Matrix ffn_pre;
    Matrix ffn_act;
    Matrix ffn_drop;
    Matrix ln2_xhat;
    Eigen::VectorXd ln2_inv_std;
};

// Activations kept for the backward pass. keys = real_len; rows is either
// real_len or the full input length.
struct EncoderCache {
    std::vector<TokenId> ids;
    std::size_t rows = 0;
    std::size_t keys = 0;
    Matrix embed_drop;
    std::vector<LayerCache> layers;
    Matrix output; // rows x d
};

EncoderCache forward_encoder_cached(const EncodedInput& input, const ParameterSet& params,
                                    const ModelConfig& config, const ForwardOptions& options = {});

// Hidden states, input.size() x d. Padding keys are excluded from attention.
Matrix forward_encoder(const EncodedInput& input, const ParameterSet& params, const ModelConfig& config,
                       const ForwardOptions& options = {});

// Per-position vocabulary logits through the tied projection (no softmax).
Matrix forward_mlm(const Matrix& hidden, const ParameterSet& params);

// Row 0 (CLS) -> tanh pooler -> 2 logits.
Eigen::RowVector2d forward_classify(const Matrix& hidden, const ParameterSet& params);

// Mean over non-ignored rows of -log softmax(row)[target].
double cross_entropy(const Matrix& logits, std::span<const int> targets, int ignore_index = kIgnoreIndex);

double gelu(double x);
double gelu_grad(double x);

struct TrainingBatch {
    std::vector<EncodedInput> inputs;
    // Mlm: per-input, per-position targets (kIgnoreIndex where unselected).
    std::vector<std::vector<int>> token_targets;
    // Classify: one label in {0, 1} per input.
    std::vector<int> labels;
};

struct GradientResult {
    ParameterSet grads;
    double loss = 0.0;
    std::size_t target_count = 0;
};

// Exact reverse-mode gradients of the batch-mean loss. In Train mode dropout
// masks are drawn from mix_seed(options.dropout_seed, example index).
GradientResult compute_gradients(const TrainingBatch& batch, const ParameterSet& params,
                                 const ModelConfig& config, Objective objective,
                                 const ForwardOptions& options = {});

// Loss only; shares the forward path with compute_gradients.
double compute_loss(const TrainingBatch& batch, const ParameterSet& params, const ModelConfig& config,
                    Objective objective, const ForwardOptions& options = {});

struct OptimizerState {
    ParameterSet m;
    ParameterSet v;
    std::uint64_t t = 0;

    static OptimizerState fresh(const ParameterSet& params);
};

// Adam with bias correction. Throws NumericError before mutating anything if
// the update would be non-finite.
void adam_step(ParameterSet& params, const ParameterSet& grads, OptimizerState& state, const TrainConfig& tc);

// Eval-mode class prediction (argmax of the two logits, ties to class 0).
int predict_class(const EncodedInput& input, const ParameterSet& params, const ModelConfig& config);
Eigen::RowVector2d classify_logits(const EncodedInput& input, const ParameterSet& params,
                                   const ModelConfig& config);

} // namespace esglm

#endif // ESGLM_ENCODER_HPP
