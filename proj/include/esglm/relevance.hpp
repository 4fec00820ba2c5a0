#ifndef ESGLM_RELEVANCE_HPP
#define ESGLM_RELEVANCE_HPP

#include "esglm/encoder.hpp"
#include "esglm/tokenizer.hpp"

#include <Eigen/Core>

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace esglm {

struct Sentence {
    std::string text;
    std::size_t doc_offset = 0;
    std::size_t index = 0;
};

const std::vector<std::string>& default_abbreviations();

// Splits after '.', '!' or '?' runs that are followed by whitespace or the end
// of text. A single period after a listed abbreviation or between digits is
// not a boundary. Segments without any non-delimiter content are dropped.
std::vector<Sentence> segment_sentences(std::string_view text,
                                        const std::vector<std::string>& abbreviations = default_abbreviations());

struct SentenceEmbedding {
    Eigen::VectorXd vector;
    double norm = 0.0;
    bool is_zero = true;
};

// Cosine of the angle between u and v; -infinity if either has zero length.
double cosine_similarity(const Eigen::VectorXd& u, const Eigen::VectorXd& v);
double cosine_similarity(const SentenceEmbedding& u, const SentenceEmbedding& v);

// Feedforward head of the averaging encoder: d -> d_e (GELU) -> d_e.
struct DanParams {
    Matrix w1, b1, w2, b2;
};

DanParams make_dan_params(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed);

// Averages token embeddings over the non-special pieces of a sentence, passes
// the mean through the DAN head and L2-normalizes. Word order never matters.
class DanEmbedder {
public:
    DanEmbedder(const Vocab& vocab, Matrix token_embeddings, DanParams dan);

    SentenceEmbedding embed(std::string_view sentence) const;
    // Mean of token embeddings before the feedforward head; empty when no
    // non-special token is present.
    Eigen::VectorXd average(std::string_view sentence) const;

    const Vocab& vocab() const { return vocab_; }

private:
    const Vocab& vocab_;
    Matrix embeddings_;
    DanParams dan_;
};

using Embedder = std::function<SentenceEmbedding(std::string_view)>;

enum class Aggregation { Max, Mean };

inline constexpr std::string_view kDefaultBenchmark =
    "climate emissions environmental regulation carbon energy water waste pollution sustainability remediation";

struct ExtractionConfig {
    std::size_t top_k = 3;
    std::vector<std::string> benchmark_sentences{std::string(kDefaultBenchmark)};
    Aggregation aggregation = Aggregation::Max;

    void validate() const;
};

struct ScoredSentence {
    std::size_t index = 0;
    double score = 0.0;
    std::string text;
};

struct ExtractedInput {
    std::string doc_id;
    std::vector<ScoredSentence> selected; // descending score, ties by index
    std::vector<TokenId> token_ids;       // selected sentences' tokens, in order

    std::string excerpt() const;
};

// Scores each sentence against the benchmarks and keeps the best top_k.
ExtractedInput extract_top_k(std::string_view text, const ExtractionConfig& cfg, const Embedder& embedder,
                             const Vocab& vocab);

} // namespace esglm

#endif // ESGLM_RELEVANCE_HPP
