#ifndef ESGLM_TOKENIZER_HPP
#define ESGLM_TOKENIZER_HPP

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace esglm {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kClsId = 2;
inline constexpr TokenId kSepId = 3;
inline constexpr TokenId kMaskId = 4;
inline constexpr TokenId kNumSpecial = 5;

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kMaskToken = "[MASK]";

inline constexpr std::string_view kContinuationPrefix = "##";

// Immutable WordPiece inventory. Ids are dense; the five specials occupy 0..4.
class Vocab {
public:
    // Builds from an ordered token list. The first five entries must be the
    // specials in PAD, UNK, CLS, SEP, MASK order; tokens must be unique.
    explicit Vocab(std::vector<std::string> tokens);

    static Vocab load(const std::string& path);
    void save(const std::string& path) const;

    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::string& token(TokenId id) const;
    bool contains(std::string_view token) const;
    // -1 when absent.
    TokenId find(std::string_view token) const;

    static bool is_special(TokenId id) { return id >= 0 && id < kNumSpecial; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

// Fixed-length model input. Invariant: attention_mask is a prefix of ones of
// length real_len; ids[0] is CLS and ids[real_len-1] is SEP.
struct EncodedInput {
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> attention_mask;
    std::size_t real_len = 0;

    std::size_t size() const { return ids.size(); }
};

// Lowercase, split on whitespace, and split ASCII punctuation into
// single-character words.
std::vector<std::string> pre_tokenize(std::string_view text);

// Splits a UTF-8 word into code points; invalid bytes become single units.
std::vector<std::string> utf8_chars(std::string_view word);

struct VocabTrainingConfig {
    std::size_t target_size = 8000;
    std::size_t min_freq = 2;
};

// Frequency-driven pair merging over character sequences with "##"-marked
// continuations. Highest pair frequency wins; ties go to the lexicographically
// smaller merged surface, then word-initial pairs, then (left, right) order.
Vocab train_vocab(std::span<const std::string> corpus, const VocabTrainingConfig& config);

// Greedy longest-match-first WordPiece over pre_tokenize output. A word that
// cannot be fully covered becomes a single UNK.
std::vector<TokenId> encode(std::string_view text, const Vocab& vocab);

// Pieces for one pre-tokenized word, or {UNK}.
std::vector<TokenId> encode_word(std::string_view word, const Vocab& vocab);

// "##" pieces attach to the previous piece, others are space-joined.
// PAD/CLS/SEP/MASK are dropped; UNK renders as "[UNK]".
std::string decode(std::span<const TokenId> ids, const Vocab& vocab);

// [CLS] + head of body + [SEP] + padding, exactly max_seq_len long.
EncodedInput prepare_input(std::span<const TokenId> token_ids, std::size_t max_seq_len = 512);

} // namespace esglm

#endif // ESGLM_TOKENIZER_HPP
