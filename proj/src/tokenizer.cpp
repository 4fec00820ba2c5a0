#include "esglm/tokenizer.hpp"

#include "esglm/error.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>

namespace esglm {

namespace {

constexpr std::size_t kMaxWordChars = 100;

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }

std::string strip_prefix(const std::string& piece) {
    if (piece.starts_with(kContinuationPrefix)) return piece.substr(kContinuationPrefix.size());
    return piece;
}

} // namespace

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    static constexpr std::string_view specials[] = {kPadToken, kUnkToken, kClsToken, kSepToken,
                                                    kMaskToken};
    if (tokens_.size() < static_cast<std::size_t>(kNumSpecial))
        throw Error(ErrorKind::InvalidInput, "vocabulary must start with the five special tokens");
    for (TokenId i = 0; i < kNumSpecial; ++i) {
        if (tokens_[i] != specials[i])
            throw Error(ErrorKind::InvalidInput,
                        "special token at id " + std::to_string(i) + " must be " + std::string(specials[i]));
    }
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        const auto& t = tokens_[i];
        if (t.empty() || t == kContinuationPrefix)
            throw Error(ErrorKind::InvalidInput, "empty token at id " + std::to_string(i));
        if (!index_.emplace(t, static_cast<TokenId>(i)).second)
            throw Error(ErrorKind::InvalidInput, "duplicate token '" + t + "'");
    }
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open vocabulary file " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    try {
        return Vocab(std::move(tokens));
    } catch (const Error& e) {
        throw Error(ErrorKind::ParseError, path + ": " + e.what());
    }
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write vocabulary file " + path);
    for (const auto& t : tokens_) out << t << '\n';
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path);
}

const std::string& Vocab::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw Error(ErrorKind::InvalidId, "token id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(std::string_view token) const { return find(token) >= 0; }

TokenId Vocab::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? -1 : it->second;
}

std::vector<std::string> pre_tokenize(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_space(c)) {
            flush();
        } else if (is_punct(c)) {
            flush();
            words.emplace_back(1, ch);
        } else {
            current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
        }
    }
    flush();
    return words;
}

std::vector<std::string> utf8_chars(std::string_view word) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < word.size()) {
        const auto c = static_cast<unsigned char>(word[i]);
        std::size_t len = 1;
        if ((c & 0xE0) == 0xC0) len = 2;
        else if ((c & 0xF0) == 0xE0) len = 3;
        else if ((c & 0xF8) == 0xF0) len = 4;
        if (i + len > word.size()) len = 1;
        for (std::size_t k = 1; k < len; ++k) {
            if ((static_cast<unsigned char>(word[i + k]) & 0xC0) != 0x80) {
                len = 1;
                break;
            }
        }
        out.emplace_back(word.substr(i, len));
        i += len;
    }
    return out;
}

Vocab train_vocab(std::span<const std::string> corpus, const VocabTrainingConfig& config) {
    if (corpus.empty()) throw Error(ErrorKind::InvalidInput, "vocabulary corpus is empty");

    std::map<std::string, std::size_t> word_freq;
    for (const auto& doc : corpus)
        for (auto& w : pre_tokenize(doc)) ++word_freq[w];

    // Symbols are interned so pair counting works on integers.
    std::vector<std::string> symbols;
    std::unordered_map<std::string, std::uint32_t> symbol_ids;
    auto intern = [&](const std::string& s) {
        auto [it, inserted] = symbol_ids.emplace(s, static_cast<std::uint32_t>(symbols.size()));
        if (inserted) symbols.push_back(s);
        return it->second;
    };

    struct Word {
        std::vector<std::uint32_t> pieces;
        std::size_t freq;
    };
    std::vector<Word> words;
    std::set<std::string> alphabet;
    for (const auto& [w, f] : word_freq) {
        const auto chars = utf8_chars(w);
        if (chars.size() > kMaxWordChars) continue;
        Word word{{}, f};
        for (std::size_t i = 0; i < chars.size(); ++i) {
            std::string s = i == 0 ? chars[i] : std::string(kContinuationPrefix) + chars[i];
            alphabet.insert(s);
            word.pieces.push_back(intern(s));
        }
        words.push_back(std::move(word));
    }

    if (config.target_size < alphabet.size() + kNumSpecial)
        throw Error(ErrorKind::InvalidConfig,
                    "target_size " + std::to_string(config.target_size) + " is below alphabet size " +
                        std::to_string(alphabet.size()) + " + 5 specials");

    std::vector<std::string> tokens = {std::string(kPadToken), std::string(kUnkToken), std::string(kClsToken),
                                       std::string(kSepToken), std::string(kMaskToken)};
    std::set<std::string> in_vocab;
    for (const auto& s : alphabet) {
        tokens.push_back(s);
        in_vocab.insert(s);
    }

    auto pair_key = [](std::uint32_t a, std::uint32_t b) {
        return (static_cast<std::uint64_t>(a) << 32) | b;
    };

    while (tokens.size() < config.target_size) {
        std::unordered_map<std::uint64_t, std::size_t> counts;
        for (const auto& w : words)
            for (std::size_t i = 0; i + 1 < w.pieces.size(); ++i)
                counts[pair_key(w.pieces[i], w.pieces[i + 1])] += w.freq;
        if (counts.empty()) break;

        // (freq desc, merged surface asc, initial first, left asc, right asc)
        using Rank = std::tuple<std::size_t, std::string, bool, std::string, std::string>;
        std::uint64_t best_key = 0;
        Rank best{0, {}, false, {}, {}};
        bool have_best = false;
        std::size_t max_freq = 0;
        for (const auto& [key, freq] : counts) max_freq = std::max(max_freq, freq);
        for (const auto& [key, freq] : counts) {
            if (freq != max_freq) continue;
            const auto& left = symbols[key >> 32];
            const auto& right = symbols[key & 0xffffffffu];
            Rank r{freq, strip_prefix(left) + strip_prefix(right), left.starts_with(kContinuationPrefix), left,
                   right};
            auto better = [](const Rank& a, const Rank& b) {
                if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
                return std::tie(std::get<1>(a), std::get<2>(a), std::get<3>(a), std::get<4>(a)) <
                       std::tie(std::get<1>(b), std::get<2>(b), std::get<3>(b), std::get<4>(b));
            };
            if (!have_best || better(r, best)) {
                best = std::move(r);
                best_key = key;
                have_best = true;
            }
        }
        if (std::get<0>(best) < config.min_freq) break;

        const std::uint32_t left = static_cast<std::uint32_t>(best_key >> 32);
        const std::uint32_t right = static_cast<std::uint32_t>(best_key & 0xffffffffu);
        const std::string merged = symbols[left] + strip_prefix(symbols[right]);
        const std::uint32_t merged_id = intern(merged);
        if (in_vocab.insert(merged).second) tokens.push_back(merged);

        for (auto& w : words) {
            std::vector<std::uint32_t> next;
            next.reserve(w.pieces.size());
            for (std::size_t i = 0; i < w.pieces.size(); ++i) {
                if (i + 1 < w.pieces.size() && w.pieces[i] == left && w.pieces[i + 1] == right) {
                    next.push_back(merged_id);
                    ++i;
                } else {
                    next.push_back(w.pieces[i]);
                }
            }
            w.pieces = std::move(next);
        }
    }
    return Vocab(std::move(tokens));
}

std::vector<TokenId> encode_word(std::string_view word, const Vocab& vocab) {
    const auto chars = utf8_chars(word);
    if (chars.empty()) return {};
    if (chars.size() > kMaxWordChars) return {kUnkId};

    std::vector<TokenId> pieces;
    std::size_t start = 0;
    while (start < chars.size()) {
        TokenId found = -1;
        std::size_t found_end = start;
        for (std::size_t end = chars.size(); end > start; --end) {
            std::string candidate = start > 0 ? std::string(kContinuationPrefix) : std::string();
            for (std::size_t k = start; k < end; ++k) candidate += chars[k];
            const TokenId id = vocab.find(candidate);
            if (id >= kNumSpecial) {
                found = id;
                found_end = end;
                break;
            }
        }
        if (found < 0) return {kUnkId};
        pieces.push_back(found);
        start = found_end;
    }
    return pieces;
}

std::vector<TokenId> encode(std::string_view text, const Vocab& vocab) {
    std::vector<TokenId> ids;
    for (const auto& word : pre_tokenize(text)) {
        const auto pieces = encode_word(word, vocab);
        ids.insert(ids.end(), pieces.begin(), pieces.end());
    }
    return ids;
}

std::string decode(std::span<const TokenId> ids, const Vocab& vocab) {
    std::string out;
    for (const TokenId id : ids) {
        const std::string& piece = vocab.token(id);
        if (Vocab::is_special(id) && id != kUnkId) continue;
        if (id != kUnkId && piece.starts_with(kContinuationPrefix) && !out.empty()) {
            out += piece.substr(kContinuationPrefix.size());
        } else {
            if (!out.empty()) out += ' ';
            out += piece;
        }
    }
    return out;
}

EncodedInput prepare_input(std::span<const TokenId> token_ids, std::size_t max_seq_len) {
    if (max_seq_len < 3)
        throw Error(ErrorKind::InvalidConfig, "max_seq_len must be at least 3, got " + std::to_string(max_seq_len));
    const std::size_t body = std::min(token_ids.size(), max_seq_len - 2);
    EncodedInput out;
    out.ids.assign(max_seq_len, kPadId);
    out.attention_mask.assign(max_seq_len, 0);
    out.ids[0] = kClsId;
    std::copy_n(token_ids.begin(), body, out.ids.begin() + 1);
    out.ids[body + 1] = kSepId;
    out.real_len = body + 2;
    std::fill_n(out.attention_mask.begin(), out.real_len, std::uint8_t{1});
    return out;
}

} // namespace esglm
