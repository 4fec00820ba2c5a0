#include "esglm/relevance.hpp"

#include "esglm/error.hpp"
#include "esglm/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

namespace esglm {

namespace {

bool is_delim(char c) { return c == '.' || c == '!' || c == '?'; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

// Word immediately preceding position `end`, with opening brackets/quotes trimmed.
std::string_view word_before(std::string_view text, std::size_t end) {
    std::size_t b = end;
    while (b > 0 && !is_space(text[b - 1])) --b;
    std::string_view w = text.substr(b, end - b);
    while (!w.empty() && (w.front() == '(' || w.front() == '"' || w.front() == '\'' || w.front() == '['))
        w.remove_prefix(1);
    return w;
}

bool ends_with_abbreviation(std::string_view text, std::size_t period,
                            const std::vector<std::string>& abbreviations) {
    const std::string_view w = word_before(text, period);
    if (w.empty()) return false;
    for (const auto& abbr : abbreviations) {
        const auto space = abbr.find(' ');
        if (space == std::string::npos) {
            if (w == abbr) return true;
            continue;
        }
        // two-word abbreviation such as "et al"
        const std::string_view last = std::string_view(abbr).substr(space + 1);
        const std::string_view first = std::string_view(abbr).substr(0, space);
        if (w != last) continue;
        std::size_t b = period - w.size();
        while (b > 0 && is_space(text[b - 1])) --b;
        if (b < period - w.size() && word_before(text, b) == first) return true;
    }
    return false;
}

void push_segment(std::string_view text, std::size_t begin, std::size_t end, std::vector<Sentence>& out) {
    while (begin < end && is_space(text[begin])) ++begin;
    while (end > begin && is_space(text[end - 1])) --end;
    const std::string_view seg = text.substr(begin, end - begin);
    if (std::all_of(seg.begin(), seg.end(), [](char c) { return is_space(c) || is_delim(c); })) return;
    out.push_back(Sentence{std::string(seg), begin, out.size()});
}

} // namespace

const std::vector<std::string>& default_abbreviations() {
    static const std::vector<std::string> list = {"Inc", "Corp", "No", "U.S", "Mr", "Ms", "Dr", "et al"};
    return list;
}

std::vector<Sentence> segment_sentences(std::string_view text, const std::vector<std::string>& abbreviations) {
    std::vector<Sentence> out;
    std::size_t start = 0;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        if (!is_delim(text[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < n && is_delim(text[j + 1])) ++j;
        bool boundary = j + 1 == n || is_space(text[j + 1]);
        if (boundary && i == j && text[i] == '.') {
            const bool between_digits = i > 0 && is_digit(text[i - 1]) && j + 1 < n && is_digit(text[j + 1]);
            if (between_digits || ends_with_abbreviation(text, i, abbreviations)) boundary = false;
        }
        if (boundary) {
            push_segment(text, start, j + 1, out);
            start = j + 1;
        }
        i = j + 1;
    }
    if (start < n) push_segment(text, start, n, out);
    return out;
}

double cosine_similarity(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    if (u.size() != v.size()) throw Error(ErrorKind::ShapeError, "cosine of vectors with different sizes");
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) return -std::numeric_limits<double>::infinity();
    return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

double cosine_similarity(const SentenceEmbedding& u, const SentenceEmbedding& v) {
    if (u.is_zero || v.is_zero) return -std::numeric_limits<double>::infinity();
    return cosine_similarity(u.vector, v.vector);
}

DanParams make_dan_params(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed) {
    Rng rng(seed);
    auto gaussian = [&](std::size_t r, std::size_t c) {
        Matrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        const double stddev = 1.0 / std::sqrt(static_cast<double>(r));
        for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.normal() * stddev;
        return m;
    };
    DanParams p;
    p.w1 = gaussian(input_dim, output_dim);
    p.b1 = Matrix::Zero(1, static_cast<Eigen::Index>(output_dim));
    p.w2 = gaussian(output_dim, output_dim);
    p.b2 = Matrix::Zero(1, static_cast<Eigen::Index>(output_dim));
    return p;
}

DanEmbedder::DanEmbedder(const Vocab& vocab, Matrix token_embeddings, DanParams dan)
    : vocab_(vocab), embeddings_(std::move(token_embeddings)), dan_(std::move(dan)) {
    if (static_cast<std::size_t>(embeddings_.rows()) != vocab_.size())
        throw Error(ErrorKind::ShapeError, "embedding rows differ from vocabulary size");
    if (dan_.w1.rows() != embeddings_.cols() || dan_.b1.cols() != dan_.w1.cols() ||
        dan_.w2.rows() != dan_.w1.cols() || dan_.b2.cols() != dan_.w2.cols())
        throw Error(ErrorKind::ShapeError, "DAN head shapes are inconsistent");
}

Eigen::VectorXd DanEmbedder::average(std::string_view sentence) const {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(embeddings_.cols());
    std::size_t count = 0;
    for (const TokenId id : encode(sentence, vocab_)) {
        if (Vocab::is_special(id)) continue;
        sum += embeddings_.row(id);
        ++count;
    }
    if (count == 0) return {};
    return (sum / static_cast<double>(count)).transpose();
}

SentenceEmbedding DanEmbedder::embed(std::string_view sentence) const {
    SentenceEmbedding out;
    const Eigen::VectorXd avg = average(sentence);
    if (avg.size() == 0) {
        out.vector = Eigen::VectorXd::Zero(dan_.w2.cols());
        return out;
    }
    Eigen::RowVectorXd h = avg.transpose() * dan_.w1 + dan_.b1.row(0);
    h = h.unaryExpr([](double x) { return gelu(x); });
    const Eigen::RowVectorXd y = h * dan_.w2 + dan_.b2.row(0);
    const double n = y.norm();
    if (n == 0.0 || !std::isfinite(n)) {
        out.vector = Eigen::VectorXd::Zero(dan_.w2.cols());
        return out;
    }
    out.vector = (y / n).transpose();
    out.norm = 1.0;
    out.is_zero = false;
    return out;
}

void ExtractionConfig::validate() const {
    if (top_k < 1) throw Error(ErrorKind::InvalidConfig, "top_k must be at least 1");
    if (benchmark_sentences.empty()) throw Error(ErrorKind::InvalidConfig, "at least one benchmark sentence required");
}

std::string ExtractedInput::excerpt() const {
    std::string out;
    for (const auto& s : selected) {
        if (!out.empty()) out += ' ';
        out += s.text;
    }
    return out;
}

ExtractedInput extract_top_k(std::string_view text, const ExtractionConfig& cfg, const Embedder& embedder,
                             const Vocab& vocab) {
    cfg.validate();
    const auto sentences = segment_sentences(text);
    if (sentences.empty()) throw Error(ErrorKind::EmptyDocument, "document has no sentences");

    std::vector<SentenceEmbedding> benchmarks;
    for (const auto& b : cfg.benchmark_sentences) benchmarks.push_back(embedder(b));

    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    std::vector<double> scores(sentences.size());
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        const SentenceEmbedding e = embedder(sentences[i].text);
        if (cfg.aggregation == Aggregation::Max) {
            double best = kNegInf;
            for (const auto& b : benchmarks) best = std::max(best, cosine_similarity(e, b));
            scores[i] = best;
        } else {
            double sum = 0.0;
            for (const auto& b : benchmarks) sum += cosine_similarity(e, b);
            scores[i] = sum / static_cast<double>(benchmarks.size());
        }
    }

    std::vector<std::size_t> order(sentences.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    ExtractedInput out;
    const std::size_t k = std::min(cfg.top_k, sentences.size());
    for (std::size_t r = 0; r < k; ++r) {
        const auto& s = sentences[order[r]];
        out.selected.push_back(ScoredSentence{s.index, scores[order[r]], s.text});
        const auto ids = encode(s.text, vocab);
        out.token_ids.insert(out.token_ids.end(), ids.begin(), ids.end());
    }
    return out;
}

} // namespace esglm
