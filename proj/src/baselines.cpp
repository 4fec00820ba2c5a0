#include "esglm/baselines.hpp"

#include "esglm/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace esglm {

CommonClassModel fit_common_class(std::span<const int> train_labels) {
    if (train_labels.empty()) throw Error(ErrorKind::EmptyDataset, "no training labels");
    CommonClassModel m;
    for (int y : train_labels) ++m.class_counts[y];
    std::size_t best = 0;
    for (const auto& [label, count] : m.class_counts) {
        // map iterates in ascending label order, so strict > keeps the smaller label on ties
        if (count > best) {
            best = count;
            m.predicted_class = label;
        }
    }
    return m;
}

double accuracy_of_constant(int prediction, std::span<const int> labels) {
    if (labels.empty()) throw Error(ErrorKind::EmptySplit, "no labels to evaluate");
    const auto hits = std::count(labels.begin(), labels.end(), prediction);
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

CommonClassResult fit_predict_common_class(std::span<const int> train_labels, std::span<const int> eval_labels) {
    CommonClassResult r;
    r.model = fit_common_class(train_labels);
    r.accuracy = accuracy_of_constant(r.model.predicted_class, eval_labels);
    return r;
}

NaiveBayesModel fit_naive_bayes(std::span<const NaiveBayesExample> train, double alpha) {
    if (!(alpha > 0.0)) throw Error(ErrorKind::InvalidConfig, "Naive Bayes alpha must be > 0");
    if (train.empty()) throw Error(ErrorKind::EmptyDataset, "no Naive Bayes training documents");

    std::map<int, std::size_t> doc_counts;
    std::map<int, std::map<std::string, std::size_t>> token_counts;
    std::map<int, std::size_t> total_tokens;
    std::set<std::string> vocab;
    for (const auto& ex : train) {
        ++doc_counts[ex.label];
        token_counts[ex.label];
        for (const auto& t : ex.tokens) {
            ++token_counts[ex.label][t];
            ++total_tokens[ex.label];
            vocab.insert(t);
        }
    }

    NaiveBayesModel m;
    m.alpha = alpha;
    m.vocabulary.assign(vocab.begin(), vocab.end());
    const double v = static_cast<double>(vocab.size());
    const double n = static_cast<double>(train.size());
    for (const auto& [label, count] : doc_counts) {
        m.classes.push_back(label);
        m.log_prior[label] = std::log(static_cast<double>(count) / n);
        const double denom = static_cast<double>(total_tokens[label]) + alpha * v;
        auto& ll = m.log_likelihood[label];
        const auto& tc = token_counts[label];
        for (const auto& t : m.vocabulary) {
            auto it = tc.find(t);
            const double c = it == tc.end() ? 0.0 : static_cast<double>(it->second);
            ll[t] = std::log((c + alpha) / denom);
        }
    }
    return m;
}

std::map<int, double> NaiveBayesModel::log_joint(const TokenBag& doc) const {
    std::map<int, double> out;
    for (int c : classes) {
        double s = log_prior.at(c);
        const auto& ll = log_likelihood.at(c);
        for (const auto& t : doc) {
            auto it = ll.find(t);
            if (it != ll.end()) s += it->second;
        }
        out[c] = s;
    }
    return out;
}

std::map<int, double> NaiveBayesModel::posterior(const TokenBag& doc) const {
    auto lj = log_joint(doc);
    double mx = -INFINITY;
    for (const auto& [c, v] : lj) mx = std::max(mx, v);
    double z = 0.0;
    for (auto& [c, v] : lj) {
        v = std::exp(v - mx);
        z += v;
    }
    for (auto& [c, v] : lj) v /= z;
    return lj;
}

int NaiveBayesModel::predict(const TokenBag& doc) const {
    const auto lj = log_joint(doc);
    int best = classes.front();
    double best_v = lj.at(best);
    for (const auto& [c, v] : lj) {
        if (v > best_v) {
            best = c;
            best_v = v;
        }
    }
    return best;
}

} // namespace esglm
