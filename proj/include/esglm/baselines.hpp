#ifndef ESGLM_BASELINES_HPP
#define ESGLM_BASELINES_HPP

#include <map>
#include <span>
#include <string>
#include <vector>

namespace esglm {

struct CommonClassModel {
    int predicted_class = 0;
    std::map<int, std::size_t> class_counts;

    int predict() const { return predicted_class; }
};

// Majority label; ties go to the smaller label.
CommonClassModel fit_common_class(std::span<const int> train_labels);

double accuracy_of_constant(int prediction, std::span<const int> labels);

struct CommonClassResult {
    CommonClassModel model;
    double accuracy = 0.0;
};

CommonClassResult fit_predict_common_class(std::span<const int> train_labels, std::span<const int> eval_labels);

using TokenBag = std::vector<std::string>;

struct NaiveBayesExample {
    TokenBag tokens;
    int label = 0;
};

// Multinomial Naive Bayes with Laplace smoothing, in log space.
struct NaiveBayesModel {
    std::vector<int> classes;                       // ascending
    std::map<int, double> log_prior;
    std::map<int, std::map<std::string, double>> log_likelihood; // per class, over vocabulary
    std::vector<std::string> vocabulary;            // sorted snapshot
    double alpha = 1.0;

    // log P(c) + sum over known tokens of log P(t|c); unseen tokens ignored.
    std::map<int, double> log_joint(const TokenBag& doc) const;
    std::map<int, double> posterior(const TokenBag& doc) const;
    // Argmax of log_joint; ties to the smaller label.
    int predict(const TokenBag& doc) const;
};

NaiveBayesModel fit_naive_bayes(std::span<const NaiveBayesExample> train, double alpha = 1.0);

} // namespace esglm

#endif // ESGLM_BASELINES_HPP
