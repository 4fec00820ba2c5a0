#include "esglm/harness.hpp"

#include "esglm/error.hpp"
#include "esglm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace esglm {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
    out << body;
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path);
}

json parse_json(const std::string& text, const std::string& where) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, where + ": " + e.what());
    }
}

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

json example_to_json(const LabeledExample& ex) {
    return {{"doc_id", ex.doc_id},
            {"ticker", ex.ticker},
            {"year", ex.year},
            {"quarter", ex.quarter},
            {"delta", ex.delta},
            {"label", ex.label},
            {"excerpt", ex.extracted.excerpt()},
            {"token_ids", ex.extracted.token_ids}};
}

LabeledExample example_from_json(const json& j, std::size_t max_seq_len) {
    LabeledExample ex;
    ex.doc_id = j.at("doc_id").get<std::string>();
    ex.ticker = j.at("ticker").get<std::string>();
    ex.year = j.at("year").get<int>();
    ex.quarter = j.at("quarter").get<int>();
    ex.delta = j.at("delta").get<double>();
    ex.label = j.at("label").get<int>();
    ex.extracted.doc_id = ex.doc_id;
    // the excerpt is kept as a single pseudo-sentence for the bag-of-words baseline
    ex.extracted.selected.push_back(ScoredSentence{0, 0.0, j.at("excerpt").get<std::string>()});
    ex.extracted.token_ids = j.at("token_ids").get<std::vector<TokenId>>();
    ex.input = prepare_input(ex.extracted.token_ids, max_seq_len);
    return ex;
}

} // namespace

SplitMetrics score_predictions(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size())
        throw Error(ErrorKind::ShapeError, "prediction and label counts differ");
    if (labels.empty()) throw Error(ErrorKind::EmptySplit, "split is empty");
    SplitMetrics m;
    m.count = labels.size();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool p = predictions[i] == 1;
        const bool y = labels[i] == 1;
        if (p && y) ++m.tp;
        else if (p && !y) ++m.fp;
        else if (!p && !y) ++m.tn;
        else ++m.fn;
    }
    m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(m.count);
    return m;
}

json to_json(const Metrics& m) {
    json splits = json::object();
    for (const auto& [name, s] : m.splits)
        splits[name] = {{"count", s.count}, {"accuracy", s.accuracy}, {"tp", s.tp},
                        {"fp", s.fp},       {"tn", s.tn},             {"fn", s.fn}};
    return {{"model", m.model}, {"task", to_string(m.task)}, {"splits", splits}, {"config", m.config}};
}

Metrics metrics_from_json(const json& j) {
    Metrics m;
    try {
        m.model = j.at("model").get<std::string>();
        m.task = parse_task(j.at("task").get<std::string>());
        for (const auto& [name, s] : j.at("splits").items()) {
            SplitMetrics sm;
            sm.count = s.at("count").get<std::size_t>();
            sm.accuracy = s.at("accuracy").get<double>();
            sm.tp = s.at("tp").get<std::size_t>();
            sm.fp = s.at("fp").get<std::size_t>();
            sm.tn = s.at("tn").get<std::size_t>();
            sm.fn = s.at("fn").get<std::size_t>();
            m.splits[name] = sm;
        }
        if (j.contains("config")) m.config = j.at("config");
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("metrics: ") + e.what());
    }
    return m;
}

void write_metrics(const Metrics& m, const std::string& path) { write_text(path, to_json(m).dump(2) + "\n"); }

Metrics read_metrics(const std::string& path) { return metrics_from_json(parse_json(read_text(path), path)); }

std::vector<int> labels_of(std::span<const LabeledExample> examples) {
    std::vector<int> out;
    out.reserve(examples.size());
    for (const auto& e : examples) out.push_back(e.label);
    return out;
}

SplitMetrics evaluate(const ParameterSet& params, const ModelConfig& config, std::span<const LabeledExample> split) {
    if (split.empty()) throw Error(ErrorKind::EmptySplit, "cannot evaluate an empty split");
    std::vector<int> preds;
    preds.reserve(split.size());
    for (const auto& ex : split) preds.push_back(predict_class(ex.input, params, config));
    return score_predictions(preds, labels_of(split));
}

FinetuneResult run_finetune(ParameterSet init, const ModelConfig& config, const Splits& splits, Task task,
                            const TrainConfig& tc, const std::string& model_name) {
    config.validate();
    tc.validate();
    check_shapes(init, config);
    if (splits.train.empty()) throw Error(ErrorKind::EmptySplit, "training split is empty");
    for (const auto* split : {&splits.train, &splits.validation, &splits.test}) {
        for (const auto& ex : *split) {
            if (ex.input.size() > config.max_seq_len)
                throw Error(ErrorKind::CheckpointMismatch, "input length exceeds the model's max_seq_len");
            for (TokenId id : ex.input.ids)
                if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size)
                    throw Error(ErrorKind::CheckpointMismatch,
                                ex.doc_id + " has token id " + std::to_string(id) + " outside the model vocabulary");
        }
    }

    FinetuneResult result;
    ParameterSet params = std::move(init);
    init_classifier_head(params, config, mix_seed(tc.seed, 0x4EAD), tc.f32_storage);
    OptimizerState state = OptimizerState::fresh(params);
    std::uint64_t step = 0;
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        std::vector<std::size_t> order(splits.train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(mix_seed(tc.seed, 2000 + epoch));
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
            TrainingBatch batch;
            for (std::size_t i = start; i < std::min(order.size(), start + tc.batch_size); ++i) {
                batch.inputs.push_back(splits.train[order[i]].input);
                batch.labels.push_back(splits.train[order[i]].label);
            }
            ForwardOptions fo;
            fo.mode = Mode::Train;
            fo.dropout_seed = mix_seed(tc.seed, 0xF1E7000 + step);
            const GradientResult g = compute_gradients(batch, params, config, Objective::Classify, fo);
            adam_step(params, g.grads, state, tc);
            loss_sum += g.loss;
            ++batches;
            ++step;
        }
        result.epoch_losses.push_back(loss_sum / static_cast<double>(batches));
    }

    result.metrics.model = model_name;
    result.metrics.task = task;
    result.metrics.splits["train"] = evaluate(params, config, splits.train);
    result.metrics.splits["validation"] = evaluate(params, config, splits.validation);
    result.metrics.splits["test"] = evaluate(params, config, splits.test);
    result.metrics.config = {{"learning_rate", tc.learning_rate}, {"adam_epsilon", tc.adam_epsilon},
                             {"epochs", tc.epochs},               {"batch_size", tc.batch_size},
                             {"seed", tc.seed},                   {"hidden_dim", config.hidden_dim},
                             {"num_layers", config.num_layers},   {"max_seq_len", config.max_seq_len}};
    result.params = std::move(params);
    return result;
}

Metrics run_common_class(const Splits& splits, Task task) {
    const auto train = labels_of(splits.train);
    const CommonClassModel model = fit_common_class(train);
    Metrics m;
    m.model = "common_class";
    m.task = task;
    auto score = [&](const std::vector<LabeledExample>& split) {
        const auto y = labels_of(split);
        return score_predictions(std::vector<int>(y.size(), model.predicted_class), y);
    };
    m.splits["train"] = score(splits.train);
    m.splits["validation"] = score(splits.validation);
    m.splits["test"] = score(splits.test);
    m.config = {{"predicted_class", model.predicted_class}};
    return m;
}

TokenBag word_bag(const LabeledExample& ex) { return pre_tokenize(ex.extracted.excerpt()); }

Metrics run_naive_bayes(const Splits& splits, Task task, double alpha) {
    std::vector<NaiveBayesExample> train;
    for (const auto& ex : splits.train) train.push_back({word_bag(ex), ex.label});
    const NaiveBayesModel model = fit_naive_bayes(train, alpha);
    Metrics m;
    m.model = "naive_bayes";
    m.task = task;
    auto score = [&](const std::vector<LabeledExample>& split) {
        std::vector<int> preds;
        for (const auto& ex : split) preds.push_back(model.predict(word_bag(ex)));
        return score_predictions(preds, labels_of(split));
    };
    m.splits["train"] = score(splits.train);
    m.splits["validation"] = score(splits.validation);
    m.splits["test"] = score(splits.test);
    m.config = {{"alpha", alpha}, {"vocabulary_size", model.vocabulary.size()}};
    return m;
}

std::string display_name(const std::string& model) {
    if (model == "common_class") return "Common Class Prediction";
    if (model == "naive_bayes") return "Naive Bayes";
    if (model == "base_lm") return "Base LM";
    if (model == "domain_lm") return "Domain LM";
    return model;
}

std::string render_report_markdown(std::span<const Metrics> rows) {
    if (rows.empty()) throw Error(ErrorKind::InvalidInput, "report needs at least one metrics entry");
    static const std::vector<std::string> canonical = {"common_class", "naive_bayes", "base_lm", "domain_lm"};
    std::vector<const Metrics*> ordered;
    for (const auto& name : canonical)
        for (const auto& m : rows)
            if (m.model == name) ordered.push_back(&m);
    for (const auto& m : rows)
        if (std::find(canonical.begin(), canonical.end(), m.model) == canonical.end()) ordered.push_back(&m);

    std::string out = "| Model | Train Accuracy | Validation Accuracy | Test Accuracy |\n";
    out += "|---|---|---|---|\n";
    for (const Metrics* m : ordered) {
        out += "| " + display_name(m->model);
        for (const char* split : kSplitNames) {
            auto it = m->splits.find(split);
            const double acc = it == m->splits.end() ? std::numeric_limits<double>::quiet_NaN() : it->second.accuracy;
            if (!(acc >= 0.0 && acc <= 1.0))
                throw Error(ErrorKind::InvalidInput, m->model + " lacks a valid " + split + " accuracy");
            out += " | " + fmt4(acc);
        }
        out += " |\n";
    }
    return out;
}

void emit_report(std::span<const Metrics> rows, Task task, const std::string& out_dir) {
    for (const auto& m : rows)
        if (m.task != task)
            throw Error(ErrorKind::InvalidInput, m.model + " metrics are for task " + to_string(m.task));
    const std::string md = render_report_markdown(rows);
    fs::create_directories(out_dir);
    json j = {{"task", to_string(task)}, {"models", json::array()}};
    for (const auto& m : rows) j["models"].push_back(to_json(m));
    const std::string stem = std::string("report_") + to_string(task);
    write_text((fs::path(out_dir) / (stem + ".json")).string(), j.dump(2) + "\n");
    write_text((fs::path(out_dir) / (stem + ".md")).string(), md);
}

json to_json(const ExtractedRecord& r) {
    json selected = json::array();
    for (const auto& s : r.extracted.selected) {
        json score = std::isfinite(s.score) ? json(s.score) : json(nullptr);
        selected.push_back({{"index", s.index}, {"score", score}, {"text", s.text}});
    }
    return {{"doc_id", make_doc_id(r.key.ticker, r.key.year, r.key.quarter)},
            {"ticker", r.key.ticker},
            {"year", r.key.year},
            {"quarter", r.key.quarter},
            {"selected", selected},
            {"token_count", r.extracted.token_ids.size()},
            {"token_ids", r.extracted.token_ids}};
}

ExtractedRecord extracted_from_json(const json& j) {
    ExtractedRecord r;
    r.key.ticker = j.at("ticker").get<std::string>();
    r.key.year = j.at("year").get<int>();
    r.key.quarter = j.at("quarter").get<int>();
    r.extracted.doc_id = j.at("doc_id").get<std::string>();
    for (const auto& s : j.at("selected")) {
        const json& score = s.at("score");
        r.extracted.selected.push_back(ScoredSentence{
            s.at("index").get<std::size_t>(),
            score.is_null() ? -std::numeric_limits<double>::infinity() : score.get<double>(),
            s.at("text").get<std::string>()});
    }
    r.extracted.token_ids = j.at("token_ids").get<std::vector<TokenId>>();
    if (r.extracted.token_ids.size() != j.at("token_count").get<std::size_t>())
        throw Error(ErrorKind::ParseError, r.extracted.doc_id + ": token_count disagrees with token_ids");
    return r;
}

void write_extracted(std::span<const ExtractedRecord> records, const std::string& path) {
    std::string body;
    for (const auto& r : records) body += to_json(r).dump() + "\n";
    write_text(path, body);
}

std::vector<ExtractedRecord> read_extracted(const std::string& path) {
    std::istringstream in(read_text(path));
    std::vector<ExtractedRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path + " line " + std::to_string(n);
        try {
            out.push_back(extracted_from_json(parse_json(line, where)));
        } catch (const json::exception& e) {
            throw Error(ErrorKind::ParseError, where + ": " + e.what());
        }
    }
    return out;
}

void write_dataset(const Splits& splits, const DatasetMeta& meta, const std::string& dir) {
    fs::create_directories(dir);
    const json info = {{"task", to_string(meta.task)},
                       {"max_seq_len", meta.max_seq_len},
                       {"vocab_size", meta.vocab_size},
                       {"counts",
                        {{"train", splits.train.size()},
                         {"validation", splits.validation.size()},
                         {"test", splits.test.size()}}},
                       {"join",
                        {{"filing_count", meta.report.filing_count},
                         {"label_count", meta.report.label_count},
                         {"matched", meta.report.matched},
                         {"unmatched_filings", meta.report.unmatched_filings},
                         {"unmatched_labels", meta.report.unmatched_labels}}}};
    write_text((fs::path(dir) / "dataset.json").string(), info.dump(2) + "\n");
    auto dump_split = [&](const std::vector<LabeledExample>& split, const char* name) {
        std::string body;
        for (const auto& ex : split) body += example_to_json(ex).dump() + "\n";
        write_text((fs::path(dir) / (std::string(name) + ".jsonl")).string(), body);
    };
    dump_split(splits.train, "train");
    dump_split(splits.validation, "validation");
    dump_split(splits.test, "test");
}

Splits read_dataset(const std::string& dir, DatasetMeta* meta) {
    const std::string info_path = (fs::path(dir) / "dataset.json").string();
    const json info = parse_json(read_text(info_path), info_path);
    DatasetMeta m;
    try {
        m.task = parse_task(info.at("task").get<std::string>());
        m.max_seq_len = info.at("max_seq_len").get<std::size_t>();
        m.vocab_size = info.at("vocab_size").get<std::size_t>();
        const json& join = info.at("join");
        m.report.filing_count = join.at("filing_count").get<std::size_t>();
        m.report.label_count = join.at("label_count").get<std::size_t>();
        m.report.matched = join.at("matched").get<std::size_t>();
        m.report.unmatched_filings = join.at("unmatched_filings").get<std::size_t>();
        m.report.unmatched_labels = join.at("unmatched_labels").get<std::size_t>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, info_path + ": " + e.what());
    }
    auto load_split = [&](const char* name) {
        const std::string path = (fs::path(dir) / (std::string(name) + ".jsonl")).string();
        std::istringstream in(read_text(path));
        std::vector<LabeledExample> out;
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            const std::string where = path + " line " + std::to_string(n);
            try {
                out.push_back(example_from_json(parse_json(line, where), m.max_seq_len));
            } catch (const json::exception& e) {
                throw Error(ErrorKind::ParseError, where + ": " + e.what());
            }
        }
        return out;
    };
    Splits s{load_split("train"), load_split("validation"), load_split("test")};
    if (meta) *meta = m;
    return s;
}

} // namespace esglm
