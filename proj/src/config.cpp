#include "esglm/config.hpp"

#include "esglm/error.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>

namespace esglm {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& v) {
    std::istringstream in(v);
    T out{};
    in >> out;
    const bool negative_unsigned = std::is_unsigned_v<T> && v.find('-') != std::string::npos;
    if (v.empty() || negative_unsigned || !in || in.peek() != std::char_traits<char>::eof())
        throw Error(ErrorKind::InvalidConfig, "bad value '" + v + "' for key " + key);
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error(ErrorKind::InvalidConfig, "bad boolean '" + v + "' for key " + key);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

} // namespace

ConfigMap ConfigMap::parse(const std::string& text, const std::string& source) {
    ConfigMap m;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos || trim(line.substr(0, eq)).empty())
            throw Error(ErrorKind::InvalidConfig, source + " line " + std::to_string(line_no) + ": expected key=value");
        m.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return m;
}

ConfigMap ConfigMap::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

void ConfigMap::set_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || trim(assignment.substr(0, eq)).empty())
        throw Error(ErrorKind::InvalidConfig, "override '" + assignment + "' is not key=value");
    values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

std::vector<std::pair<std::string, std::string>> default_config_entries() {
    return {
        {"seq_len", "512"},
        {"hidden", "32"},
        {"layers", "2"},
        {"heads", "4"},
        {"ffn", "128"},
        {"dropout", "0.1"},
        {"init_seed", "42"},
        {"vocab_size", "8000"},
        {"vocab_min_freq", "2"},
        {"mask_rate", "0.15"},
        {"mask_seed", "7"},
        {"lr", "2e-5"},
        {"eps", "1e-8"},
        {"beta1", "0.9"},
        {"beta2", "0.999"},
        {"epochs", "8"},
        {"batch", "8"},
        {"seed", "42"},
        {"pretrain_lr", "2e-5"},
        {"pretrain_epochs", "8"},
        {"pretrain_batch", "8"},
        {"pretrain_seed", "42"},
        {"top_k", "3"},
        {"benchmark", std::string(kDefaultBenchmark)},
        {"aggregation", "max"},
        {"dan_dim", "32"},
        {"dan_seed", "11"},
        {"change_epsilon", "0"},
        {"split", "0.7,0.15,0.15"},
        {"split_seed", "13"},
        {"split_mode", "stratified"},
        {"group_by_ticker", "false"},
        {"nb_alpha", "1.0"},
        {"delta_bins", "20"},
        {"sentlen_bin_width", "5"},
    };
}

std::string render_default_config() {
    std::string out;
    for (const auto& [k, v] : default_config_entries()) out += k + " = " + v + "\n";
    return out;
}

RunConfig resolve_config(const ConfigMap& map) {
    std::map<std::string, std::string> v;
    for (const auto& [k, d] : default_config_entries()) v[k] = d;
    for (const auto& [k, val] : map.values()) {
        if (!v.contains(k)) throw Error(ErrorKind::InvalidConfig, "unknown config key '" + k + "'");
        v[k] = val;
    }
    auto sz = [&](const char* k) { return parse_value<std::size_t>(k, v[k]); };
    auto u64 = [&](const char* k) { return parse_value<std::uint64_t>(k, v[k]); };
    auto dbl = [&](const char* k) { return parse_value<double>(k, v[k]); };

    RunConfig rc;
    rc.model.max_seq_len = sz("seq_len");
    rc.model.hidden_dim = sz("hidden");
    rc.model.num_layers = sz("layers");
    rc.model.num_heads = sz("heads");
    rc.model.ffn_dim = sz("ffn");
    rc.model.dropout_rate = dbl("dropout");
    rc.init_seed = u64("init_seed");
    rc.vocab.target_size = sz("vocab_size");
    rc.vocab.min_freq = sz("vocab_min_freq");

    rc.masking.mask_rate = dbl("mask_rate");
    rc.masking.seed = u64("mask_seed");

    rc.finetune.learning_rate = dbl("lr");
    rc.finetune.adam_epsilon = dbl("eps");
    rc.finetune.adam_beta1 = dbl("beta1");
    rc.finetune.adam_beta2 = dbl("beta2");
    rc.finetune.epochs = sz("epochs");
    rc.finetune.batch_size = sz("batch");
    rc.finetune.seed = u64("seed");

    rc.pretrain = rc.finetune;
    rc.pretrain.learning_rate = dbl("pretrain_lr");
    rc.pretrain.epochs = sz("pretrain_epochs");
    rc.pretrain.batch_size = sz("pretrain_batch");
    rc.pretrain.seed = u64("pretrain_seed");

    rc.extraction.top_k = sz("top_k");
    rc.extraction.benchmark_sentences = split_on(v["benchmark"], '|');
    if (v["aggregation"] == "max") rc.extraction.aggregation = Aggregation::Max;
    else if (v["aggregation"] == "mean") rc.extraction.aggregation = Aggregation::Mean;
    else throw Error(ErrorKind::InvalidConfig, "aggregation must be max or mean");
    rc.dan_dim = sz("dan_dim");
    rc.dan_seed = u64("dan_seed");

    rc.change_epsilon = dbl("change_epsilon");
    const auto fr = split_on(v["split"], ',');
    if (fr.size() != 3) throw Error(ErrorKind::InvalidConfig, "split needs three comma-separated fractions");
    rc.split.train_frac = parse_value<double>("split", fr[0]);
    rc.split.val_frac = parse_value<double>("split", fr[1]);
    rc.split.test_frac = parse_value<double>("split", fr[2]);
    rc.split.seed = u64("split_seed");
    if (v["split_mode"] == "stratified") rc.split.mode = SplitMode::Stratified;
    else if (v["split_mode"] == "temporal") rc.split.mode = SplitMode::Temporal;
    else throw Error(ErrorKind::InvalidConfig, "split_mode must be stratified or temporal");
    rc.split.group_by_ticker = parse_bool("group_by_ticker", v["group_by_ticker"]);
    rc.nb_alpha = dbl("nb_alpha");
    rc.eda.delta_bins = sz("delta_bins");
    rc.eda.sentence_bin_width = sz("sentlen_bin_width");

    rc.model.vocab_size = 1; // filled from the vocabulary by each stage
    rc.model.validate();
    rc.finetune.validate();
    rc.pretrain.validate();
    rc.masking.validate();
    rc.extraction.validate();
    if (rc.model.max_seq_len < 3) throw Error(ErrorKind::InvalidConfig, "seq_len must be at least 3");
    if (rc.change_epsilon < 0) throw Error(ErrorKind::InvalidConfig, "change_epsilon must be >= 0");
    return rc;
}

} // namespace esglm
