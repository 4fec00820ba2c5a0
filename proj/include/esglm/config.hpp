#ifndef ESGLM_CONFIG_HPP
#define ESGLM_CONFIG_HPP

#include "esglm/data.hpp"
#include "esglm/encoder.hpp"
#include "esglm/mlm.hpp"
#include "esglm/relevance.hpp"

#include <map>
#include <string>
#include <vector>

namespace esglm {

// Every setting a pipeline stage reads. Defaults mirror the values reported
// for fine-tuning (lr 2e-5, eps 1e-8, 8 epochs, batch 8), 15% masking,
// 512-token inputs and top-3 extraction.
struct RunConfig {
    ModelConfig model;
    TrainConfig finetune;
    TrainConfig pretrain;
    MaskingConfig masking;
    ExtractionConfig extraction;
    SplitSpec split;
    VocabTrainingConfig vocab;
    EdaConfig eda;
    std::size_t dan_dim = 32;
    std::uint64_t dan_seed = 11;
    double change_epsilon = 0.0;
    double nb_alpha = 1.0;
    std::uint64_t init_seed = 42;
};

// Flat `key = value` settings; '#' starts a comment. Later assignments win.
class ConfigMap {
public:
    static ConfigMap parse(const std::string& text, const std::string& source = "<config>");
    static ConfigMap load(const std::string& path);

    // Applies "key=value".
    void set_override(const std::string& assignment);
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

// Unknown keys and malformed values raise InvalidConfig.
RunConfig resolve_config(const ConfigMap& map);

// Documented keys with their default values, in file order.
std::vector<std::pair<std::string, std::string>> default_config_entries();

std::string render_default_config();

} // namespace esglm

#endif // ESGLM_CONFIG_HPP
