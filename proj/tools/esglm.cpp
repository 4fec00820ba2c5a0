// esglm: command-line driver for the vocab → pretrain → extract → dataset →
// finetune/baseline → report pipeline.

#include "esglm/baselines.hpp"
#include "esglm/checkpoint.hpp"
#include "esglm/config.hpp"
#include "esglm/data.hpp"
#include "esglm/error.hpp"
#include "esglm/harness.hpp"
#include "esglm/mlm.hpp"
#include "esglm/relevance.hpp"
#include "esglm/synthetic.hpp"
#include "esglm/tokenizer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace esglm;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "key=value config file");
    cmd->add_option("--set", c.overrides, "override a config key (key=value)");
}

RunConfig load_run_config(const Common& c) {
    ConfigMap map = c.config_path.empty() ? ConfigMap{} : ConfigMap::load(c.config_path);
    for (const auto& o : c.overrides) map.set_override(o);
    return resolve_config(map);
}

std::vector<std::string> read_corpus(const std::string& dir) {
    if (!fs::is_directory(dir)) throw Error(ErrorKind::IoError, "not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<std::string> docs;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        docs.push_back(ss.str());
    }
    if (docs.empty()) throw Error(ErrorKind::InvalidInput, "corpus directory is empty: " + dir);
    return docs;
}

ModelConfig model_for(const RunConfig& rc, const Vocab& vocab) {
    ModelConfig m = rc.model;
    m.vocab_size = vocab.size();
    return m;
}

Stage finetuned_stage(Task task) { return task == Task::A ? Stage::FinetunedA : Stage::FinetunedB; }

void log(const std::string& msg) { std::cerr << msg << '\n'; }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ESG language-model pipeline"};
    app.require_subcommand(1);

    Common common;
    std::string corpus, out, vocab_path, ckpt_path, manifest, extracted, scores, task_name, split_arg, data_dir,
        metrics_path, baseline_model;
    std::size_t vocab_size = 0;
    std::uint64_t seed = 0;
    bool fresh = false;
    std::vector<std::string> metric_paths;

    auto* vocab_cmd = app.add_subcommand("vocab", "train a WordPiece vocabulary");
    add_common(vocab_cmd, common);
    vocab_cmd->add_option("--corpus", corpus)->required();
    vocab_cmd->add_option("--out", out)->required();
    vocab_cmd->add_option("--size", vocab_size);

    auto* pretrain_cmd = app.add_subcommand("pretrain", "masked-LM pretraining");
    add_common(pretrain_cmd, common);
    pretrain_cmd->add_option("--corpus", corpus)->required();
    pretrain_cmd->add_option("--vocab", vocab_path)->required();
    pretrain_cmd->add_option("--out", out)->required();

    auto* extract_cmd = app.add_subcommand("extract", "select the top-k relevant sentences per filing");
    add_common(extract_cmd, common);
    extract_cmd->add_option("--manifest", manifest)->required();
    extract_cmd->add_option("--vocab", vocab_path)->required();
    extract_cmd->add_option("--ckpt", ckpt_path)->required();
    extract_cmd->add_option("--out", out)->required();

    auto* dataset_cmd = app.add_subcommand("dataset", "join extractions with labels and split");
    add_common(dataset_cmd, common);
    dataset_cmd->add_option("--extracted", extracted)->required();
    dataset_cmd->add_option("--scores", scores)->required();
    dataset_cmd->add_option("--task", task_name)->required();
    dataset_cmd->add_option("--split", split_arg);
    auto* seed_opt = dataset_cmd->add_option("--seed", seed);
    dataset_cmd->add_option("--out", out)->required();
    dataset_cmd->add_option("--manifest", manifest, "filings manifest for sentence-length statistics");
    dataset_cmd->add_option("--vocab", vocab_path, "vocabulary for sentence-length statistics");

    auto* finetune_cmd = app.add_subcommand("finetune", "fine-tune a classifier");
    add_common(finetune_cmd, common);
    auto* ckpt_opt = finetune_cmd->add_option("--ckpt", ckpt_path);
    auto* fresh_opt = finetune_cmd->add_flag("--fresh", fresh, "start from a fresh initialization");
    ckpt_opt->excludes(fresh_opt);
    finetune_cmd->add_option("--data", data_dir)->required();
    finetune_cmd->add_option("--task", task_name)->required();
    finetune_cmd->add_option("--out", out);
    finetune_cmd->add_option("--metrics", metrics_path)->required();

    auto* baseline_cmd = app.add_subcommand("baseline", "common-class or Naive Bayes baseline");
    add_common(baseline_cmd, common);
    baseline_cmd->add_option("--data", data_dir)->required();
    baseline_cmd->add_option("--model", baseline_model)->required()->check(CLI::IsMember({"common", "nb"}));
    baseline_cmd->add_option("--metrics", metrics_path)->required();

    auto* evaluate_cmd = app.add_subcommand("evaluate", "score a fine-tuned checkpoint");
    add_common(evaluate_cmd, common);
    evaluate_cmd->add_option("--ckpt", ckpt_path)->required();
    evaluate_cmd->add_option("--data", data_dir)->required();
    evaluate_cmd->add_option("--metrics", metrics_path)->required();

    auto* report_cmd = app.add_subcommand("report", "render the accuracy table");
    add_common(report_cmd, common);
    report_cmd->add_option("--metrics", metric_paths)->required();
    report_cmd->add_option("--task", task_name)->required();
    report_cmd->add_option("--out", out)->required();

    auto* config_cmd = app.add_subcommand("config", "print the default configuration");

    auto* synth_cmd = app.add_subcommand("synth", "write the synthetic fixture");
    synth_cmd->add_option("--out", out)->required();
    auto* synth_seed = synth_cmd->add_option("--seed", seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*vocab_cmd) {
            const RunConfig rc = load_run_config(common);
            VocabTrainingConfig vc = rc.vocab;
            if (vocab_size > 0) vc.target_size = vocab_size;
            const auto docs = read_corpus(corpus);
            const Vocab vocab = train_vocab(docs, vc);
            vocab.save(out);
            log("vocab: " + std::to_string(vocab.size()) + " tokens");
        } else if (*pretrain_cmd) {
            const RunConfig rc = load_run_config(common);
            const Vocab vocab = Vocab::load(vocab_path);
            const ModelConfig mc = model_for(rc, vocab);
            const auto docs = read_corpus(corpus);
            ParameterSet init = init_parameters(mc, rc.init_seed, rc.pretrain.f32_storage);
            auto result = run_pretraining(docs, vocab, std::move(init), mc, rc.pretrain, rc.masking,
                                          [](std::size_t epoch, double loss) {
                                              char buf[64];
                                              std::snprintf(buf, sizeof buf, "epoch %zu loss %.6f", epoch + 1, loss);
                                              log(buf);
                                          });
            save_checkpoint({mc, std::move(result.params), {Stage::Pretrained, rc.pretrain.seed, rc.pretrain}}, out);
        } else if (*extract_cmd) {
            const RunConfig rc = load_run_config(common);
            const Vocab vocab = Vocab::load(vocab_path);
            const Checkpoint ckpt = load_checkpoint(ckpt_path);
            if (ckpt.config.vocab_size != vocab.size())
                throw Error(ErrorKind::CheckpointMismatch, "checkpoint vocab size differs from " + vocab_path);
            const DanEmbedder dan(vocab, ckpt.params.token_embeddings,
                                  make_dan_params(ckpt.config.hidden_dim, rc.dan_dim, rc.dan_seed));
            const Embedder embedder = [&](std::string_view s) { return dan.embed(s); };
            std::vector<ExtractedRecord> records;
            std::size_t skipped = 0;
            for (const auto& doc : load_manifest(manifest)) {
                try {
                    ExtractedInput x = extract_top_k(doc.text, rc.extraction, embedder, vocab);
                    x.doc_id = doc.doc_id();
                    records.push_back({{doc.ticker, doc.year, doc.quarter}, std::move(x)});
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::EmptyDocument) throw;
                    ++skipped;
                    log("skipping " + doc.doc_id() + ": no sentences");
                }
            }
            write_extracted(records, out);
            log("extract: " + std::to_string(records.size()) + " documents, " + std::to_string(skipped) + " skipped");
        } else if (*dataset_cmd) {
            Common c = common;
            if (!split_arg.empty()) c.overrides.push_back("split=" + split_arg);
            if (*seed_opt) c.overrides.push_back("split_seed=" + std::to_string(seed));
            const RunConfig rc = load_run_config(c);
            const Task task = parse_task(task_name);
            const auto records = read_extracted(extracted);
            std::vector<QuarterLabel> labels;
            for (const auto& [ticker, series] : load_scores(scores)) {
                if (series.points.size() < 2) {
                    log("skipping " + ticker + ": fewer than two quarters");
                    continue;
                }
                auto l = derive_labels(series, rc.change_epsilon);
                labels.insert(labels.end(), l.begin(), l.end());
            }
            std::vector<FilingKey> keys;
            for (const auto& r : records) keys.push_back(r.key);
            const Dataset ds = build_dataset(
                keys, labels, [&](std::size_t i) { return records[i].extracted; }, task, rc.model.max_seq_len);
            const Splits splits = split_dataset(ds.examples, rc.split);
            DatasetMeta meta{task, rc.model.max_seq_len, 0, ds.report};
            if (!vocab_path.empty() && !manifest.empty()) {
                const Vocab vocab = Vocab::load(vocab_path);
                meta.vocab_size = vocab.size();
                const auto filings = load_manifest(manifest);
                write_eda(eda_stats(labels, filings, vocab, rc.eda), (fs::path(out) / "eda").string());
            }
            write_dataset(splits, meta, out);
            log("dataset: " + std::to_string(splits.train.size()) + "/" + std::to_string(splits.validation.size()) +
                "/" + std::to_string(splits.test.size()) + " examples");
        } else if (*finetune_cmd) {
            if (!fresh && ckpt_path.empty()) throw Error(ErrorKind::InvalidConfig, "finetune needs --ckpt or --fresh");
            const RunConfig rc = load_run_config(common);
            const Task task = parse_task(task_name);
            DatasetMeta meta;
            const Splits splits = read_dataset(data_dir, &meta);
            if (meta.task != task) throw Error(ErrorKind::InvalidConfig, "dataset was built for another task");
            ModelConfig mc;
            ParameterSet init;
            if (fresh) {
                if (meta.vocab_size == 0)
                    throw Error(ErrorKind::InvalidConfig, "--fresh needs a dataset built with --vocab");
                mc = rc.model;
                mc.vocab_size = meta.vocab_size;
                init = init_parameters(mc, rc.init_seed, rc.finetune.f32_storage);
            } else {
                Checkpoint ckpt = load_checkpoint(ckpt_path);
                mc = ckpt.config;
                init = std::move(ckpt.params);
            }
            auto result = run_finetune(std::move(init), mc, splits, task, rc.finetune, fresh ? "base_lm" : "domain_lm");
            write_metrics(result.metrics, metrics_path);
            if (!out.empty())
                save_checkpoint({mc, std::move(result.params), {finetuned_stage(task), rc.finetune.seed, rc.finetune}},
                                out);
            char buf[96];
            std::snprintf(buf, sizeof buf, "%s test accuracy %.4f", result.metrics.model.c_str(),
                          result.metrics.splits.at("test").accuracy);
            log(buf);
        } else if (*baseline_cmd) {
            const RunConfig rc = load_run_config(common);
            DatasetMeta meta;
            const Splits splits = read_dataset(data_dir, &meta);
            const Metrics m = baseline_model == "common" ? run_common_class(splits, meta.task)
                                                         : run_naive_bayes(splits, meta.task, rc.nb_alpha);
            write_metrics(m, metrics_path);
        } else if (*evaluate_cmd) {
            DatasetMeta meta;
            const Splits splits = read_dataset(data_dir, &meta);
            const Checkpoint ckpt = load_checkpoint(ckpt_path);
            if (ckpt.meta.stage == Stage::Pretrained)
                throw Error(ErrorKind::CheckpointMismatch, "evaluate needs a fine-tuned checkpoint");
            if (ckpt.meta.stage != finetuned_stage(meta.task))
                throw Error(ErrorKind::CheckpointMismatch, "checkpoint was fine-tuned for another task");
            Metrics m;
            m.model = "checkpoint";
            m.task = meta.task;
            m.splits["train"] = evaluate(ckpt.params, ckpt.config, splits.train);
            m.splits["validation"] = evaluate(ckpt.params, ckpt.config, splits.validation);
            m.splits["test"] = evaluate(ckpt.params, ckpt.config, splits.test);
            write_metrics(m, metrics_path);
        } else if (*report_cmd) {
            const Task task = parse_task(task_name);
            std::vector<Metrics> rows;
            for (const auto& p : metric_paths) {
                rows.push_back(read_metrics(p));
                if (rows.back().task != task) throw Error(ErrorKind::InvalidInput, p + " is for another task");
            }
            emit_report(rows, task, out);
            std::cout << render_report_markdown(rows);
        } else if (*config_cmd) {
            std::cout << render_default_config();
        } else if (*synth_cmd) {
            FixtureSpec spec;
            if (*synth_seed) spec.seed = seed;
            write_fixture(out, spec);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
