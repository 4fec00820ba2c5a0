#include "esglm/data.hpp"

#include "esglm/error.hpp"
#include "esglm/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace esglm {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(trim(cur));
    return fields;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
    std::istringstream in(s);
    in >> out;
    return !s.empty() && in && in.peek() == std::char_traits<char>::eof();
}

int quarter_index(int year, int quarter) { return year * 4 + (quarter - 1); }

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<LabeledExample> ordered(std::vector<LabeledExample> v) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.doc_id < b.doc_id; });
    return v;
}

} // namespace

std::string make_doc_id(const std::string& ticker, int year, int quarter) {
    return ticker + "-" + std::to_string(year) + "Q" + std::to_string(quarter);
}

std::string FilingDoc::doc_id() const { return make_doc_id(ticker, year, quarter); }

std::map<std::string, ScoreSeries> parse_scores(std::istream& in, const std::string& source) {
    std::map<std::string, ScoreSeries> out;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::set<std::tuple<std::string, int, int>> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        auto fail = [&](const std::string& why) {
            throw Error(ErrorKind::ParseError, source + " line " + std::to_string(line_no) + ": " + why);
        };
        if (!header_seen) {
            if (fields != std::vector<std::string>{"ticker", "year", "quarter", "env_score"})
                fail("expected header ticker,year,quarter,env_score");
            header_seen = true;
            continue;
        }
        if (fields.size() != 4) fail("expected 4 fields, got " + std::to_string(fields.size()));
        ScorePoint p;
        if (fields[0].empty()) fail("empty ticker");
        if (!parse_number(fields[1], p.year)) fail("year '" + fields[1] + "' is not an integer");
        if (!parse_number(fields[2], p.quarter) || p.quarter < 1 || p.quarter > 4)
            fail("quarter '" + fields[2] + "' is not in 1..4");
        if (!parse_number(fields[3], p.env_score) || !std::isfinite(p.env_score))
            fail("env_score '" + fields[3] + "' is not a finite number");
        if (!seen.emplace(fields[0], p.year, p.quarter).second)
            throw Error(ErrorKind::DuplicateError, source + " line " + std::to_string(line_no) + ": duplicate " +
                                                       make_doc_id(fields[0], p.year, p.quarter));
        auto& series = out[fields[0]];
        series.ticker = fields[0];
        series.points.push_back(p);
    }
    if (!header_seen) throw Error(ErrorKind::ParseError, source + ": missing header");
    for (auto& [ticker, series] : out) {
        std::sort(series.points.begin(), series.points.end(), [](const ScorePoint& a, const ScorePoint& b) {
            return quarter_index(a.year, a.quarter) < quarter_index(b.year, b.quarter);
        });
    }
    return out;
}

std::map<std::string, ScoreSeries> load_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open scores file " + path);
    return parse_scores(in, path);
}

std::vector<FilingDoc> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open manifest " + path);
    const fs::path base = fs::path(path).parent_path();
    std::vector<FilingDoc> docs;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = path + " line " + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::ParseError, where + ": " + e.what());
        }
        FilingDoc d;
        fs::path body;
        try {
            d.ticker = j.at("ticker").get<std::string>();
            d.year = j.at("year").get<int>();
            d.quarter = j.at("quarter").get<int>();
            body = j.at("path").get<std::string>();
        } catch (const json::exception& e) {
            throw Error(ErrorKind::ParseError, where + ": " + e.what());
        }
        if (d.quarter < 1 || d.quarter > 4) throw Error(ErrorKind::ParseError, where + ": quarter not in 1..4");
        if (!seen.insert(d.doc_id()).second)
            throw Error(ErrorKind::DuplicateError, where + ": duplicate filing " + d.doc_id());
        if (body.is_relative()) body = base / body;
        d.text = read_file(body);
        if (trim(d.text).empty()) throw Error(ErrorKind::InvalidInput, where + ": filing body is empty");
        docs.push_back(std::move(d));
    }
    return docs;
}

Task parse_task(const std::string& s) {
    if (s == "a" || s == "A") return Task::A;
    if (s == "b" || s == "B") return Task::B;
    throw Error(ErrorKind::InvalidConfig, "task must be 'a' or 'b', got '" + s + "'");
}

const char* to_string(Task task) { return task == Task::A ? "a" : "b"; }

std::vector<QuarterLabel> derive_labels(const ScoreSeries& series, double change_epsilon) {
    if (series.points.size() < 2)
        throw Error(ErrorKind::InsufficientHistory, series.ticker + " has fewer than 2 quarterly scores");
    std::vector<QuarterLabel> labels;
    for (std::size_t i = 1; i < series.points.size(); ++i) {
        const auto& prev = series.points[i - 1];
        const auto& cur = series.points[i];
        if (quarter_index(cur.year, cur.quarter) != quarter_index(prev.year, prev.quarter) + 1) continue;
        QuarterLabel l;
        l.ticker = series.ticker;
        l.year = cur.year;
        l.quarter = cur.quarter;
        l.delta = cur.env_score - prev.env_score;
        l.change = std::abs(l.delta) > change_epsilon;
        if (l.change) l.positive = l.delta > 0.0;
        labels.push_back(std::move(l));
    }
    return labels;
}

int class_label(const QuarterLabel& label, Task task) {
    if (task == Task::A) return label.change ? 1 : 0;
    if (!label.positive) throw Error(ErrorKind::InvalidInput, label.doc_id() + " has no task B label");
    return *label.positive ? 1 : 0;
}

Dataset build_dataset(std::span<const FilingKey> filings, std::span<const QuarterLabel> labels, const ExtractFn& extract,
                      Task task, std::size_t max_seq_len) {
    std::map<std::string, const QuarterLabel*> by_id;
    for (const auto& l : labels) {
        if (task == Task::B && !l.change) continue;
        if (!by_id.emplace(l.doc_id(), &l).second)
            throw Error(ErrorKind::DuplicateError, "duplicate label " + l.doc_id());
    }

    Dataset ds;
    ds.report.filing_count = filings.size();
    ds.report.label_count = by_id.size();
    std::set<std::string> used;
    for (std::size_t i = 0; i < filings.size(); ++i) {
        const auto& f = filings[i];
        const std::string id = make_doc_id(f.ticker, f.year, f.quarter);
        auto it = by_id.find(id);
        if (it == by_id.end()) {
            ++ds.report.unmatched_filings;
            continue;
        }
        used.insert(id);
        LabeledExample ex;
        ex.doc_id = id;
        ex.ticker = f.ticker;
        ex.year = f.year;
        ex.quarter = f.quarter;
        ex.delta = it->second->delta;
        ex.label = class_label(*it->second, task);
        ex.extracted = extract(i);
        ex.extracted.doc_id = id;
        ex.input = prepare_input(ex.extracted.token_ids, max_seq_len);
        ds.examples.push_back(std::move(ex));
    }
    ds.report.matched = ds.examples.size();
    ds.report.unmatched_labels = by_id.size() - used.size();
    if (ds.examples.empty()) throw Error(ErrorKind::EmptyDataset, "no filing matched a label");
    ds.examples = ordered(std::move(ds.examples));
    return ds;
}

Dataset build_dataset(std::span<const FilingDoc> filings, std::span<const QuarterLabel> labels,
                      const std::function<ExtractedInput(const FilingDoc&)>& extractor, Task task,
                      std::size_t max_seq_len) {
    std::vector<FilingKey> keys;
    keys.reserve(filings.size());
    for (const auto& f : filings) keys.push_back({f.ticker, f.year, f.quarter});
    return build_dataset(keys, labels, [&](std::size_t i) { return extractor(filings[i]); }, task, max_seq_len);
}

void SplitSpec::validate() const {
    if (!(train_frac > 0.0 && val_frac > 0.0 && test_frac > 0.0))
        throw Error(ErrorKind::StratificationError, "train, validation and test fractions must all be > 0");
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw Error(ErrorKind::StratificationError, "split fractions must sum to 1");
}

std::array<std::size_t, 3> largest_remainder(std::size_t n, const std::array<double, 3>& fractions) {
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double quota = static_cast<double>(n) * fractions[i];
        counts[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
        rem[i] = quota - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    std::array<std::size_t, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b] + 1e-12; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];
    return counts;
}

Splits split_dataset(std::span<const LabeledExample> dataset, const SplitSpec& spec) {
    spec.validate();
    if (dataset.size() < 3) throw Error(ErrorKind::StratificationError, "need at least 3 examples to split");
    const std::array<double, 3> fracs = {spec.train_frac, spec.val_frac, spec.test_frac};

    std::array<std::vector<std::size_t>, 3> parts;
    auto allocate = [&](const std::vector<std::size_t>& items) {
        const auto counts = largest_remainder(items.size(), fracs);
        std::size_t pos = 0;
        for (std::size_t s = 0; s < 3; ++s)
            for (std::size_t k = 0; k < counts[s]; ++k) parts[s].push_back(items[pos++]);
    };

    if (spec.mode == SplitMode::Temporal) {
        std::vector<std::size_t> idx(dataset.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            const auto& x = dataset[a];
            const auto& y = dataset[b];
            return std::tie(x.year, x.quarter, x.doc_id) < std::tie(y.year, y.quarter, y.doc_id);
        });
        allocate(idx);
    } else if (spec.group_by_ticker) {
        std::set<std::string> ticker_set;
        for (const auto& ex : dataset) ticker_set.insert(ex.ticker);
        if (ticker_set.size() < 3)
            throw Error(ErrorKind::StratificationError, "group_by_ticker needs at least 3 distinct tickers");
        std::vector<std::string> tickers(ticker_set.begin(), ticker_set.end());
        Rng rng(spec.seed);
        rng.shuffle(tickers);
        const auto counts = largest_remainder(tickers.size(), fracs);
        std::map<std::string, std::size_t> split_of;
        std::size_t pos = 0;
        for (std::size_t s = 0; s < 3; ++s)
            for (std::size_t k = 0; k < counts[s]; ++k) split_of[tickers[pos++]] = s;
        for (std::size_t i = 0; i < dataset.size(); ++i) parts[split_of[dataset[i].ticker]].push_back(i);
    } else {
        std::map<int, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < dataset.size(); ++i) by_class[dataset[i].label].push_back(i);
        if (by_class.size() < 2) throw Error(ErrorKind::StratificationError, "both classes must be present");
        for (auto& [label, items] : by_class) {
            if (items.size() < 3)
                throw Error(ErrorKind::StratificationError,
                            "class " + std::to_string(label) + " has " + std::to_string(items.size()) +
                                " examples, fewer than the 3 splits");
            Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(label)));
            rng.shuffle(items);
            allocate(items);
        }
    }

    auto collect = [&](const std::vector<std::size_t>& ids) {
        std::vector<LabeledExample> out;
        for (auto i : ids) out.push_back(dataset[i]);
        return ordered(std::move(out));
    };
    return Splits{collect(parts[0]), collect(parts[1]), collect(parts[2])};
}

std::vector<HistogramBin> equal_width_histogram(std::span<const double> values, std::size_t bins) {
    if (values.empty()) throw Error(ErrorKind::InvalidInput, "histogram of no values");
    if (bins < 1) throw Error(ErrorKind::InvalidConfig, "histogram needs at least one bin");
    const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *mn_it, hi = *mx_it;
    if (lo == hi) return {HistogramBin{lo, hi, values.size()}};
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<HistogramBin> out(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        out[b].start = lo + width * static_cast<double>(b);
        out[b].end = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
    }
    for (double v : values) {
        auto b = static_cast<std::size_t>(std::floor((v - lo) / width));
        ++out[std::min(b, bins - 1)].count;
    }
    return out;
}

EdaStats eda_stats(std::span<const QuarterLabel> labels, std::span<const FilingDoc> filings, const Vocab& vocab,
                   const EdaConfig& config) {
    if (labels.empty()) throw Error(ErrorKind::InvalidInput, "EDA needs at least one label");
    if (config.sentence_bin_width < 1) throw Error(ErrorKind::InvalidConfig, "sentence_bin_width must be >= 1");
    EdaStats s;
    s.label_count = labels.size();
    std::vector<double> deltas;
    for (const auto& l : labels) {
        deltas.push_back(l.delta);
        if (l.delta == 0.0) ++s.zero_delta_count;
    }
    s.zero_delta_fraction = static_cast<double>(s.zero_delta_count) / static_cast<double>(s.label_count);
    s.delta_histogram = equal_width_histogram(deltas, config.delta_bins);

    std::vector<std::size_t> lengths;
    for (const auto& f : filings)
        for (const auto& sent : segment_sentences(f.text)) lengths.push_back(encode(sent.text, vocab).size());
    s.sentence_count = lengths.size();
    if (!lengths.empty()) {
        const std::size_t w = config.sentence_bin_width;
        const std::size_t max_len = *std::max_element(lengths.begin(), lengths.end());
        s.sentence_length_histogram.resize(max_len / w + 1);
        for (std::size_t b = 0; b < s.sentence_length_histogram.size(); ++b)
            s.sentence_length_histogram[b] = {static_cast<double>(b * w), static_cast<double>((b + 1) * w), 0};
        for (auto len : lengths) ++s.sentence_length_histogram[len / w].count;
    }
    return s;
}

void write_eda(const EdaStats& stats, const std::string& out_dir) {
    fs::create_directories(out_dir);
    auto bins_json = [](const std::vector<HistogramBin>& bins) {
        json arr = json::array();
        for (const auto& b : bins) arr.push_back({{"bin_start", b.start}, {"bin_end", b.end}, {"count", b.count}});
        return arr;
    };
    json j = {{"label_count", stats.label_count},
              {"zero_delta_count", stats.zero_delta_count},
              {"zero_delta_fraction", stats.zero_delta_fraction},
              {"delta_histogram", bins_json(stats.delta_histogram)},
              {"sentence_count", stats.sentence_count},
              {"sentence_length_histogram", bins_json(stats.sentence_length_histogram)}};
    auto write = [&](const std::string& name, const std::string& body) {
        std::ofstream out(fs::path(out_dir) / name, std::ios::binary);
        if (!out) throw Error(ErrorKind::IoError, "cannot write " + name);
        out << body;
    };
    write("eda.json", j.dump(2) + "\n");
    auto csv = [](const std::vector<HistogramBin>& bins) {
        std::ostringstream ss;
        ss.precision(17);
        ss << "bin_start,bin_end,count\n";
        for (const auto& b : bins) ss << b.start << ',' << b.end << ',' << b.count << '\n';
        return ss.str();
    };
    write("delta_hist.csv", csv(stats.delta_histogram));
    write("sentlen_hist.csv", csv(stats.sentence_length_histogram));
}

} // namespace esglm
