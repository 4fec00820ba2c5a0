#include "esglm/encoder.hpp"

#include "esglm/error.hpp"

#include <cmath>
#include <limits>

namespace esglm {

namespace {

constexpr double kLayerNormEps = 1e-12;
constexpr double kSqrt2OverPi = 0.7978845608028654;
constexpr double kGeluCoeff = 0.044715;

double round_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

Matrix zeros(std::size_t r, std::size_t c) { return Matrix::Zero(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)); }

Eigen::Index idx(std::size_t n) { return static_cast<Eigen::Index>(n); }

template <typename Fn>
void visit_layer(LayerParams& l, const std::string& p, Fn&& fn) {
    fn(p + "attn.query.weight", l.wq);
    fn(p + "attn.query.bias", l.bq);
    fn(p + "attn.key.weight", l.wk);
    fn(p + "attn.key.bias", l.bk);
    fn(p + "attn.value.weight", l.wv);
    fn(p + "attn.value.bias", l.bv);
    fn(p + "attn.output.weight", l.wo);
    fn(p + "attn.output.bias", l.bo);
    fn(p + "ln1.gain", l.ln1_gain);
    fn(p + "ln1.bias", l.ln1_bias);
    fn(p + "ffn.in.weight", l.w1);
    fn(p + "ffn.in.bias", l.b1);
    fn(p + "ffn.out.weight", l.w2);
    fn(p + "ffn.out.bias", l.b2);
    fn(p + "ln2.gain", l.ln2_gain);
    fn(p + "ln2.bias", l.ln2_bias);
}

template <typename P, typename Fn>
void visit_all(P& params, Fn&& fn) {
    auto& mp = const_cast<ParameterSet&>(params);
    fn("embeddings.token", mp.token_embeddings);
    fn("embeddings.position", mp.position_embeddings);
    for (std::size_t i = 0; i < mp.layers.size(); ++i)
        visit_layer(mp.layers[i], "layer." + std::to_string(i) + ".", fn);
    fn("mlm.bias", mp.mlm_bias);
    fn("pooler.weight", mp.pooler_w);
    fn("pooler.bias", mp.pooler_b);
    fn("classifier.weight", mp.classifier_w);
    fn("classifier.bias", mp.classifier_b);
}

bool is_weight(const std::string& name) {
    return name.ends_with(".weight") || name.starts_with("embeddings.");
}

Matrix dropout_mask(std::size_t r, std::size_t c, double rate, Rng& rng) {
    Matrix m(idx(r), idx(c));
    const double keep_scale = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    return m;
}

void layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, Matrix& xhat, Eigen::VectorXd& inv_std,
                Matrix& out) {
    const auto d = static_cast<double>(x.cols());
    xhat.resize(x.rows(), x.cols());
    inv_std.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mu = x.row(i).sum() / d;
        const double var = (x.row(i).array() - mu).square().sum() / d;
        inv_std(i) = 1.0 / std::sqrt(var + kLayerNormEps);
        xhat.row(i) = (x.row(i).array() - mu) * inv_std(i);
    }
    out = (xhat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
}

Matrix layer_norm_backward(const Matrix& dout, const Matrix& xhat, const Eigen::VectorXd& inv_std,
                           const Matrix& gain, Matrix& dgain, Matrix& dbias) {
    dgain.row(0) += (dout.array() * xhat.array()).colwise().sum().matrix();
    dbias.row(0) += dout.colwise().sum();
    const Matrix dxhat = dout.array().rowwise() * gain.row(0).array();
    const auto d = static_cast<double>(dout.cols());
    Matrix dx(dout.rows(), dout.cols());
    for (Eigen::Index i = 0; i < dout.rows(); ++i) {
        const double mean_d = dxhat.row(i).sum() / d;
        const double mean_dx = dxhat.row(i).dot(xhat.row(i)) / d;
        dx.row(i) = inv_std(i) * (dxhat.row(i).array() - mean_d - xhat.row(i).array() * mean_dx);
    }
    return dx;
}

void softmax_rows(Matrix& s) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const double mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
    }
}

void validate_input(const EncodedInput& input, const ModelConfig& config) {
    const std::size_t n = input.ids.size();
    if (n == 0 || n > config.max_seq_len)
        throw Error(ErrorKind::ShapeError, "input length " + std::to_string(n) + " outside 1.." +
                                               std::to_string(config.max_seq_len));
    if (input.attention_mask.size() != n)
        throw Error(ErrorKind::ShapeError, "attention mask length differs from ids length");
    if (input.real_len == 0 || input.real_len > n)
        throw Error(ErrorKind::ShapeError, "real_len out of range");
    for (std::size_t i = 0; i < n; ++i) {
        if ((input.attention_mask[i] != 0) != (i < input.real_len))
            throw Error(ErrorKind::ShapeError, "attention mask is not a prefix of ones of length real_len");
        if (input.ids[i] < 0 || static_cast<std::size_t>(input.ids[i]) >= config.vocab_size)
            throw Error(ErrorKind::ShapeError, "token id " + std::to_string(input.ids[i]) + " outside vocabulary");
    }
}

void backward_encoder(const EncoderCache& cache, Matrix dx, const ParameterSet& params, const ModelConfig& config,
                      ParameterSet& grads) {
    const std::size_t heads = config.num_heads;
    const std::size_t dh = config.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const Eigen::Index keys = idx(cache.keys);

    for (std::size_t li = cache.layers.size(); li-- > 0;) {
        const LayerCache& lc = cache.layers[li];
        const LayerParams& p = params.layers[li];
        LayerParams& g = grads.layers[li];

        const Matrix d_res2 = layer_norm_backward(dx, lc.ln2_xhat, lc.ln2_inv_std, p.ln2_gain, g.ln2_gain, g.ln2_bias);
        Matrix d_h1 = d_res2;
        Matrix d_f = d_res2;
        if (lc.ffn_drop.size() > 0) d_f.array() *= lc.ffn_drop.array();
        g.w2.noalias() += lc.ffn_act.transpose() * d_f;
        g.b2.row(0) += d_f.colwise().sum();
        Matrix d_pre = d_f * p.w2.transpose();
        d_pre = d_pre.array() * lc.ffn_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
        g.w1.noalias() += lc.ln1_out.transpose() * d_pre;
        g.b1.row(0) += d_pre.colwise().sum();
        d_h1.noalias() += d_pre * p.w1.transpose();

        const Matrix d_res1 = layer_norm_backward(d_h1, lc.ln1_xhat, lc.ln1_inv_std, p.ln1_gain, g.ln1_gain, g.ln1_bias);
        Matrix d_x = d_res1;
        Matrix d_a = d_res1;
        if (lc.attn_drop.size() > 0) d_a.array() *= lc.attn_drop.array();
        g.wo.noalias() += lc.context.transpose() * d_a;
        g.bo.row(0) += d_a.colwise().sum();
        const Matrix d_ctx = d_a * p.wo.transpose();

        Matrix dq = zeros(cache.rows, config.hidden_dim);
        Matrix dk = zeros(cache.keys, config.hidden_dim);
        Matrix dv = zeros(cache.keys, config.hidden_dim);
        for (std::size_t h = 0; h < heads; ++h) {
            const Eigen::Index c0 = idx(h * dh);
            const Matrix& prob = lc.probs[h];
            const auto d_ctx_h = d_ctx.middleCols(c0, idx(dh));
            const Matrix dp = d_ctx_h * lc.v.middleCols(c0, idx(dh)).transpose();
            dv.middleCols(c0, idx(dh)).noalias() += prob.transpose() * d_ctx_h;
            Matrix ds = prob.array() * (dp.array().colwise() - (dp.array() * prob.array()).rowwise().sum());
            ds *= scale;
            dq.middleCols(c0, idx(dh)).noalias() += ds * lc.k.middleCols(c0, idx(dh));
            dk.middleCols(c0, idx(dh)).noalias() += ds.transpose() * lc.q.middleCols(c0, idx(dh));
        }
        const auto x_keys = lc.input.topRows(keys);
        g.wq.noalias() += lc.input.transpose() * dq;
        g.bq.row(0) += dq.colwise().sum();
        d_x.noalias() += dq * p.wq.transpose();
        g.wk.noalias() += x_keys.transpose() * dk;
        g.bk.row(0) += dk.colwise().sum();
        d_x.topRows(keys).noalias() += dk * p.wk.transpose();
        g.wv.noalias() += x_keys.transpose() * dv;
        g.bv.row(0) += dv.colwise().sum();
        d_x.topRows(keys).noalias() += dv * p.wv.transpose();
        dx = std::move(d_x);
    }

    if (cache.embed_drop.size() > 0) dx.array() *= cache.embed_drop.array();
    for (std::size_t i = 0; i < cache.rows; ++i) {
        grads.token_embeddings.row(cache.ids[i]) += dx.row(idx(i));
        grads.position_embeddings.row(idx(i)) += dx.row(idx(i));
    }
}

// Adds log-softmax cross-entropy for one row; optionally writes the gradient
// wrt the logits scaled by `weight`.
double row_cross_entropy(const Eigen::Ref<const Eigen::RowVectorXd>& logits, int target, double weight,
                         Eigen::RowVectorXd* dlogits) {
    const double mx = logits.maxCoeff();
    const Eigen::RowVectorXd e = (logits.array() - mx).exp();
    const double sum = e.sum();
    const double loss = -(logits(target) - mx - std::log(sum));
    if (dlogits) {
        *dlogits = e / sum * weight;
        (*dlogits)(target) -= weight;
    }
    return loss;
}

struct BatchPass {
    double loss_sum = 0.0;
    std::size_t count = 0;
};

BatchPass run_batch(const TrainingBatch& batch, const ParameterSet& params, const ModelConfig& config,
                    Objective objective, const ForwardOptions& options, ParameterSet* grads) {
    const std::size_t n = batch.inputs.size();
    if (n == 0) throw Error(ErrorKind::EmptyBatch, "batch has no inputs");
    if (!params.all_finite()) throw Error(ErrorKind::NumericError, "non-finite parameter");

    std::size_t total = 0;
    if (objective == Objective::Mlm) {
        if (batch.token_targets.size() != n)
            throw Error(ErrorKind::ShapeError, "token_targets must have one row per input");
        for (std::size_t b = 0; b < n; ++b) {
            const auto& t = batch.token_targets[b];
            if (t.size() != batch.inputs[b].ids.size())
                throw Error(ErrorKind::ShapeError, "token_targets row length differs from input length");
            for (std::size_t i = 0; i < t.size(); ++i) {
                if (t[i] == kIgnoreIndex) continue;
                if (i >= batch.inputs[b].real_len)
                    throw Error(ErrorKind::InvalidInput, "target set on a padding position");
                if (t[i] < 0 || static_cast<std::size_t>(t[i]) >= config.vocab_size)
                    throw Error(ErrorKind::ShapeError, "target id outside vocabulary");
                ++total;
            }
        }
    } else {
        if (batch.labels.size() != n) throw Error(ErrorKind::ShapeError, "labels must have one entry per input");
        for (int y : batch.labels)
            if (y != 0 && y != 1) throw Error(ErrorKind::InvalidInput, "class label must be 0 or 1");
        total = n;
    }
    if (total == 0) throw Error(ErrorKind::EmptyBatch, "every target is ignored");

    const double weight = 1.0 / static_cast<double>(total);
    BatchPass pass;
    pass.count = total;
    for (std::size_t b = 0; b < n; ++b) {
        ForwardOptions fo = options;
        fo.real_rows_only = true;
        fo.dropout_seed = mix_seed(options.dropout_seed, b);
        const EncoderCache cache = forward_encoder_cached(batch.inputs[b], params, config, fo);
        const Matrix& h = cache.output;
        Matrix dh;
        if (grads) dh = zeros(cache.rows, config.hidden_dim);

        if (objective == Objective::Mlm) {
            const auto& t = batch.token_targets[b];
            std::vector<Eigen::Index> sel;
            for (std::size_t i = 0; i < t.size(); ++i)
                if (t[i] != kIgnoreIndex) sel.push_back(idx(i));
            if (sel.empty()) continue;
            Matrix hs(idx(sel.size()), h.cols());
            for (std::size_t s = 0; s < sel.size(); ++s) hs.row(idx(s)) = h.row(sel[s]);
            Matrix logits = hs * params.token_embeddings.transpose();
            logits.rowwise() += params.mlm_bias.row(0);
            Matrix dlogits;
            if (grads) dlogits.resize(logits.rows(), logits.cols());
            for (std::size_t s = 0; s < sel.size(); ++s) {
                Eigen::RowVectorXd dl;
                pass.loss_sum += row_cross_entropy(logits.row(idx(s)), t[static_cast<std::size_t>(sel[s])], weight,
                                                   grads ? &dl : nullptr);
                if (grads) dlogits.row(idx(s)) = dl;
            }
            if (grads) {
                const Matrix dhs = dlogits * params.token_embeddings;
                grads->token_embeddings.noalias() += dlogits.transpose() * hs;
                grads->mlm_bias.row(0) += dlogits.colwise().sum();
                for (std::size_t s = 0; s < sel.size(); ++s) dh.row(sel[s]) += dhs.row(idx(s));
            }
        } else {
            const Eigen::RowVectorXd cls = h.row(0);
            const Eigen::RowVectorXd pooled =
                ((cls * params.pooler_w).array() + params.pooler_b.row(0).array()).tanh();
            const Eigen::RowVectorXd logits = pooled * params.classifier_w + params.classifier_b.row(0);
            Eigen::RowVectorXd dl;
            pass.loss_sum += row_cross_entropy(logits, batch.labels[b], weight, grads ? &dl : nullptr);
            if (grads) {
                grads->classifier_w.noalias() += pooled.transpose() * dl;
                grads->classifier_b.row(0) += dl;
                const Eigen::RowVectorXd dpooled = dl * params.classifier_w.transpose();
                const Eigen::RowVectorXd dz = dpooled.array() * (1.0 - pooled.array().square());
                grads->pooler_w.noalias() += cls.transpose() * dz;
                grads->pooler_b.row(0) += dz;
                dh.row(0) = dz * params.pooler_w.transpose();
            }
        }
        if (grads) backward_encoder(cache, std::move(dh), params, config, *grads);
    }
    return pass;
}

} // namespace

void ModelConfig::validate() const {
    if (vocab_size < 1 || max_seq_len < 1 || hidden_dim < 1 || num_layers < 1 || num_heads < 1 || ffn_dim < 1)
        throw Error(ErrorKind::InvalidConfig, "model dimensions must all be at least 1");
    if (hidden_dim % num_heads != 0)
        throw Error(ErrorKind::InvalidConfig, "hidden_dim must be divisible by num_heads");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw Error(ErrorKind::InvalidConfig, "dropout_rate must be in [0, 1)");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidConfig, "learning_rate must be positive");
    if (!(adam_epsilon > 0.0)) throw Error(ErrorKind::InvalidConfig, "adam_epsilon must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw Error(ErrorKind::InvalidConfig, "adam betas must be in [0, 1)");
    if (batch_size < 1) throw Error(ErrorKind::InvalidConfig, "batch_size must be at least 1");
}

void ParameterSet::for_each(const std::function<void(const std::string&, Matrix&)>& fn) {
    visit_all(*this, fn);
}

void ParameterSet::for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const {
    visit_all(*this, [&](const std::string& name, Matrix& m) { fn(name, m); });
}

std::size_t ParameterSet::parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
}

bool ParameterSet::all_finite() const {
    bool ok = true;
    for_each([&](const std::string&, const Matrix& m) { ok = ok && m.allFinite(); });
    return ok;
}

std::vector<TensorSpec> tensor_specs(const ModelConfig& c) {
    std::vector<TensorSpec> specs = {{"embeddings.token", c.vocab_size, c.hidden_dim},
                                     {"embeddings.position", c.max_seq_len, c.hidden_dim}};
    const std::size_t d = c.hidden_dim;
    for (std::size_t i = 0; i < c.num_layers; ++i) {
        const std::string p = "layer." + std::to_string(i) + ".";
        for (const char* part : {"query", "key", "value", "output"}) {
            specs.push_back({p + "attn." + part + ".weight", d, d});
            specs.push_back({p + "attn." + part + ".bias", 1, d});
        }
        specs.push_back({p + "ln1.gain", 1, d});
        specs.push_back({p + "ln1.bias", 1, d});
        specs.push_back({p + "ffn.in.weight", d, c.ffn_dim});
        specs.push_back({p + "ffn.in.bias", 1, c.ffn_dim});
        specs.push_back({p + "ffn.out.weight", c.ffn_dim, d});
        specs.push_back({p + "ffn.out.bias", 1, d});
        specs.push_back({p + "ln2.gain", 1, d});
        specs.push_back({p + "ln2.bias", 1, d});
    }
    specs.push_back({"mlm.bias", 1, c.vocab_size});
    specs.push_back({"pooler.weight", d, d});
    specs.push_back({"pooler.bias", 1, d});
    specs.push_back({"classifier.weight", d, 2});
    specs.push_back({"classifier.bias", 1, 2});
    return specs;
}

void check_shapes(const ParameterSet& params, const ModelConfig& config) {
    const auto specs = tensor_specs(config);
    if (params.layers.size() != config.num_layers)
        throw Error(ErrorKind::ShapeError, "layer count " + std::to_string(params.layers.size()) + " != " +
                                               std::to_string(config.num_layers));
    std::size_t i = 0;
    params.for_each([&](const std::string& name, const Matrix& m) {
        const auto& s = specs.at(i++);
        if (s.name != name || static_cast<std::size_t>(m.rows()) != s.rows ||
            static_cast<std::size_t>(m.cols()) != s.cols)
            throw Error(ErrorKind::ShapeError, "tensor " + name + " has shape " + std::to_string(m.rows()) + "x" +
                                                   std::to_string(m.cols()) + ", expected " +
                                                   std::to_string(s.rows) + "x" + std::to_string(s.cols));
    });
}

ParameterSet zeros_like(const ParameterSet& params) {
    ParameterSet z = params;
    z.for_each([](const std::string&, Matrix& m) { m.setZero(); });
    return z;
}

ParameterSet init_parameters(const ModelConfig& config, std::uint64_t seed, bool f32_storage) {
    config.validate();
    ParameterSet p;
    p.layers.resize(config.num_layers);
    const auto specs = tensor_specs(config);
    std::size_t i = 0;
    Rng rng(seed);
    p.for_each([&](const std::string& name, Matrix& m) {
        const auto& s = specs[i++];
        m = zeros(s.rows, s.cols);
        if (name.ends_with(".gain")) {
            m.setOnes();
        } else if (is_weight(name)) {
            for (Eigen::Index k = 0; k < m.size(); ++k) {
                const double w = rng.truncated_normal(0.02);
                m.data()[k] = f32_storage ? round_f32(w) : w;
            }
        }
    });
    init_classifier_head(p, config, mix_seed(seed, 0xC1A55), f32_storage);
    return p;
}

void init_classifier_head(ParameterSet& params, const ModelConfig& config, std::uint64_t seed, bool f32_storage) {
    Rng rng(seed);
    auto fill = [&](Matrix& m, std::size_t r, std::size_t c) {
        m = zeros(r, c);
        for (Eigen::Index k = 0; k < m.size(); ++k) {
            const double w = rng.truncated_normal(0.02);
            m.data()[k] = f32_storage ? round_f32(w) : w;
        }
    };
    fill(params.pooler_w, config.hidden_dim, config.hidden_dim);
    params.pooler_b = zeros(1, config.hidden_dim);
    fill(params.classifier_w, config.hidden_dim, 2);
    params.classifier_b = zeros(1, 2);
}

double gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + kGeluCoeff * x * x * x)));
}

double gelu_grad(double x) {
    const double u = kSqrt2OverPi * (x + kGeluCoeff * x * x * x);
    const double t = std::tanh(u);
    const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCoeff * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

EncoderCache forward_encoder_cached(const EncodedInput& input, const ParameterSet& params, const ModelConfig& config,
                                    const ForwardOptions& options) {
    validate_input(input, config);
    check_shapes(params, config);

    const bool dropout = options.mode == Mode::Train && config.dropout_rate > 0.0;
    Rng rng(options.dropout_seed);
    const std::size_t heads = config.num_heads;
    const std::size_t dh = config.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    EncoderCache cache;
    cache.keys = input.real_len;
    cache.rows = options.real_rows_only ? input.real_len : input.ids.size();
    cache.ids.assign(input.ids.begin(), input.ids.begin() + static_cast<std::ptrdiff_t>(cache.rows));
    const Eigen::Index rows = idx(cache.rows);
    const Eigen::Index keys = idx(cache.keys);

    Matrix x(rows, idx(config.hidden_dim));
    for (Eigen::Index i = 0; i < rows; ++i)
        x.row(i) = params.token_embeddings.row(input.ids[static_cast<std::size_t>(i)]) +
                   params.position_embeddings.row(i);
    if (dropout) {
        cache.embed_drop = dropout_mask(cache.rows, config.hidden_dim, config.dropout_rate, rng);
        x.array() *= cache.embed_drop.array();
    }

    cache.layers.resize(config.num_layers);
    for (std::size_t li = 0; li < config.num_layers; ++li) {
        const LayerParams& p = params.layers[li];
        LayerCache& lc = cache.layers[li];
        lc.input = std::move(x);

        lc.q = lc.input * p.wq;
        lc.q.rowwise() += p.bq.row(0);
        lc.k = lc.input.topRows(keys) * p.wk;
        lc.k.rowwise() += p.bk.row(0);
        lc.v = lc.input.topRows(keys) * p.wv;
        lc.v.rowwise() += p.bv.row(0);

        lc.context = zeros(cache.rows, config.hidden_dim);
        lc.probs.resize(heads);
        for (std::size_t h = 0; h < heads; ++h) {
            const Eigen::Index c0 = idx(h * dh);
            Matrix s = lc.q.middleCols(c0, idx(dh)) * lc.k.middleCols(c0, idx(dh)).transpose();
            s *= scale;
            softmax_rows(s);
            lc.context.middleCols(c0, idx(dh)).noalias() = s * lc.v.middleCols(c0, idx(dh));
            lc.probs[h] = std::move(s);
        }
        Matrix a = lc.context * p.wo;
        a.rowwise() += p.bo.row(0);
        if (dropout) {
            lc.attn_drop = dropout_mask(cache.rows, config.hidden_dim, config.dropout_rate, rng);
            a.array() *= lc.attn_drop.array();
        }
        layer_norm(lc.input + a, p.ln1_gain, p.ln1_bias, lc.ln1_xhat, lc.ln1_inv_std, lc.ln1_out);

        lc.ffn_pre = lc.ln1_out * p.w1;
        lc.ffn_pre.rowwise() += p.b1.row(0);
        lc.ffn_act = lc.ffn_pre.unaryExpr([](double v) { return gelu(v); });
        Matrix f = lc.ffn_act * p.w2;
        f.rowwise() += p.b2.row(0);
        if (dropout) {
            lc.ffn_drop = dropout_mask(cache.rows, config.hidden_dim, config.dropout_rate, rng);
            f.array() *= lc.ffn_drop.array();
        }
        Matrix out;
        layer_norm(lc.ln1_out + f, p.ln2_gain, p.ln2_bias, lc.ln2_xhat, lc.ln2_inv_std, out);
        x = std::move(out);
    }
    cache.output = std::move(x);
    return cache;
}

Matrix forward_encoder(const EncodedInput& input, const ParameterSet& params, const ModelConfig& config,
                       const ForwardOptions& options) {
    if (!params.all_finite()) throw Error(ErrorKind::NumericError, "non-finite parameter");
    return forward_encoder_cached(input, params, config, options).output;
}

Matrix forward_mlm(const Matrix& hidden, const ParameterSet& params) {
    if (hidden.cols() != params.token_embeddings.cols())
        throw Error(ErrorKind::ShapeError, "hidden width differs from embedding width");
    if (params.mlm_bias.cols() != params.token_embeddings.rows())
        throw Error(ErrorKind::ShapeError, "mlm bias width differs from vocabulary size");
    Matrix logits = hidden * params.token_embeddings.transpose();
    logits.rowwise() += params.mlm_bias.row(0);
    return logits;
}

Eigen::RowVector2d forward_classify(const Matrix& hidden, const ParameterSet& params) {
    if (hidden.rows() < 1 || hidden.cols() != params.pooler_w.rows() || params.classifier_w.cols() != 2)
        throw Error(ErrorKind::ShapeError, "classifier head shape mismatch");
    const Eigen::RowVectorXd pooled =
        ((hidden.row(0) * params.pooler_w).array() + params.pooler_b.row(0).array()).tanh();
    return pooled * params.classifier_w + params.classifier_b.row(0);
}

double cross_entropy(const Matrix& logits, std::span<const int> targets, int ignore_index) {
    if (static_cast<std::size_t>(logits.rows()) != targets.size())
        throw Error(ErrorKind::ShapeError, "targets must have one entry per logits row");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] == ignore_index) continue;
        if (targets[i] < 0 || targets[i] >= logits.cols())
            throw Error(ErrorKind::ShapeError, "target outside logits width");
        sum += row_cross_entropy(logits.row(idx(i)), targets[i], 1.0, nullptr);
        ++n;
    }
    if (n == 0) throw Error(ErrorKind::EmptyBatch, "every target is ignored");
    return sum / static_cast<double>(n);
}

GradientResult compute_gradients(const TrainingBatch& batch, const ParameterSet& params, const ModelConfig& config,
                                 Objective objective, const ForwardOptions& options) {
    GradientResult result;
    result.grads = zeros_like(params);
    const BatchPass pass = run_batch(batch, params, config, objective, options, &result.grads);
    result.loss = pass.loss_sum / static_cast<double>(pass.count);
    result.target_count = pass.count;
    if (!std::isfinite(result.loss)) throw Error(ErrorKind::NumericError, "non-finite loss");
    return result;
}

double compute_loss(const TrainingBatch& batch, const ParameterSet& params, const ModelConfig& config,
                    Objective objective, const ForwardOptions& options) {
    const BatchPass pass = run_batch(batch, params, config, objective, options, nullptr);
    return pass.loss_sum / static_cast<double>(pass.count);
}

OptimizerState OptimizerState::fresh(const ParameterSet& params) {
    return OptimizerState{zeros_like(params), zeros_like(params), 0};
}

void adam_step(ParameterSet& params, const ParameterSet& grads, OptimizerState& state, const TrainConfig& tc) {
    tc.validate();
    std::vector<Matrix*> p_list, m_list, v_list;
    std::vector<const Matrix*> g_list;
    params.for_each([&](const std::string&, Matrix& m) { p_list.push_back(&m); });
    state.m.for_each([&](const std::string&, Matrix& m) { m_list.push_back(&m); });
    state.v.for_each([&](const std::string&, Matrix& m) { v_list.push_back(&m); });
    grads.for_each([&](const std::string&, const Matrix& m) { g_list.push_back(&m); });
    if (g_list.size() != p_list.size() || m_list.size() != p_list.size() || v_list.size() != p_list.size())
        throw Error(ErrorKind::ShapeError, "optimizer state does not mirror parameters");

    const double t = static_cast<double>(state.t + 1);
    const double c1 = 1.0 - std::pow(tc.adam_beta1, t);
    const double c2 = 1.0 - std::pow(tc.adam_beta2, t);

    std::vector<Matrix> new_p(p_list.size()), new_m(p_list.size()), new_v(p_list.size());
    for (std::size_t i = 0; i < p_list.size(); ++i) {
        const Matrix& g = *g_list[i];
        if (g.rows() != p_list[i]->rows() || g.cols() != p_list[i]->cols() || m_list[i]->rows() != g.rows() ||
            m_list[i]->cols() != g.cols() || v_list[i]->rows() != g.rows() || v_list[i]->cols() != g.cols())
            throw Error(ErrorKind::ShapeError, "gradient shape mismatch in adam_step");
        new_m[i] = tc.adam_beta1 * *m_list[i] + (1.0 - tc.adam_beta1) * g;
        new_v[i] = tc.adam_beta2 * *v_list[i] + (1.0 - tc.adam_beta2) * g.cwiseProduct(g);
        new_p[i] = p_list[i]->array() -
                   tc.learning_rate * (new_m[i].array() / c1) / ((new_v[i].array() / c2).sqrt() + tc.adam_epsilon);
        if (tc.f32_storage) new_p[i] = new_p[i].unaryExpr([](double x) { return round_f32(x); });
        if (!new_p[i].allFinite() || !new_m[i].allFinite() || !new_v[i].allFinite())
            throw Error(ErrorKind::NumericError, "non-finite Adam update");
    }
    for (std::size_t i = 0; i < p_list.size(); ++i) {
        *p_list[i] = std::move(new_p[i]);
        *m_list[i] = std::move(new_m[i]);
        *v_list[i] = std::move(new_v[i]);
    }
    state.t += 1;
}

Eigen::RowVector2d classify_logits(const EncodedInput& input, const ParameterSet& params, const ModelConfig& config) {
    ForwardOptions fo;
    fo.real_rows_only = true;
    const EncoderCache cache = forward_encoder_cached(input, params, config, fo);
    return forward_classify(cache.output, params);
}

int predict_class(const EncodedInput& input, const ParameterSet& params, const ModelConfig& config) {
    const Eigen::RowVector2d logits = classify_logits(input, params, config);
    return logits(1) > logits(0) ? 1 : 0;
}

} // namespace esglm
