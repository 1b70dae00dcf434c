#include "tslt/models.hpp"

#include "tslt/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace tslt {

std::string to_string(Architecture arch) { return arch == Architecture::tslt ? "tslt" : "mlp"; }

Architecture parse_architecture(const std::string& name) {
    if (name == "tslt") {
        return Architecture::tslt;
    }
    if (name == "mlp") {
        return Architecture::mlp;
    }
    throw Error("unknown architecture '" + name + "' (expected tslt or mlp)");
}

namespace {

void glorot_uniform(Matrix& w, std::size_t fan_in, std::size_t fan_out, RandSource& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : w.values()) {
        v = rng.uniform(-limit, limit);
    }
}

void glorot_dense(DenseLayer& layer, RandSource& rng) {
    glorot_uniform(layer.weights, layer.in_features(), layer.out_features(), rng);
}

void check_dims(std::size_t input_dim, std::size_t num_classes) {
    if (input_dim < 1) {
        throw Error("input_dim must be at least 1");
    }
    if (num_classes < 2) {
        throw Error("num_classes must be at least 2, got " + std::to_string(num_classes));
    }
}

void check_width(const Matrix& x, std::size_t input_dim) {
    if (x.cols() != input_dim) {
        throw ShapeError("model expects " + std::to_string(input_dim) + " input features, got " + shape_string(x));
    }
}


Matrix output_delta(const Matrix& probs, const Matrix& onehot) {
    if (probs.rows() != onehot.rows() || probs.cols() != onehot.cols()) {
        throw ShapeError("targets " + shape_string(onehot) + " do not match cached probabilities " +
                         shape_string(probs));
    }
    Matrix delta = probs;
    const double n = static_cast<double>(probs.rows());
    for (std::size_t i = 0; i < delta.size(); ++i) {
        delta.values()[i] = (delta.values()[i] - onehot.values()[i]) / n;
    }
    return delta;
}

}  // namespace

// ---------------------------------------------------------------------------
// Transformer

TsltParams build_tslt(std::size_t input_dim, std::size_t num_classes, std::uint64_t seed) {
    check_dims(input_dim, num_classes);
    RandSource rng(seed);
    TsltParams p;
    p.input_dim = input_dim;
    p.num_classes = num_classes;
    p.dense1 = make_dense(input_dim, kBottleneckWidth, Activation::relu);
    p.layernorm = make_layernorm(kModelDim);
    p.mha = make_mha(kModelDim, kHeads, kKeyDim, kSeqLen);
    p.dense2 = make_dense(kModelDim, kHiddenWidth, Activation::relu);
    p.output = make_dense(kHiddenWidth, num_classes, Activation::none);

    glorot_dense(p.dense1, rng);
    glorot_uniform(p.mha.query_weights, kModelDim, kHeads * kKeyDim, rng);
    glorot_uniform(p.mha.key_weights, kModelDim, kHeads * kKeyDim, rng);
    glorot_uniform(p.mha.value_weights, kModelDim, kHeads * kKeyDim, rng);
    glorot_uniform(p.mha.output_weights, kHeads * kKeyDim, kModelDim, rng);
    glorot_dense(p.dense2, rng);
    glorot_dense(p.output, rng);
    return p;
}

TsltParams zeros_like(const TsltParams& p) {
    TsltParams g = p;
    for (auto& t : trainable_tensors(g)) {
        t.value->fill(0.0);
    }
    return g;
}

Matrix reshape_to_sequence(const Matrix& h1) {
    if (h1.cols() != kBottleneckWidth) {
        throw ShapeError("reshape expects " + std::to_string(kBottleneckWidth) + " columns, got " +
                         shape_string(h1));
    }
    return h1.reshaped(h1.rows() * kSeqLen, kModelDim);
}

Matrix flatten_sequence(const Matrix& sequence) {
    if (sequence.cols() != kModelDim || sequence.rows() % kSeqLen != 0) {
        throw ShapeError("cannot flatten " + shape_string(sequence) + " into rows of " +
                         std::to_string(kBottleneckWidth));
    }
    return sequence.reshaped(sequence.rows() / kSeqLen, kBottleneckWidth);
}

Matrix tslt_forward(const TsltParams& p, const Matrix& x, Mode mode, RandSource* rng, TsltCache* cache) {
    check_width(x, p.input_dim);
    DenseCache* c_dense1 = cache ? &cache->dense1 : nullptr;
    LayerNormCache* c_norm = cache ? &cache->layernorm : nullptr;
    MhaCache* c_mha = cache ? &cache->mha : nullptr;
    DenseCache* c_dense2 = cache ? &cache->dense2 : nullptr;
    Matrix* c_mask = cache ? &cache->dropout_mask : nullptr;
    DenseCache* c_out = cache ? &cache->output : nullptr;

    const Matrix h1 = dense_forward(p.dense1, x, c_dense1);
    Matrix sequence = reshape_to_sequence(h1);
    const Matrix normed = layernorm_forward(p.layernorm, sequence, c_norm);
    Matrix attended = mha_forward(p.mha, normed, c_mha);
    Matrix pooled = global_average_pool(attended, kSeqLen);
    const Matrix hidden = dense_forward(p.dense2, pooled, c_dense2);
    const Matrix dropped = dropout_apply(p.dropout, hidden, mode, rng, c_mask);
    const Matrix logits = dense_forward(p.output, dropped, c_out);
    Matrix probs = rowwise_softmax(logits);

    if (cache != nullptr) {
        cache->mode = mode;
        cache->batch = x.rows();
        cache->sequence = std::move(sequence);
        cache->attended = std::move(attended);
        cache->pooled = std::move(pooled);
        cache->probs = probs;
    }
    return probs;
}

TsltParams tslt_backward(const TsltParams& p, const TsltCache& cache, const Matrix& onehot) {
    if (cache.batch == 0 || cache.probs.rows() != cache.batch) {
        throw Error("tslt_backward needs the cache of a forward pass on the same batch");
    }
    TsltParams g = zeros_like(p);
    const Matrix delta = output_delta(cache.probs, onehot);
    const Matrix d_dropped = dense_backward(p.output, cache.output, delta, g.output);
    const Matrix d_hidden = dropout_backward(cache.dropout_mask, d_dropped);
    const Matrix d_pooled = dense_backward(p.dense2, cache.dense2, d_hidden, g.dense2);
    const Matrix d_attended = global_average_pool_backward(d_pooled, kSeqLen);
    const Matrix d_normed = mha_backward(p.mha, cache.mha, d_attended, g.mha);
    const Matrix d_sequence = layernorm_backward(p.layernorm, cache.layernorm, d_normed, g.layernorm);
    dense_backward(p.dense1, cache.dense1, flatten_sequence(d_sequence), g.dense1);
    return g;
}

// ---------------------------------------------------------------------------
// MLP

MlpParams build_mlp(std::size_t input_dim, std::size_t num_classes, std::uint64_t seed) {
    check_dims(input_dim, num_classes);
    RandSource rng(seed);
    MlpParams p;
    p.input_dim = input_dim;
    p.num_classes = num_classes;
    p.dense1 = make_dense(input_dim, kMlpWidths[0], Activation::relu);
    p.norm1 = make_batchnorm(kMlpWidths[0]);
    p.dense2 = make_dense(kMlpWidths[0], kMlpWidths[1], Activation::relu);
    p.norm2 = make_batchnorm(kMlpWidths[1]);
    p.dense3 = make_dense(kMlpWidths[1], kMlpWidths[2], Activation::relu);
    p.output = make_dense(kMlpWidths[2], num_classes, Activation::none);
    glorot_dense(p.dense1, rng);
    glorot_dense(p.dense2, rng);
    glorot_dense(p.dense3, rng);
    glorot_dense(p.output, rng);
    return p;
}

MlpParams zeros_like(const MlpParams& p) {
    MlpParams g = p;
    for (auto& t : trainable_tensors(g)) {
        t.value->fill(0.0);
    }
    return g;
}

Matrix mlp_forward(MlpParams& p, const Matrix& x, Mode mode, RandSource* rng, MlpCache* cache) {
    check_width(x, p.input_dim);
    MlpCache local;
    MlpCache& c = cache ? *cache : local;

    Matrix h = dense_forward(p.dense1, x, &c.dense1);
    h = batchnorm_forward(p.norm1, h, mode, &c.norm1);
    h = dropout_apply(p.dropout, h, mode, rng, &c.mask1);
    h = dense_forward(p.dense2, h, &c.dense2);
    h = batchnorm_forward(p.norm2, h, mode, &c.norm2);
    h = dropout_apply(p.dropout, h, mode, rng, &c.mask2);
    h = dense_forward(p.dense3, h, &c.dense3);
    h = dropout_apply(p.dropout, h, mode, rng, &c.mask3);
    const Matrix logits = dense_forward(p.output, h, &c.output);
    Matrix probs = rowwise_softmax(logits);
    c.mode = mode;
    c.batch = x.rows();
    c.probs = probs;
    return probs;
}

Matrix mlp_forward(const MlpParams& p, const Matrix& x) {
    check_width(x, p.input_dim);
    Matrix h = dense_forward(p.dense1, x);
    h = batchnorm_forward(p.norm1, h);
    h = dense_forward(p.dense2, h);
    h = batchnorm_forward(p.norm2, h);
    h = dense_forward(p.dense3, h);
    return rowwise_softmax(dense_forward(p.output, h));
}

MlpParams mlp_backward(const MlpParams& p, const MlpCache& cache, const Matrix& onehot) {
    if (cache.batch == 0 || cache.probs.rows() != cache.batch) {
        throw Error("mlp_backward needs the cache of a forward pass on the same batch");
    }
    MlpParams g = zeros_like(p);
    Matrix d = output_delta(cache.probs, onehot);
    d = dense_backward(p.output, cache.output, d, g.output);
    d = dropout_backward(cache.mask3, d);
    d = dense_backward(p.dense3, cache.dense3, d, g.dense3);
    d = dropout_backward(cache.mask2, d);
    d = batchnorm_backward(p.norm2, cache.norm2, d, g.norm2);
    d = dense_backward(p.dense2, cache.dense2, d, g.dense2);
    d = dropout_backward(cache.mask1, d);
    d = batchnorm_backward(p.norm1, cache.norm1, d, g.norm1);
    dense_backward(p.dense1, cache.dense1, d, g.dense1);
    return g;
}

// ---------------------------------------------------------------------------
// Variant helpers

Architecture architecture(const ModelParams& params) {
    return std::holds_alternative<TsltParams>(params) ? Architecture::tslt : Architecture::mlp;
}

std::size_t input_dim(const ModelParams& params) {
    return std::visit([](const auto& p) { return p.input_dim; }, params);
}

std::size_t num_classes(const ModelParams& params) {
    return std::visit([](const auto& p) { return p.num_classes; }, params);
}

ModelParams build_model(Architecture arch, std::size_t input_dim, std::size_t num_classes, std::uint64_t seed) {
    if (arch == Architecture::tslt) {
        return build_tslt(input_dim, num_classes, seed);
    }
    return build_mlp(input_dim, num_classes, seed);
}

ModelParams zeros_like(const ModelParams& params) {
    return std::visit([](const auto& p) -> ModelParams { return zeros_like(p); }, params);
}

std::vector<TensorRef> trainable_tensors(TsltParams& p) {
    return {
        {"dense1.weights", 1, &p.dense1.weights},
        {"dense1.bias", 1, &p.dense1.bias},
        {"layernorm.gamma", 2, &p.layernorm.gamma},
        {"layernorm.beta", 2, &p.layernorm.beta},
        {"mha.query_weights", 3, &p.mha.query_weights},
        {"mha.query_bias", 3, &p.mha.query_bias},
        {"mha.key_weights", 3, &p.mha.key_weights},
        {"mha.key_bias", 3, &p.mha.key_bias},
        {"mha.value_weights", 3, &p.mha.value_weights},
        {"mha.value_bias", 3, &p.mha.value_bias},
        {"mha.output_weights", 3, &p.mha.output_weights},
        {"mha.output_bias", 3, &p.mha.output_bias},
        {"dense2.weights", 4, &p.dense2.weights},
        {"dense2.bias", 4, &p.dense2.bias},
        {"output.weights", 5, &p.output.weights},
        {"output.bias", 5, &p.output.bias},
    };
}

std::vector<TensorRef> trainable_tensors(MlpParams& p) {
    return {
        {"dense1.weights", 1, &p.dense1.weights}, {"dense1.bias", 1, &p.dense1.bias},
        {"norm1.gamma", 2, &p.norm1.gamma},       {"norm1.beta", 2, &p.norm1.beta},
        {"dense2.weights", 3, &p.dense2.weights}, {"dense2.bias", 3, &p.dense2.bias},
        {"norm2.gamma", 4, &p.norm2.gamma},       {"norm2.beta", 4, &p.norm2.beta},
        {"dense3.weights", 5, &p.dense3.weights}, {"dense3.bias", 5, &p.dense3.bias},
        {"output.weights", 6, &p.output.weights}, {"output.bias", 6, &p.output.bias},
    };
}

std::vector<TensorRef> trainable_tensors(ModelParams& p) {
    return std::visit([](auto& params) { return trainable_tensors(params); }, p);
}

std::vector<TensorRef> stored_tensors(ModelParams& p) {
    std::vector<TensorRef> refs = trainable_tensors(p);
    if (auto* mlp = std::get_if<MlpParams>(&p)) {
        refs.push_back({"norm1.running_mean", 2, &mlp->norm1.running_mean});
        refs.push_back({"norm1.running_var", 2, &mlp->norm1.running_var});
        refs.push_back({"norm2.running_mean", 4, &mlp->norm2.running_mean});
        refs.push_back({"norm2.running_var", 4, &mlp->norm2.running_var});
    }
    return refs;
}

Matrix predict_proba(const ModelParams& params, const Matrix& x, std::size_t block_rows) {
    const std::size_t k = num_classes(params);
    check_width(x, input_dim(params));
    block_rows = std::max<std::size_t>(block_rows, 1);
    Matrix out(x.rows(), k);
    for (std::size_t start = 0; start < x.rows(); start += block_rows) {
        const std::size_t rows = std::min(block_rows, x.rows() - start);
        std::vector<double> slice(x.values().begin() + static_cast<std::ptrdiff_t>(start * x.cols()),
                                  x.values().begin() + static_cast<std::ptrdiff_t>((start + rows) * x.cols()));
        const Matrix block(rows, x.cols(), std::move(slice));
        const Matrix probs = std::visit(
            [&](const auto& p) -> Matrix {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, TsltParams>) {
                    return tslt_forward(p, block, Mode::infer, nullptr, nullptr);
                } else {
                    return mlp_forward(p, block);
                }
            },
            params);
        std::copy(probs.values().begin(), probs.values().end(),
                  out.values().begin() + static_cast<std::ptrdiff_t>(start * k));
    }
    return out;
}

void quantize_to_float(ModelParams& params) {
    for (auto& t : stored_tensors(params)) {
        for (double& v : t.value->values()) {
            v = static_cast<double>(static_cast<float>(v));
        }
    }
}

// ---------------------------------------------------------------------------
// Parameter accounting

namespace {

std::vector<std::size_t> counts_by_layer(std::vector<TensorRef> refs, std::size_t layers) {
    std::vector<std::size_t> counts(layers + 1, 0);
    for (const auto& r : refs) {
        counts.at(r.layer_id) += r.value->size();
    }
    return counts;
}

std::string shape1(std::size_t n) { return "(" + std::to_string(n) + ",)"; }

}  // namespace

ParamTable count_params(const TsltParams& p) {
    // enumeration reads the tensors only
    const auto counts = counts_by_layer(trainable_tensors(const_cast<TsltParams&>(p)), 5);
    ParamTable t;
    t.rows = {
        {"Input", "Input Layer", shape1(p.input_dim), "-", 0, "", std::nullopt},
        {"Dense_1", "Fully Connected (128)", "(128)", "ReLU", counts[1], "input_dim x 128 + 128", std::nullopt},
        {"Reshape", "Reshape", "(16, 8)", "-", 0, "", std::nullopt},
        {"LayerNormalization", "Normalization", "(16, 8)", "-", counts[2], "", 32},
        {"MultiHeadAttention", "Self-Attention (2 heads, key_dim=4)", "(16, 8)", "-", counts[3], "", 1440},
        {"GlobalAveragePooling1D", "Pooling", "(8,)", "-", 0, "", std::nullopt},
        {"Dense_2", "Fully Connected (64)", "(64)", "ReLU", counts[4], "", std::nullopt},
        {"Dropout", "Regularization (0.3)", "(64)", "-", 0, "", std::nullopt},
        {"Output", "Fully Connected", shape1(p.num_classes), "Softmax", counts[5],
         "64 x num_classes + num_classes", std::nullopt},
    };
    for (const auto& r : t.rows) {
        t.total += r.params;
    }
    return t;
}

ParamTable count_params(const MlpParams& p) {
    const auto counts = counts_by_layer(trainable_tensors(const_cast<MlpParams&>(p)), 6);
    ParamTable t;
    t.rows = {
        {"Input", "Input Layer", shape1(p.input_dim), "-", 0, "", std::nullopt},
        {"Dense_1", "Fully Connected (512)", "(512)", "ReLU", counts[1], "input_dim x 512 + 512", std::nullopt},
        {"BatchNormalization_1", "Normalization", "(512)", "-", counts[2], "2 x 512 trainable", std::nullopt},
        {"Dropout_1", "Regularization (0.3)", "(512)", "-", 0, "", std::nullopt},
        {"Dense_2", "Fully Connected (256)", "(256)", "ReLU", counts[3], "", std::nullopt},
        {"BatchNormalization_2", "Normalization", "(256)", "-", counts[4], "2 x 256 trainable", std::nullopt},
        {"Dropout_2", "Regularization (0.3)", "(256)", "-", 0, "", std::nullopt},
        {"Dense_3", "Fully Connected (128)", "(128)", "ReLU", counts[5], "", std::nullopt},
        {"Dropout_3", "Regularization (0.3)", "(128)", "-", 0, "", std::nullopt},
        {"Output", "Fully Connected", shape1(p.num_classes), "Softmax", counts[6],
         "128 x num_classes + num_classes", std::nullopt},
    };
    for (const auto& r : t.rows) {
        t.total += r.params;
    }
    return t;
}

ParamTable count_params(const ModelParams& p) {
    return std::visit([](const auto& params) { return count_params(params); }, p);
}

std::string format_param_table(const ParamTable& table) {
    std::ostringstream out;
    out << std::left << std::setw(24) << "Layer" << std::setw(38) << "Type" << std::setw(14) << "Output Shape"
        << std::setw(12) << "Activation" << std::right << std::setw(10) << "Params" << "\n";
    for (const auto& r : table.rows) {
        out << std::left << std::setw(24) << r.name << std::setw(38) << r.type << std::setw(14) << r.output_shape
            << std::setw(12) << r.activation << std::right << std::setw(10) << r.params;
        if (!r.formula.empty()) {
            out << "  = " << r.formula;
        }
        if (r.reference_params && *r.reference_params != r.params) {
            out << "  [reference table lists " << *r.reference_params << ", delta "
                << static_cast<long long>(r.params) - static_cast<long long>(*r.reference_params) << "]";
        }
        out << "\n";
    }
    out << "Total trainable parameters: " << table.total << "\n";
    return out.str();
}

}  // namespace tslt
