#include "tslt/layers.hpp"

#include "tslt/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace tslt {

namespace {

void require(bool condition, const std::string& message) {
    if (!condition) {
        throw ShapeError(message);
    }
}

constexpr double kLogFloor = 1e-12;

}  // namespace

// ---------------------------------------------------------------------------
// Dense

DenseLayer make_dense(std::size_t in, std::size_t out, Activation activation) {
    return DenseLayer{Matrix(out, in), Matrix(1, out), activation};
}

Matrix dense_forward(const DenseLayer& layer, const Matrix& x, DenseCache* cache) {
    require(x.cols() == layer.in_features(),
            "dense input " + shape_string(x) + " does not match weights " + shape_string(layer.weights));
    Matrix y = matmul_nt(x, layer.weights);
    add_row_vector(y, layer.bias);
    if (layer.activation == Activation::relu) {
        for (double& v : y.values()) {
            v = v > 0.0 ? v : 0.0;
        }
    }
    if (cache != nullptr) {
        cache->input = x;
        cache->output = y;
    }
    return y;
}

Matrix dense_backward(const DenseLayer& layer, const DenseCache& cache, const Matrix& upstream, DenseLayer& grads) {
    require(upstream.rows() == cache.output.rows() && upstream.cols() == cache.output.cols(),
            "dense upstream " + shape_string(upstream) + " does not match output " + shape_string(cache.output));
    Matrix delta = upstream;
    if (layer.activation == Activation::relu) {
        const auto out = cache.output.values();
        auto d = delta.values();
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (!(out[i] > 0.0)) {
                d[i] = 0.0;
            }
        }
    }
    grads.weights = matmul_tn(delta, cache.input);
    grads.bias = sum_over_rows(delta);
    grads.activation = layer.activation;
    return matmul(delta, layer.weights);
}

// ---------------------------------------------------------------------------
// LayerNorm

LayerNormLayer make_layernorm(std::size_t features, double epsilon) {
    return LayerNormLayer{Matrix(1, features, 1.0), Matrix(1, features, 0.0), epsilon};
}

Matrix layernorm_forward(const LayerNormLayer& layer, const Matrix& h, LayerNormCache* cache) {
    const std::size_t f = layer.features();
    require(h.cols() == f && f > 0,
            "layernorm input " + shape_string(h) + " does not match " + std::to_string(f) + " features");
    Matrix normalized(h.rows(), f);
    Matrix out(h.rows(), f);
    std::vector<double> inv_stds(h.rows());
    const auto gamma = layer.gamma.row(0);
    const auto beta = layer.beta.row(0);
    for (std::size_t i = 0; i < h.rows(); ++i) {
        const auto x = h.row(i);
        double mean = 0.0;
        for (double v : x) {
            mean += v;
        }
        mean /= static_cast<double>(f);
        double var = 0.0;
        for (double v : x) {
            var += (v - mean) * (v - mean);
        }
        var /= static_cast<double>(f);
        const double inv_std = 1.0 / std::sqrt(var + layer.epsilon);
        inv_stds[i] = inv_std;
        auto xn = normalized.row(i);
        auto y = out.row(i);
        for (std::size_t j = 0; j < f; ++j) {
            xn[j] = (x[j] - mean) * inv_std;
            y[j] = gamma[j] * xn[j] + beta[j];
        }
    }
    if (cache != nullptr) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_stds);
    }
    return out;
}

Matrix layernorm_backward(const LayerNormLayer& layer, const LayerNormCache& cache, const Matrix& upstream,
                          LayerNormLayer& grads) {
    const std::size_t f = layer.features();
    require(upstream.rows() == cache.normalized.rows() && upstream.cols() == f,
            "layernorm upstream " + shape_string(upstream) + " does not match cache " +
                shape_string(cache.normalized));
    grads.gamma = Matrix(1, f);
    grads.beta = Matrix(1, f);
    grads.epsilon = layer.epsilon;
    Matrix dx(upstream.rows(), f);
    const auto gamma = layer.gamma.row(0);
    auto dgamma = grads.gamma.row(0);
    auto dbeta = grads.beta.row(0);
    std::vector<double> dxn(f);
    for (std::size_t i = 0; i < upstream.rows(); ++i) {
        const auto dy = upstream.row(i);
        const auto xn = cache.normalized.row(i);
        double mean_dxn = 0.0;
        double mean_dxn_xn = 0.0;
        for (std::size_t j = 0; j < f; ++j) {
            dgamma[j] += dy[j] * xn[j];
            dbeta[j] += dy[j];
            dxn[j] = dy[j] * gamma[j];
            mean_dxn += dxn[j];
            mean_dxn_xn += dxn[j] * xn[j];
        }
        mean_dxn /= static_cast<double>(f);
        mean_dxn_xn /= static_cast<double>(f);
        auto out = dx.row(i);
        for (std::size_t j = 0; j < f; ++j) {
            out[j] = cache.inv_std[i] * (dxn[j] - mean_dxn - xn[j] * mean_dxn_xn);
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Multi-head attention

MhaLayer make_mha(std::size_t model_dim, std::size_t heads, std::size_t key_dim, std::size_t seq_len) {
    const std::size_t projected = heads * key_dim;
    MhaLayer layer;
    layer.heads = heads;
    layer.key_dim = key_dim;
    layer.seq_len = seq_len;
    layer.query_weights = Matrix(projected, model_dim);
    layer.query_bias = Matrix(1, projected);
    layer.key_weights = Matrix(projected, model_dim);
    layer.key_bias = Matrix(1, projected);
    layer.value_weights = Matrix(projected, model_dim);
    layer.value_bias = Matrix(1, projected);
    layer.output_weights = Matrix(model_dim, projected);
    layer.output_bias = Matrix(1, model_dim);
    return layer;
}

namespace {

Matrix project(const Matrix& x, const Matrix& weights, const Matrix& bias) {
    Matrix y = matmul_nt(x, weights);
    add_row_vector(y, bias);
    return y;
}

}  // namespace

Matrix mha_forward(const MhaLayer& layer, const Matrix& h, MhaCache* cache) {
    const std::size_t seq = layer.seq_len;
    const std::size_t kd = layer.key_dim;
    require(h.cols() == layer.model_dim() && seq > 0 && h.rows() % seq == 0,
            "attention input " + shape_string(h) + " is not a stack of (" + std::to_string(seq) + "x" +
                std::to_string(layer.model_dim()) + ") sequences");
    const std::size_t sequences = h.rows() / seq;
    const double scale = 1.0 / std::sqrt(static_cast<double>(kd));

    Matrix query = project(h, layer.query_weights, layer.query_bias);
    Matrix key = project(h, layer.key_weights, layer.key_bias);
    Matrix value = project(h, layer.value_weights, layer.value_bias);
    Matrix attention(sequences * layer.heads * seq, seq);
    Matrix context(h.rows(), layer.projected_dim());

    for (std::size_t s = 0; s < sequences; ++s) {
        const std::size_t base = s * seq;
        for (std::size_t head = 0; head < layer.heads; ++head) {
            const std::size_t off = head * kd;
            const std::size_t arow = (s * layer.heads + head) * seq;
            for (std::size_t i = 0; i < seq; ++i) {
                const auto q = query.row(base + i);
                auto a = attention.row(arow + i);
                double peak = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < seq; ++j) {
                    const auto k = key.row(base + j);
                    double dot = 0.0;
                    for (std::size_t d = 0; d < kd; ++d) {
                        dot += q[off + d] * k[off + d];
                    }
                    a[j] = dot * scale;
                    peak = std::max(peak, a[j]);
                }
                double total = 0.0;
                for (double& v : a) {
                    v = std::exp(v - peak);
                    total += v;
                }
                for (double& v : a) {
                    v /= total;
                }
                auto c = context.row(base + i);
                for (std::size_t j = 0; j < seq; ++j) {
                    const auto v = value.row(base + j);
                    for (std::size_t d = 0; d < kd; ++d) {
                        c[off + d] += a[j] * v[off + d];
                    }
                }
            }
        }
    }

    Matrix out = project(context, layer.output_weights, layer.output_bias);
    if (cache != nullptr) {
        cache->input = h;
        cache->query = std::move(query);
        cache->key = std::move(key);
        cache->value = std::move(value);
        cache->attention = std::move(attention);
        cache->context = std::move(context);
    }
    return out;
}

Matrix mha_backward(const MhaLayer& layer, const MhaCache& cache, const Matrix& upstream, MhaLayer& grads) {
    const std::size_t seq = layer.seq_len;
    const std::size_t kd = layer.key_dim;
    require(upstream.rows() == cache.input.rows() && upstream.cols() == layer.model_dim(),
            "attention upstream " + shape_string(upstream) + " does not match cache input " +
                shape_string(cache.input));
    const std::size_t sequences = upstream.rows() / seq;
    const double scale = 1.0 / std::sqrt(static_cast<double>(kd));

    grads.heads = layer.heads;
    grads.key_dim = layer.key_dim;
    grads.seq_len = layer.seq_len;
    grads.output_weights = matmul_tn(upstream, cache.context);
    grads.output_bias = sum_over_rows(upstream);
    const Matrix dcontext = matmul(upstream, layer.output_weights);

    Matrix dquery(upstream.rows(), layer.projected_dim());
    Matrix dkey(upstream.rows(), layer.projected_dim());
    Matrix dvalue(upstream.rows(), layer.projected_dim());
    std::vector<double> dscore(seq);

    for (std::size_t s = 0; s < sequences; ++s) {
        const std::size_t base = s * seq;
        for (std::size_t head = 0; head < layer.heads; ++head) {
            const std::size_t off = head * kd;
            const std::size_t arow = (s * layer.heads + head) * seq;
            for (std::size_t i = 0; i < seq; ++i) {
                const auto a = cache.attention.row(arow + i);
                const auto dc = dcontext.row(base + i);
                // dA[i][j] = dC_i · V_j, and dV_j += A[i][j] dC_i
                double weighted = 0.0;
                for (std::size_t j = 0; j < seq; ++j) {
                    const auto v = cache.value.row(base + j);
                    auto dv = dvalue.row(base + j);
                    double da = 0.0;
                    for (std::size_t d = 0; d < kd; ++d) {
                        da += dc[off + d] * v[off + d];
                        dv[off + d] += a[j] * dc[off + d];
                    }
                    dscore[j] = da;
                    weighted += a[j] * da;
                }
                // softmax Jacobian, then the 1/sqrt(key_dim) scaling
                const auto q = cache.query.row(base + i);
                auto dq = dquery.row(base + i);
                for (std::size_t j = 0; j < seq; ++j) {
                    const double ds = a[j] * (dscore[j] - weighted) * scale;
                    if (ds == 0.0) {
                        continue;
                    }
                    const auto k = cache.key.row(base + j);
                    auto dk = dkey.row(base + j);
                    for (std::size_t d = 0; d < kd; ++d) {
                        dq[off + d] += ds * k[off + d];
                        dk[off + d] += ds * q[off + d];
                    }
                }
            }
        }
    }

    grads.query_weights = matmul_tn(dquery, cache.input);
    grads.query_bias = sum_over_rows(dquery);
    grads.key_weights = matmul_tn(dkey, cache.input);
    grads.key_bias = sum_over_rows(dkey);
    grads.value_weights = matmul_tn(dvalue, cache.input);
    grads.value_bias = sum_over_rows(dvalue);

    Matrix dh = matmul(dquery, layer.query_weights);
    const Matrix dh_key = matmul(dkey, layer.key_weights);
    const Matrix dh_value = matmul(dvalue, layer.value_weights);
    for (std::size_t i = 0; i < dh.size(); ++i) {
        dh.values()[i] += dh_key.values()[i] + dh_value.values()[i];
    }
    return dh;
}

// ---------------------------------------------------------------------------
// Pooling

Matrix global_average_pool(const Matrix& h, std::size_t seq_len) {
    require(seq_len > 0 && h.rows() % seq_len == 0,
            "pooling input " + shape_string(h) + " is not a stack of " + std::to_string(seq_len) + "-row sequences");
    const std::size_t n = h.rows() / seq_len;
    Matrix out(n, h.cols());
    const double scale = 1.0 / static_cast<double>(seq_len);
    for (std::size_t s = 0; s < n; ++s) {
        auto dst = out.row(s);
        for (std::size_t i = 0; i < seq_len; ++i) {
            const auto src = h.row(s * seq_len + i);
            for (std::size_t j = 0; j < src.size(); ++j) {
                dst[j] += src[j];
            }
        }
        for (double& v : dst) {
            v *= scale;
        }
    }
    return out;
}

Matrix global_average_pool_backward(const Matrix& upstream, std::size_t seq_len) {
    require(seq_len > 0, "pooling sequence length must be positive");
    Matrix out(upstream.rows() * seq_len, upstream.cols());
    const double scale = 1.0 / static_cast<double>(seq_len);
    for (std::size_t s = 0; s < upstream.rows(); ++s) {
        const auto g = upstream.row(s);
        for (std::size_t i = 0; i < seq_len; ++i) {
            auto dst = out.row(s * seq_len + i);
            for (std::size_t j = 0; j < g.size(); ++j) {
                dst[j] = g[j] * scale;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dropout

Matrix dropout_apply(const DropoutSpec& spec, const Matrix& x, Mode mode, RandSource* rng, Matrix* mask) {
    if (!(spec.rate >= 0.0 && spec.rate < 1.0)) {
        throw Error("dropout rate must lie in [0, 1), got " + std::to_string(spec.rate));
    }
    if (mode == Mode::infer) {
        if (mask != nullptr) {
            *mask = Matrix();
        }
        return x;
    }
    if (rng == nullptr) {
        throw Error("train-mode dropout requires a random source");
    }
    Matrix m(x.rows(), x.cols());
    Matrix y(x.rows(), x.cols());
    const double keep_scale = 1.0 / (1.0 - spec.rate);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double factor = rng->uniform() < spec.rate ? 0.0 : keep_scale;
        m.values()[i] = factor;
        y.values()[i] = x.values()[i] * factor;
    }
    if (mask != nullptr) {
        *mask = std::move(m);
    }
    return y;
}

Matrix dropout_backward(const Matrix& mask, const Matrix& upstream) {
    if (mask.empty()) {
        return upstream;
    }
    require(mask.rows() == upstream.rows() && mask.cols() == upstream.cols(),
            "dropout mask " + shape_string(mask) + " does not match upstream " + shape_string(upstream));
    Matrix out = upstream;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.values()[i] *= mask.values()[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// BatchNorm

BatchNormLayer make_batchnorm(std::size_t features) {
    BatchNormLayer layer;
    layer.gamma = Matrix(1, features, 1.0);
    layer.beta = Matrix(1, features, 0.0);
    layer.running_mean = Matrix(1, features, 0.0);
    layer.running_var = Matrix(1, features, 1.0);
    return layer;
}

Matrix batchnorm_forward(BatchNormLayer& layer, const Matrix& x, Mode mode, BatchNormCache* cache) {
    const std::size_t f = layer.features();
    require(x.cols() == f, "batchnorm input " + shape_string(x) + " does not match " + std::to_string(f) +
                               " features");
    if (mode == Mode::infer) {
        if (cache != nullptr) {
            cache->mode = Mode::infer;
            cache->normalized = Matrix();
            cache->inv_std.assign(f, 0.0);
            for (std::size_t j = 0; j < f; ++j) {
                cache->inv_std[j] = 1.0 / std::sqrt(layer.running_var(0, j) + layer.epsilon);
            }
        }
        return batchnorm_forward(static_cast<const BatchNormLayer&>(layer), x);
    }
    if (x.rows() < 2) {
        throw Error("train-mode batchnorm needs a batch of at least 2 rows, got " + std::to_string(x.rows()));
    }
    const double n = static_cast<double>(x.rows());
    const Matrix mean = mean_over_rows(x);
    Matrix var(1, f);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < f; ++j) {
            const double d = x(i, j) - mean(0, j);
            var(0, j) += d * d;
        }
    }
    std::vector<double> inv_std(f);
    for (std::size_t j = 0; j < f; ++j) {
        var(0, j) /= n;
        inv_std[j] = 1.0 / std::sqrt(var(0, j) + layer.epsilon);
    }
    Matrix normalized(x.rows(), f);
    Matrix y(x.rows(), f);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < f; ++j) {
            normalized(i, j) = (x(i, j) - mean(0, j)) * inv_std[j];
            y(i, j) = layer.gamma(0, j) * normalized(i, j) + layer.beta(0, j);
        }
    }
    for (std::size_t j = 0; j < f; ++j) {
        layer.running_mean(0, j) = layer.momentum * layer.running_mean(0, j) + (1.0 - layer.momentum) * mean(0, j);
        layer.running_var(0, j) = layer.momentum * layer.running_var(0, j) + (1.0 - layer.momentum) * var(0, j);
    }
    if (cache != nullptr) {
        cache->mode = Mode::train;
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

Matrix batchnorm_forward(const BatchNormLayer& layer, const Matrix& x) {
    const std::size_t f = layer.features();
    require(x.cols() == f, "batchnorm input " + shape_string(x) + " does not match " + std::to_string(f) +
                               " features");
    Matrix y(x.rows(), f);
    for (std::size_t j = 0; j < f; ++j) {
        const double inv_std = 1.0 / std::sqrt(layer.running_var(0, j) + layer.epsilon);
        const double g = layer.gamma(0, j);
        const double b = layer.beta(0, j);
        const double mu = layer.running_mean(0, j);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            y(i, j) = g * (x(i, j) - mu) * inv_std + b;
        }
    }
    return y;
}

Matrix batchnorm_backward(const BatchNormLayer& layer, const BatchNormCache& cache, const Matrix& upstream,
                          BatchNormLayer& grads) {
    const std::size_t f = layer.features();
    require(upstream.cols() == f && cache.inv_std.size() == f,
            "batchnorm upstream " + shape_string(upstream) + " does not match cache");
    grads.gamma = Matrix(1, f);
    grads.beta = Matrix(1, f);
    Matrix dx(upstream.rows(), f);
    if (cache.mode == Mode::infer) {
        // running statistics are constants here; only the affine map contributes
        for (std::size_t i = 0; i < upstream.rows(); ++i) {
            for (std::size_t j = 0; j < f; ++j) {
                dx(i, j) = upstream(i, j) * layer.gamma(0, j) * cache.inv_std[j];
            }
        }
        return dx;
    }
    require(cache.normalized.rows() == upstream.rows(), "batchnorm upstream rows do not match cache");
    const double n = static_cast<double>(upstream.rows());
    for (std::size_t j = 0; j < f; ++j) {
        double sum_dxn = 0.0;
        double sum_dxn_xn = 0.0;
        for (std::size_t i = 0; i < upstream.rows(); ++i) {
            const double dy = upstream(i, j);
            grads.gamma(0, j) += dy * cache.normalized(i, j);
            grads.beta(0, j) += dy;
            const double dxn = dy * layer.gamma(0, j);
            sum_dxn += dxn;
            sum_dxn_xn += dxn * cache.normalized(i, j);
        }
        for (std::size_t i = 0; i < upstream.rows(); ++i) {
            const double dxn = upstream(i, j) * layer.gamma(0, j);
            dx(i, j) = cache.inv_std[j] / n * (n * dxn - sum_dxn - cache.normalized(i, j) * sum_dxn_xn);
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Loss

Matrix one_hot(std::span<const int> labels, std::size_t classes) {
    Matrix out(labels.size(), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
            throw DataError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                            " is outside [0, " + std::to_string(classes) + ")");
        }
        out(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    return out;
}

LossResult softmax_cross_entropy(const Matrix& logits, const Matrix& onehot) {
    require(logits.rows() == onehot.rows() && logits.cols() == onehot.cols(),
            "logits " + shape_string(logits) + " do not match targets " + shape_string(onehot));
    if (logits.rows() == 0) {
        throw EmptyInputError("cross-entropy on an empty batch");
    }
    const double n = static_cast<double>(logits.rows());
    LossResult result;
    result.grad = rowwise_softmax(logits);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto y = onehot.row(i);
        std::size_t ones = 0;
        std::size_t target = 0;
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (y[j] == 1.0) {
                ++ones;
                target = j;
            } else if (y[j] != 0.0) {
                ones = 2;
                break;
            }
        }
        if (ones != 1) {
            throw DataError("malformed one-hot target at row " + std::to_string(i));
        }
        result.loss -= std::log(result.grad(i, target) + kLogFloor);
        auto g = result.grad.row(i);
        for (std::size_t j = 0; j < g.size(); ++j) {
            g[j] = (g[j] - y[j]) / n;
        }
    }
    result.loss /= n;
    return result;
}

double cross_entropy_from_probs(const Matrix& probs, std::span<const int> labels) {
    if (probs.rows() != labels.size()) {
        throw ShapeError("probability rows " + std::to_string(probs.rows()) + " do not match " +
                         std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) {
        throw EmptyInputError("cross-entropy on an empty batch");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        total -= std::log(probs(i, static_cast<std::size_t>(labels[i])) + kLogFloor);
    }
    return total / static_cast<double>(labels.size());
}

}  // namespace tslt
