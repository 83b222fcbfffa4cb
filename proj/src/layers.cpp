#include "hibrids/layers.hpp"

#include <cmath>
#include <limits>

#include "hibrids/errors.hpp"

namespace hibrids {

Linear::Linear(int in, int out, std::mt19937_64& rng) : weight(in, out), bias(1, out) {
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < weight.value.size(); ++i) weight.value.data()[i] = dist(rng);
}

Eigen::MatrixXd Linear::forward(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd y = x * weight.value;
    y.rowwise() += bias.value.row(0);
    return y;
}

Eigen::MatrixXd Linear::backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& dy) {
    weight.grad.noalias() += x.transpose() * dy;
    bias.grad += dy.colwise().sum();
    return dy * weight.value.transpose();
}

LayerNorm::LayerNorm(int width) : gain(1, width), bias(1, width) { gain.value.setOnes(); }

Eigen::MatrixXd LayerNorm::forward(const Eigen::MatrixXd& x, Cache* cache) const {
    const auto n = x.rows();
    const auto d = static_cast<double>(x.cols());
    Eigen::MatrixXd normalized(x.rows(), x.cols());
    Eigen::VectorXd inv_std(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double mean = x.row(r).sum() / d;
        const Eigen::RowVectorXd centered = x.row(r).array() - mean;
        const double var = centered.squaredNorm() / d;
        inv_std(r) = 1.0 / std::sqrt(var + kEps);
        normalized.row(r) = centered * inv_std(r);
    }
    Eigen::MatrixXd y = normalized.array().rowwise() * gain.value.row(0).array();
    y.rowwise() += bias.value.row(0);
    if (cache) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

Eigen::MatrixXd LayerNorm::backward(const Cache& cache, const Eigen::MatrixXd& dy) {
    const auto& xhat = cache.normalized;
    gain.grad += (dy.array() * xhat.array()).colwise().sum().matrix();
    bias.grad += dy.colwise().sum();
    const Eigen::MatrixXd dxhat = dy.array().rowwise() * gain.value.row(0).array();
    const double d = static_cast<double>(dy.cols());
    Eigen::MatrixXd dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const double sum = dxhat.row(r).sum();
        const double dot = dxhat.row(r).dot(xhat.row(r));
        dx.row(r) = (cache.inv_std(r) / d) * (d * dxhat.row(r).array() - sum - xhat.row(r).array() * dot).matrix();
    }
    return dx;
}

FeedForward::FeedForward(int width, int hidden, std::mt19937_64& rng)
    : in(width, hidden, rng), out(hidden, width, rng) {}

Eigen::MatrixXd FeedForward::forward(const Eigen::MatrixXd& x, Cache* cache) const {
    Eigen::MatrixXd pre = in.forward(x);
    Eigen::MatrixXd act = pre.cwiseMax(0.0);
    Eigen::MatrixXd y = out.forward(act);
    if (cache) {
        cache->x = x;
        cache->pre = std::move(pre);
        cache->act = std::move(act);
    }
    return y;
}

Eigen::MatrixXd FeedForward::backward(const Cache& cache, const Eigen::MatrixXd& dy) {
    Eigen::MatrixXd d_act = out.backward(cache.act, dy);
    Eigen::MatrixXd d_pre = (cache.pre.array() > 0.0).select(d_act, 0.0);
    return in.backward(cache.x, d_pre);
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& scores) {
    Eigen::MatrixXd p(scores.rows(), scores.cols());
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        const double m = scores.row(r).maxCoeff();
        p.row(r) = (scores.row(r).array() - m).exp();
        p.row(r) /= p.row(r).sum();
    }
    return p;
}

MultiHeadAttention::MultiHeadAttention(int width, int heads_, std::mt19937_64& rng)
    : heads(heads_),
      query(width, width, rng),
      key(width, width, rng),
      value(width, width, rng),
      proj(width, width, rng) {}

Eigen::MatrixXd MultiHeadAttention::forward(const Eigen::MatrixXd& xq, const Eigen::MatrixXd& xkv,
                                            const std::vector<Eigen::MatrixXd>& bias, bool causal,
                                            Cache* cache) const {
    const auto width = query.weight.value.cols();
    const auto dh = width / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    if (!bias.empty() && static_cast<int>(bias.size()) != heads) throw InputError("bias head count mismatch");

    Eigen::MatrixXd q = query.forward(xq);
    Eigen::MatrixXd k = key.forward(xkv);
    Eigen::MatrixXd v = value.forward(xkv);
    Eigen::MatrixXd context(xq.rows(), width);
    std::vector<Eigen::MatrixXd> probs;
    probs.reserve(static_cast<std::size_t>(heads));

    for (int h = 0; h < heads; ++h) {
        Eigen::MatrixXd scores = q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose() * scale;
        if (!bias.empty()) {
            const auto& b = bias[static_cast<std::size_t>(h)];
            if (b.rows() != scores.rows() || b.cols() != scores.cols()) throw InputError("bias shape mismatch");
            scores += b;
        }
        if (causal) {
            for (Eigen::Index i = 0; i < scores.rows(); ++i) {
                for (Eigen::Index j = i + 1; j < scores.cols(); ++j) {
                    scores(i, j) = -std::numeric_limits<double>::infinity();
                }
            }
        }
        Eigen::MatrixXd p = softmax_rows(scores);
        context.middleCols(h * dh, dh) = p * v.middleCols(h * dh, dh);
        probs.push_back(std::move(p));
    }

    Eigen::MatrixXd y = proj.forward(context);
    if (cache) {
        cache->xq = xq;
        cache->xkv = xkv;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->probs = std::move(probs);
        cache->context = std::move(context);
    }
    return y;
}

MultiHeadAttention::Grads MultiHeadAttention::backward(const Cache& cache, const Eigen::MatrixXd& dy,
                                                       const std::vector<Eigen::MatrixXd>& extra_d_probs) {
    const auto width = query.weight.value.cols();
    const auto dh = width / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Eigen::MatrixXd d_context = proj.backward(cache.context, dy);
    Eigen::MatrixXd dq(cache.q.rows(), width);
    Eigen::MatrixXd dk(cache.k.rows(), width);
    Eigen::MatrixXd dv(cache.v.rows(), width);
    Grads g;
    g.d_scores.reserve(static_cast<std::size_t>(heads));

    for (int h = 0; h < heads; ++h) {
        const auto& p = cache.probs[static_cast<std::size_t>(h)];
        const auto d_ctx_h = d_context.middleCols(h * dh, dh);
        Eigen::MatrixXd dp = d_ctx_h * cache.v.middleCols(h * dh, dh).transpose();
        if (!extra_d_probs.empty()) dp += extra_d_probs[static_cast<std::size_t>(h)];
        dv.middleCols(h * dh, dh) = p.transpose() * d_ctx_h;
        const Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
        Eigen::MatrixXd ds = p.array() * (dp.colwise() - row_dot).array();
        dq.middleCols(h * dh, dh) = ds * cache.k.middleCols(h * dh, dh) * scale;
        dk.middleCols(h * dh, dh) = ds.transpose() * cache.q.middleCols(h * dh, dh) * scale;
        g.d_scores.push_back(std::move(ds));
    }

    g.d_query_input = query.backward(cache.xq, dq);
    g.d_key_input = key.backward(cache.xkv, dk) + value.backward(cache.xkv, dv);
    return g;
}

}  // namespace hibrids
