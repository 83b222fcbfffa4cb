#pragma once

#include <random>
#include <vector>

#include <Eigen/Dense>

namespace hibrids {

struct Tensor {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;

    Tensor() = default;
    Tensor(Eigen::Index rows, Eigen::Index cols)
        : value(Eigen::MatrixXd::Zero(rows, cols)), grad(Eigen::MatrixXd::Zero(rows, cols)) {}
    void zero_grad() { grad.setZero(); }
};

/// y = x W + b, with W stored (in x out).
struct Linear {
    Tensor weight;
    Tensor bias;

    Linear() = default;
    Linear(int in, int out, std::mt19937_64& rng);

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
    /// Accumulates parameter gradients; returns dL/dx.
    Eigen::MatrixXd backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& dy);
};

struct LayerNorm {
    static constexpr double kEps = 1e-5;
    Tensor gain;
    Tensor bias;

    struct Cache {
        Eigen::MatrixXd normalized;
        Eigen::VectorXd inv_std;
    };

    LayerNorm() = default;
    explicit LayerNorm(int width);

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache) const;
    Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& dy);
};

struct FeedForward {
    Linear in;
    Linear out;

    struct Cache {
        Eigen::MatrixXd x;
        Eigen::MatrixXd pre;  // before ReLU
        Eigen::MatrixXd act;
    };

    FeedForward() = default;
    FeedForward(int width, int hidden, std::mt19937_64& rng);

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache) const;
    Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& dy);
};

/// Row-wise softmax. Entries equal to -inf map to exactly 0.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& scores);

/// softmax(Q K^T / sqrt(d_head) + bias_h) V per head.
struct MultiHeadAttention {
    int heads = 1;
    Linear query, key, value, proj;

    struct Cache {
        Eigen::MatrixXd xq, xkv;
        Eigen::MatrixXd q, k, v;
        std::vector<Eigen::MatrixXd> probs;  // per head, (query_len, key_len)
        Eigen::MatrixXd context;
    };

    struct Grads {
        Eigen::MatrixXd d_query_input;
        Eigen::MatrixXd d_key_input;
        std::vector<Eigen::MatrixXd> d_scores;  // per head; equals dL/d(bias)
    };

    MultiHeadAttention() = default;
    MultiHeadAttention(int width, int heads, std::mt19937_64& rng);

    /// `bias` is either empty or one (query_len x key_len) matrix per head.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& xq, const Eigen::MatrixXd& xkv,
                            const std::vector<Eigen::MatrixXd>& bias, bool causal, Cache* cache) const;
    /// `extra_d_probs`, when non-empty, is added to dL/d(probs) of each head.
    Grads backward(const Cache& cache, const Eigen::MatrixXd& dy, const std::vector<Eigen::MatrixXd>& extra_d_probs);
};

}  // namespace hibrids
