#pragma once

#include <Eigen/Dense>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace failsearch {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

enum class Activation { Relu, Sigmoid, Tanh, Linear };

Activation activation_from_string(const std::string& name);
std::string activation_to_string(Activation a);

/// Architecture of a fully-connected network: layer widths plus one
/// activation per non-input layer.
struct MlpSpec {
    std::vector<int> layer_sizes;
    std::vector<Activation> activations;

    MlpSpec() = default;
    MlpSpec(std::vector<int> sizes, std::vector<Activation> acts);

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    int num_layers() const { return static_cast<int>(activations.size()); }

    bool operator==(const MlpSpec&) const = default;
};

/// Weights and biases, one (out x in) matrix and (out) vector per layer.
struct MlpParams {
    MlpSpec spec;
    std::vector<Mat> w;
    std::vector<Vec> b;

    bool all_finite() const;
};

/// Gradients shaped like MlpParams.
struct MlpGrads {
    std::vector<Mat> w;
    std::vector<Vec> b;

    static MlpGrads zeros_like(const MlpParams& p);
    void accumulate(const MlpGrads& other);
    void scale(double s);
    bool all_finite() const;
};

/// Batched activations kept from a forward pass; columns are samples.
struct ForwardCache {
    Mat input;
    std::vector<Mat> pre;   // pre-activation per layer
    std::vector<Mat> post;  // post-activation per layer
};

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Mat> m_w, v_w;
    std::vector<Vec> m_b, v_b;
    long t = 0;
    AdamHyper hyper;

    static AdamState init(const MlpParams& p, AdamHyper hyper = {});
};

/// Glorot-uniform weights, zero biases. Deterministic for a given seed.
MlpParams mlp_init(const MlpSpec& spec, Rng& rng);

/// Forward pass on a batch; columns of `input` are samples.
Mat mlp_forward_batch(const MlpParams& params, const Mat& input, ForwardCache* cache = nullptr);

/// Single-sample forward.
Vec mlp_forward(const MlpParams& params, const Vec& input, ForwardCache* cache = nullptr);

/// Exact gradients of sum_j output_j . output_grad_j w.r.t. params and input.
/// `output_grad` has one column per sample in the cached batch.
MlpGrads mlp_backward(const MlpParams& params, const ForwardCache& cache, const Mat& output_grad,
                      Mat* input_grad = nullptr);

/// One Adam update with bias correction. Throws on non-finite gradients;
/// params and state are untouched in that case.
void adam_step(AdamState& state, MlpParams& params, const MlpGrads& grads);

/// Binary cross-entropy on a clamped prediction. Returns {loss, dloss/dp}.
std::pair<double, double> bce_loss(double prediction, double label, double weight = 1.0);

/// Mean squared error. Returns loss; writes gradient 2(p-t)/len if requested.
double mse_loss(const Vec& prediction, const Vec& target, Vec* gradient = nullptr);

/// Normalization statistics carried with serialized models.
struct NormStats {
    Vec mean;
    Vec std;
};

/// JSON model document shared by the actor, critic and AVF predictor.
std::string model_to_json(const MlpParams& params, const std::optional<NormStats>& norm);
std::pair<MlpParams, std::optional<NormStats>> model_from_json(const std::string& text);

}  // namespace failsearch
