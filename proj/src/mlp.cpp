#include "failsearch/mlp.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace failsearch {

using nlohmann::json;

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "tanh") return Activation::Tanh;
    if (name == "linear") return Activation::Linear;
    throw std::invalid_argument("unknown activation: " + name);
}

std::string activation_to_string(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Tanh: return "tanh";
        case Activation::Linear: return "linear";
    }
    throw std::logic_error("bad activation enum");
}

MlpSpec::MlpSpec(std::vector<int> sizes, std::vector<Activation> acts)
    : layer_sizes(std::move(sizes)), activations(std::move(acts)) {
    if (layer_sizes.size() < 2)
        throw std::invalid_argument("MlpSpec needs at least input and output layers");
    if (activations.size() != layer_sizes.size() - 1)
        throw std::invalid_argument("MlpSpec: one activation per non-input layer required");
    for (int s : layer_sizes)
        if (s < 1) throw std::invalid_argument("MlpSpec: layer sizes must be >= 1");
}

bool MlpParams::all_finite() const {
    for (const auto& m : w)
        if (!m.allFinite()) return false;
    for (const auto& v : b)
        if (!v.allFinite()) return false;
    return true;
}

MlpGrads MlpGrads::zeros_like(const MlpParams& p) {
    MlpGrads g;
    for (const auto& m : p.w) g.w.push_back(Mat::Zero(m.rows(), m.cols()));
    for (const auto& v : p.b) g.b.push_back(Vec::Zero(v.size()));
    return g;
}

void MlpGrads::accumulate(const MlpGrads& other) {
    for (size_t i = 0; i < w.size(); ++i) w[i] += other.w[i];
    for (size_t i = 0; i < b.size(); ++i) b[i] += other.b[i];
}

void MlpGrads::scale(double s) {
    for (auto& m : w) m *= s;
    for (auto& v : b) v *= s;
}

bool MlpGrads::all_finite() const {
    for (const auto& m : w)
        if (!m.allFinite()) return false;
    for (const auto& v : b)
        if (!v.allFinite()) return false;
    return true;
}

AdamState AdamState::init(const MlpParams& p, AdamHyper hyper) {
    AdamState s;
    s.hyper = hyper;
    for (const auto& m : p.w) {
        s.m_w.push_back(Mat::Zero(m.rows(), m.cols()));
        s.v_w.push_back(Mat::Zero(m.rows(), m.cols()));
    }
    for (const auto& v : p.b) {
        s.m_b.push_back(Vec::Zero(v.size()));
        s.v_b.push_back(Vec::Zero(v.size()));
    }
    return s;
}

MlpParams mlp_init(const MlpSpec& spec, Rng& rng) {
    MlpParams p;
    p.spec = spec;
    for (int l = 0; l < spec.num_layers(); ++l) {
        const int fan_in = spec.layer_sizes[l];
        const int fan_out = spec.layer_sizes[l + 1];
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> u(-bound, bound);
        Mat w(fan_out, fan_in);
        for (int i = 0; i < w.rows(); ++i)
            for (int j = 0; j < w.cols(); ++j) w(i, j) = u(rng);
        p.w.push_back(std::move(w));
        p.b.push_back(Vec::Zero(fan_out));
    }
    return p;
}

namespace {

Mat apply_activation(Activation a, const Mat& z) {
    switch (a) {
        case Activation::Relu: return z.cwiseMax(0.0);
        case Activation::Sigmoid: return ((-z.array()).exp() + 1.0).inverse().matrix();
        case Activation::Tanh: return z.array().tanh().matrix();
        case Activation::Linear: return z;
    }
    throw std::logic_error("bad activation enum");
}

// Derivative expressed through pre (z) and post (h) activation values.
Mat activation_grad(Activation a, const Mat& z, const Mat& h) {
    switch (a) {
        case Activation::Relu: return (z.array() > 0.0).cast<double>().matrix();
        case Activation::Sigmoid: return (h.array() * (1.0 - h.array())).matrix();
        case Activation::Tanh: return (1.0 - h.array().square()).matrix();
        case Activation::Linear: return Mat::Ones(z.rows(), z.cols());
    }
    throw std::logic_error("bad activation enum");
}

}  // namespace

Mat mlp_forward_batch(const MlpParams& params, const Mat& input, ForwardCache* cache) {
    if (input.rows() != params.spec.input_dim())
        throw std::invalid_argument("mlp_forward: input dim " + std::to_string(input.rows()) +
                                    " != spec input dim " +
                                    std::to_string(params.spec.input_dim()));
    if (cache) {
        cache->input = input;
        cache->pre.clear();
        cache->post.clear();
    }
    Mat h = input;
    for (int l = 0; l < params.spec.num_layers(); ++l) {
        Mat z = (params.w[l] * h).colwise() + params.b[l];
        h = apply_activation(params.spec.activations[l], z);
        if (cache) {
            cache->pre.push_back(std::move(z));
            cache->post.push_back(h);
        }
    }
    return h;
}

Vec mlp_forward(const MlpParams& params, const Vec& input, ForwardCache* cache) {
    return mlp_forward_batch(params, input, cache).col(0);
}

MlpGrads mlp_backward(const MlpParams& params, const ForwardCache& cache, const Mat& output_grad,
                      Mat* input_grad) {
    const int L = params.spec.num_layers();
    if (output_grad.rows() != params.spec.output_dim() ||
        output_grad.cols() != cache.input.cols())
        throw std::invalid_argument("mlp_backward: output_grad shape mismatch");

    MlpGrads g;
    g.w.resize(L);
    g.b.resize(L);
    Mat delta = output_grad;
    for (int l = L - 1; l >= 0; --l) {
        delta = delta.cwiseProduct(
            activation_grad(params.spec.activations[l], cache.pre[l], cache.post[l]));
        const Mat& below = (l == 0) ? cache.input : cache.post[l - 1];
        g.w[l] = delta * below.transpose();
        g.b[l] = delta.rowwise().sum();
        if (l > 0 || input_grad) delta = params.w[l].transpose() * delta;
    }
    if (input_grad) *input_grad = delta;
    return g;
}

void adam_step(AdamState& state, MlpParams& params, const MlpGrads& grads) {
    if (!grads.all_finite())
        throw std::runtime_error("adam_step: non-finite gradient, update skipped");
    const auto& h = state.hyper;
    state.t += 1;
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.w.size(); ++i) {
        state.m_w[i] = h.beta1 * state.m_w[i] + (1.0 - h.beta1) * grads.w[i];
        state.v_w[i] = h.beta2 * state.v_w[i].array() +
                       (1.0 - h.beta2) * grads.w[i].array().square();
        params.w[i].array() -=
            h.lr * (state.m_w[i].array() / c1) / ((state.v_w[i].array() / c2).sqrt() + h.eps);

        state.m_b[i] = h.beta1 * state.m_b[i] + (1.0 - h.beta1) * grads.b[i];
        state.v_b[i] = h.beta2 * state.v_b[i].array() +
                       (1.0 - h.beta2) * grads.b[i].array().square();
        params.b[i].array() -=
            h.lr * (state.m_b[i].array() / c1) / ((state.v_b[i].array() / c2).sqrt() + h.eps);
    }
}

std::pair<double, double> bce_loss(double prediction, double label, double weight) {
    constexpr double kClamp = 1e-7;
    const double p = std::clamp(prediction, kClamp, 1.0 - kClamp);
    const double loss = -weight * (label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
    const double grad = weight * (-label / p + (1.0 - label) / (1.0 - p));
    return {loss, grad};
}

double mse_loss(const Vec& prediction, const Vec& target, Vec* gradient) {
    if (prediction.size() != target.size())
        throw std::invalid_argument("mse_loss: length mismatch");
    const Vec diff = prediction - target;
    const double n = static_cast<double>(prediction.size());
    if (gradient) *gradient = 2.0 * diff / n;
    return diff.squaredNorm() / n;
}

std::string model_to_json(const MlpParams& params, const std::optional<NormStats>& norm) {
    json doc;
    doc["format_version"] = 1;
    doc["spec"]["layer_sizes"] = params.spec.layer_sizes;
    json acts = json::array();
    for (auto a : params.spec.activations) acts.push_back(activation_to_string(a));
    doc["spec"]["activations"] = acts;
    json layers = json::array();
    for (size_t l = 0; l < params.w.size(); ++l) {
        json layer;
        json rows = json::array();
        for (int i = 0; i < params.w[l].rows(); ++i) {
            json row = json::array();
            for (int j = 0; j < params.w[l].cols(); ++j) row.push_back(params.w[l](i, j));
            rows.push_back(std::move(row));
        }
        layer["w"] = std::move(rows);
        json bias = json::array();
        for (int i = 0; i < params.b[l].size(); ++i) bias.push_back(params.b[l](i));
        layer["b"] = std::move(bias);
        layers.push_back(std::move(layer));
    }
    doc["layers"] = std::move(layers);
    if (norm) {
        json n;
        n["mean"] = std::vector<double>(norm->mean.data(), norm->mean.data() + norm->mean.size());
        n["std"] = std::vector<double>(norm->std.data(), norm->std.data() + norm->std.size());
        doc["norm"] = std::move(n);
    } else {
        doc["norm"] = nullptr;
    }
    return doc.dump(2) + "\n";
}

std::pair<MlpParams, std::optional<NormStats>> model_from_json(const std::string& text) {
    json doc = json::parse(text);
    if (doc.at("format_version").get<int>() != 1)
        throw std::runtime_error("unsupported model format_version");
    std::vector<int> sizes = doc.at("spec").at("layer_sizes").get<std::vector<int>>();
    std::vector<Activation> acts;
    for (const auto& a : doc.at("spec").at("activations"))
        acts.push_back(activation_from_string(a.get<std::string>()));
    MlpParams p;
    p.spec = MlpSpec(sizes, acts);
    for (const auto& layer : doc.at("layers")) {
        const auto& wj = layer.at("w");
        Mat w(wj.size(), wj.at(0).size());
        for (size_t i = 0; i < wj.size(); ++i)
            for (size_t j = 0; j < wj[i].size(); ++j) w(i, j) = wj[i][j].get<double>();
        const auto& bj = layer.at("b");
        Vec b(bj.size());
        for (size_t i = 0; i < bj.size(); ++i) b(i) = bj[i].get<double>();
        p.w.push_back(std::move(w));
        p.b.push_back(std::move(b));
    }
    if (p.w.size() != static_cast<size_t>(p.spec.num_layers()))
        throw std::runtime_error("model layer count does not match spec");
    std::optional<NormStats> norm;
    if (!doc.at("norm").is_null()) {
        auto mean = doc["norm"].at("mean").get<std::vector<double>>();
        auto std_ = doc["norm"].at("std").get<std::vector<double>>();
        NormStats n;
        n.mean = Eigen::Map<Vec>(mean.data(), mean.size());
        n.std = Eigen::Map<Vec>(std_.data(), std_.size());
        norm = std::move(n);
    }
    return {std::move(p), std::move(norm)};
}

}  // namespace failsearch
