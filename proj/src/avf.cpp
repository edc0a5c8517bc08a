#include "failsearch/avf.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace failsearch {

AvfDataset build_dataset(const std::vector<EpisodeRecord>& log, size_t window_size) {
    if (window_size == 0) throw std::invalid_argument("build_dataset: empty window");
    if (window_size > log.size())
        throw std::invalid_argument("build_dataset: window larger than log");

    const size_t first = log.size() - window_size;
    const int x_dim = static_cast<int>(log[first].x.size());
    const int n_features = x_dim + 1;
    const double total = static_cast<double>(log.size());

    AvfDataset ds;
    ds.features.resize(window_size, n_features);
    ds.labels.resize(window_size);
    ds.first_episode = log[first].theta;
    ds.last_episode = log.back().theta;

    for (size_t i = 0; i < window_size; ++i) {
        const EpisodeRecord& rec = log[first + i];
        ds.features.row(i).head(x_dim) = rec.x.transpose();
        ds.features(i, x_dim) = static_cast<double>(rec.theta) / total;
        ds.labels(i) = rec.c;
    }
    ds.no_failures = ds.labels.sum() == 0.0;

    ds.norm.mean = ds.features.colwise().mean().transpose();
    Vec var = (ds.features.rowwise() - ds.norm.mean.transpose())
                  .array()
                  .square()
                  .colwise()
                  .mean()
                  .transpose();
    ds.norm.std = var.array().sqrt();
    for (int j = 0; j < n_features; ++j)
        if (ds.norm.std(j) == 0.0) ds.norm.std(j) = 1.0;  // constant column

    ds.features = (ds.features.rowwise() - ds.norm.mean.transpose()).array().rowwise() /
                  ds.norm.std.transpose().array();
    return ds;
}

AvfModel train_avf(const AvfDataset& ds, const AvfTrainOpts& opts, Rng& rng) {
    const long n = ds.features.rows();
    if (n == 0) throw std::invalid_argument("train_avf: empty dataset");
    const double n_pos = ds.labels.sum();
    if (n_pos == 0.0) throw std::runtime_error("train_avf: insufficient failure data");
    const double n_neg = static_cast<double>(n) - n_pos;
    const double pos_weight = std::clamp(n_neg / n_pos, 1.0, 100.0);

    const int in_dim = static_cast<int>(ds.features.cols());
    MlpSpec spec({in_dim, 64, 32, 1}, {Activation::Relu, Activation::Relu, Activation::Sigmoid});

    AvfModel model;
    model.network = mlp_init(spec, rng);
    model.norm = ds.norm;
    AdamState opt = AdamState::init(model.network, {.lr = opts.lr});

    std::vector<long> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (long epoch = 0; epoch < opts.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (long start = 0; start < n; start += opts.batch_size) {
            const int bs = static_cast<int>(std::min<long>(opts.batch_size, n - start));
            Mat batch(in_dim, bs);
            Vec y(bs);
            for (int i = 0; i < bs; ++i) {
                batch.col(i) = ds.features.row(order[start + i]).transpose();
                y(i) = ds.labels(order[start + i]);
            }
            ForwardCache cache;
            Mat p = mlp_forward_batch(model.network, batch, &cache);
            Mat grad(1, bs);
            for (int i = 0; i < bs; ++i) {
                const double w = y(i) == 1.0 ? pos_weight : 1.0;
                grad(0, i) = bce_loss(p(0, i), y(i), w).second / bs;
            }
            MlpGrads grads = mlp_backward(model.network, cache, grad);
            adam_step(opt, model.network, grads);
        }
    }
    return model;
}

double avf_predict(const AvfModel& model, const InitialCondition& x, double theta) {
    const int in_dim = model.network.spec.input_dim();
    if (x.size() + 1 != in_dim)
        throw std::invalid_argument("avf_predict: initial condition dimension mismatch");
    Vec raw(in_dim);
    raw.head(x.size()) = x;
    raw(in_dim - 1) = theta;
    Vec z = (raw - model.norm.mean).cwiseQuotient(model.norm.std);
    return mlp_forward(model.network, z)(0);
}

int argmax_first(const Vec& scores) {
    int best = 0;
    for (int i = 1; i < scores.size(); ++i)
        if (scores(i) > scores(best)) best = i;
    return best;
}

InitialCondition avf_select(const AvfModel& model, const InitialConditionDistribution& dist,
                            int n_candidates, Rng& rng) {
    if (n_candidates < 1) throw std::invalid_argument("avf_select: n_candidates must be >= 1");
    std::vector<InitialCondition> candidates(n_candidates);
    Vec scores(n_candidates);
    for (int i = 0; i < n_candidates; ++i) {
        candidates[i] = dist.sample(rng);
        scores(i) = avf_predict(model, candidates[i], model.theta_at_test);
    }
    return candidates[argmax_first(scores)];
}

void save_avf(const AvfModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << model_to_json(model.network, model.norm);
}

AvfModel load_avf(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    auto [params, norm] = model_from_json(ss.str());
    if (!norm) throw std::runtime_error("avf model missing normalization stats: " + path);
    AvfModel model;
    model.network = std::move(params);
    model.norm = std::move(*norm);
    return model;
}

}  // namespace failsearch
