#include "failsearch/gmm.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace failsearch {

using nlohmann::json;

Mat FailureSet::as_matrix() const {
    if (points.empty()) return Mat(0, 0);
    Mat m(points.size(), points[0].size());
    for (size_t i = 0; i < points.size(); ++i) m.row(i) = points[i].transpose();
    return m;
}

FailureSet failures_from_log(const std::vector<EpisodeRecord>& log) {
    FailureSet fs;
    for (const auto& rec : log)
        if (rec.c == 1) fs.add(rec.x, FailureSource::TrainingLog);
    return fs;
}

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

struct ComponentChol {
    Eigen::LLT<Mat> llt;
    double log_det = 0.0;
};

ComponentChol factor(const Mat& cov) {
    ComponentChol c;
    c.llt.compute(cov);
    if (c.llt.info() != Eigen::Success)
        throw std::runtime_error("gmm: covariance not positive definite");
    c.log_det = 2.0 * c.llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return c;
}

double log_gaussian(const ComponentChol& c, const Vec& diff) {
    const Vec z = c.llt.matrixL().solve(diff);
    return -0.5 * (diff.size() * kLog2Pi + c.log_det + z.squaredNorm());
}

Mat data_covariance(const Mat& data, double reg) {
    const Vec mean = data.colwise().mean().transpose();
    const Mat centered = data.rowwise() - mean.transpose();
    Mat cov = centered.transpose() * centered / static_cast<double>(data.rows());
    cov += reg * Mat::Identity(cov.rows(), cov.cols());
    return cov;
}

// One EM run to convergence; appends per-iteration log-likelihoods to trace.
double run_em(const Mat& data, GmmModel& model, const EmOpts& opts,
              std::vector<double>* trace, Rng& rng) {
    const long N = data.rows();
    const int d = static_cast<int>(data.cols());
    const int n = model.n_components();
    Mat log_resp(N, n);
    double prev_ll = -std::numeric_limits<double>::infinity();
    double ll = prev_ll;
    const Mat base_cov = data_covariance(data, opts.cov_reg);

    for (int iter = 0; iter < opts.max_iters; ++iter) {
        std::vector<ComponentChol> chol(n);
        for (int k = 0; k < n; ++k) chol[k] = factor(model.covariances[k]);

        // E-step
        ll = 0.0;
        for (long i = 0; i < N; ++i) {
            for (int k = 0; k < n; ++k)
                log_resp(i, k) = std::log(model.weights(k)) +
                                 log_gaussian(chol[k], data.row(i).transpose() - model.means[k]);
            const double m = log_resp.row(i).maxCoeff();
            const double lse = m + std::log((log_resp.row(i).array() - m).exp().sum());
            log_resp.row(i).array() -= lse;
            ll += lse;
        }
        if (trace) trace->push_back(ll);
        if (std::abs(ll - prev_ll) < opts.tol) break;
        prev_ll = ll;

        // M-step: weighted MLE with regularized covariances
        const Mat resp = log_resp.array().exp();
        Vec nk = resp.colwise().sum().transpose();
        for (int k = 0; k < n; ++k) {
            if (nk(k) / N < opts.collapse_weight) {
                // collapsed component: restart at a random data point
                std::uniform_int_distribution<long> u(0, N - 1);
                model.means[k] = data.row(u(rng)).transpose();
                model.covariances[k] = base_cov;
                nk(k) = 1.0;
                continue;
            }
            const Vec mu = (resp.col(k).transpose() * data).transpose() / nk(k);
            Mat cov = Mat::Zero(d, d);
            for (long i = 0; i < N; ++i) {
                const Vec diff = data.row(i).transpose() - mu;
                cov.noalias() += resp(i, k) * diff * diff.transpose();
            }
            cov /= nk(k);
            cov += opts.cov_reg * Mat::Identity(d, d);
            model.means[k] = mu;
            model.covariances[k] = 0.5 * (cov + cov.transpose());
        }
        model.weights = nk / nk.sum();
    }
    return ll;
}

}  // namespace

double gmm_logpdf(const GmmModel& model, const Vec& x) {
    if (x.size() != model.dim()) throw std::invalid_argument("gmm_logpdf: dimension mismatch");
    const int n = model.n_components();
    Vec terms(n);
    for (int k = 0; k < n; ++k) {
        ComponentChol c = factor(model.covariances[k]);
        terms(k) = std::log(model.weights(k)) + log_gaussian(c, x - model.means[k]);
    }
    const double m = terms.maxCoeff();
    return m + std::log((terms.array() - m).exp().sum());
}

EmFitResult em_fit(const FailureSet& data, int n, const EmOpts& opts, Rng& rng,
                   const Vec& support_lo, const Vec& support_hi) {
    if (data.size() < static_cast<size_t>(n))
        throw std::invalid_argument("em_fit: fewer data points than components");
    const Mat m = data.as_matrix();
    const long N = m.rows();
    const int d = static_cast<int>(m.cols());
    const Mat init_cov = data_covariance(m, opts.cov_reg);

    EmFitResult best;
    best.log_likelihood = -std::numeric_limits<double>::infinity();

    std::vector<long> idx(N);
    std::iota(idx.begin(), idx.end(), 0);

    for (int init = 0; init < opts.n_inits; ++init) {
        GmmModel model;
        model.support_lo = support_lo;
        model.support_hi = support_hi;
        model.weights = Vec::Constant(n, 1.0 / n);
        std::shuffle(idx.begin(), idx.end(), rng);
        for (int k = 0; k < n; ++k) {
            model.means.push_back(m.row(idx[k]).transpose());
            model.covariances.push_back(init_cov);
        }
        std::vector<double> trace;
        const double ll = run_em(m, model, opts, &trace, rng);
        if (ll > best.log_likelihood) {
            best.model = std::move(model);
            best.log_likelihood = ll;
            best.ll_trace = std::move(trace);
        }
    }
    return best;
}

long gmm_param_count(int n, int d) {
    return (n - 1) + static_cast<long>(n) * d + static_cast<long>(n) * d * (d + 1) / 2;
}

int select_components(const FailureSet& data, int n_min, int n_max, const EmOpts& opts, Rng& rng,
                      const Vec& support_lo, const Vec& support_hi) {
    if (data.size() <= static_cast<size_t>(n_max))
        throw std::invalid_argument("select_components: insufficient data for candidate range");
    const double logN = std::log(static_cast<double>(data.size()));
    const int d = static_cast<int>(data.points[0].size());
    int best_n = n_min;
    double best_bic = std::numeric_limits<double>::infinity();
    for (int n = n_min; n <= n_max; ++n) {
        const EmFitResult fit = em_fit(data, n, opts, rng, support_lo, support_hi);
        const double bic = gmm_param_count(n, d) * logN - 2.0 * fit.log_likelihood;
        if (bic < best_bic) {
            best_bic = bic;
            best_n = n;
        }
    }
    return best_n;
}

InitialCondition gmm_sample(const GmmModel& model, Rng& rng) {
    const int d = model.dim();
    std::discrete_distribution<int> pick(model.weights.data(),
                                         model.weights.data() + model.weights.size());
    std::normal_distribution<double> stdnorm(0.0, 1.0);

    auto in_bounds = [&](const Vec& x) {
        if (!(x(0) > model.support_lo(0))) return false;
        for (int j = 0; j < d; ++j)
            if (x(j) < model.support_lo(j) || x(j) > model.support_hi(j)) return false;
        return true;
    };

    Vec x(d);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const int k = pick(rng);
        Eigen::LLT<Mat> llt(model.covariances[k]);
        Vec z(d);
        for (int j = 0; j < d; ++j) z(j) = stdnorm(rng);
        x = model.means[k] + llt.matrixL() * z;
        if (in_bounds(x)) return x;
    }
    // clamp fallback for pathological models
    for (int j = 0; j < d; ++j) x(j) = std::clamp(x(j), model.support_lo(j), model.support_hi(j));
    if (x(0) <= model.support_lo(0)) x(0) = model.support_lo(0) + 1e-6;
    return x;
}

GmmModel gmm_update(const GmmModel& model, const FailureSet& new_failures, FailureSet& full_data,
                    const EmOpts& opts) {
    if (new_failures.size() == 0) return model;
    for (size_t i = 0; i < new_failures.size(); ++i)
        full_data.add(new_failures.points[i], new_failures.sources[i]);

    GmmModel updated = model;
    const Mat m = full_data.as_matrix();
    Rng dummy(0);  // only used if a component collapses during the refit
    run_em(m, updated, opts, nullptr, dummy);
    return updated;
}

FailureSet import_failures(const std::string& path, const InitialConditionDistribution& dist) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open failure import file: " + path);
    FailureSet fs;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("parse error at line " + std::to_string(line_no) + ": " +
                                     e.what());
        }
        auto xv = doc.at("x").get<std::vector<double>>();
        InitialCondition x = Eigen::Map<Vec>(xv.data(), xv.size());
        if (x.size() != dist.dim())
            throw std::runtime_error("line " + std::to_string(line_no) + ": dimension " +
                                     std::to_string(x.size()) + " != expected " +
                                     std::to_string(dist.dim()));
        if (!dist.in_support(x)) {
            const Vec lo = dist.support_lo();
            const Vec hi = dist.support_hi();
            int bad = 0;
            for (int j = 0; j < x.size(); ++j)
                if (x(j) < lo(j) || x(j) > hi(j) || (j == 0 && !(x(j) > lo(j)))) {
                    bad = j;
                    break;
                }
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": support violation in dimension " + std::to_string(bad));
        }
        fs.add(std::move(x), FailureSource::Imported);
    }
    return fs;
}

void save_gmm(const GmmModel& model, const std::string& path) {
    json doc;
    doc["format_version"] = 1;
    doc["n"] = model.n_components();
    doc["dim"] = model.dim();
    doc["weights"] =
        std::vector<double>(model.weights.data(), model.weights.data() + model.weights.size());
    json means = json::array();
    for (const auto& mu : model.means)
        means.push_back(std::vector<double>(mu.data(), mu.data() + mu.size()));
    doc["means"] = std::move(means);
    json covs = json::array();
    for (const auto& cov : model.covariances) {
        json rows = json::array();
        for (int i = 0; i < cov.rows(); ++i) {
            json row = json::array();
            for (int j = 0; j < cov.cols(); ++j) row.push_back(cov(i, j));
            rows.push_back(std::move(row));
        }
        covs.push_back(std::move(rows));
    }
    doc["covariances"] = std::move(covs);
    doc["support"]["lo"] = std::vector<double>(model.support_lo.data(),
                                               model.support_lo.data() + model.support_lo.size());
    doc["support"]["hi"] = std::vector<double>(model.support_hi.data(),
                                               model.support_hi.data() + model.support_hi.size());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << doc.dump(2) << "\n";
}

GmmModel load_gmm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json doc = json::parse(in);
    if (doc.at("format_version").get<int>() != 1)
        throw std::runtime_error("unsupported gmm format_version");
    GmmModel model;
    auto w = doc.at("weights").get<std::vector<double>>();
    model.weights = Eigen::Map<Vec>(w.data(), w.size());
    for (const auto& mj : doc.at("means")) {
        auto mu = mj.get<std::vector<double>>();
        model.means.push_back(Eigen::Map<Vec>(mu.data(), mu.size()));
    }
    for (const auto& cj : doc.at("covariances")) {
        Mat cov(cj.size(), cj.at(0).size());
        for (size_t i = 0; i < cj.size(); ++i)
            for (size_t j = 0; j < cj[i].size(); ++j) cov(i, j) = cj[i][j].get<double>();
        model.covariances.push_back(std::move(cov));
    }
    auto lo = doc.at("support").at("lo").get<std::vector<double>>();
    auto hi = doc.at("support").at("hi").get<std::vector<double>>();
    model.support_lo = Eigen::Map<Vec>(lo.data(), lo.size());
    model.support_hi = Eigen::Map<Vec>(hi.data(), hi.size());
    return model;
}

}  // namespace failsearch
