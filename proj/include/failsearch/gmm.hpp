#pragma once

#include "failsearch/sim.hpp"

#include <string>
#include <vector>

namespace failsearch {

enum class FailureSource { TrainingLog, SearchFound, Imported };

/// Collection of failing initial conditions with provenance tags.
struct FailureSet {
    std::vector<InitialCondition> points;
    std::vector<FailureSource> sources;

    void add(InitialCondition x, FailureSource src) {
        points.push_back(std::move(x));
        sources.push_back(src);
    }
    size_t size() const { return points.size(); }
    Mat as_matrix() const;  // rows = points
};

FailureSet failures_from_log(const std::vector<EpisodeRecord>& log);

/// Full-covariance Gaussian mixture over failure initial conditions.
struct GmmModel {
    Vec weights;                // sums to 1
    std::vector<Vec> means;
    std::vector<Mat> covariances;  // symmetric positive definite
    Vec support_lo, support_hi;

    int n_components() const { return static_cast<int>(weights.size()); }
    int dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }
};

struct EmOpts {
    int n_inits = 100;
    int max_iters = 500;
    double tol = 1e-6;
    double cov_reg = 1e-6;
    double collapse_weight = 1e-6;
};

double gmm_logpdf(const GmmModel& model, const Vec& x);

/// Per-iteration log-likelihoods of the best restart, for monotonicity checks.
struct EmFitResult {
    GmmModel model;
    double log_likelihood = 0.0;
    std::vector<double> ll_trace;
};

EmFitResult em_fit(const FailureSet& data, int n, const EmOpts& opts, Rng& rng,
                   const Vec& support_lo, const Vec& support_hi);

/// BIC over a candidate range of component counts; ties go to smaller n.
int select_components(const FailureSet& data, int n_min, int n_max, const EmOpts& opts, Rng& rng,
                      const Vec& support_lo, const Vec& support_hi);

/// Number of free parameters of an n-component full-covariance mixture in d dims.
long gmm_param_count(int n, int d);

InitialCondition gmm_sample(const GmmModel& model, Rng& rng);

/// Warm-started EM refit on the augmented failure set; component count unchanged.
GmmModel gmm_update(const GmmModel& model, const FailureSet& new_failures, FailureSet& full_data,
                    const EmOpts& opts);

/// Reads JSON-lines of {"x":[...]}, validating dimension and support.
FailureSet import_failures(const std::string& path, const InitialConditionDistribution& dist);

void save_gmm(const GmmModel& model, const std::string& path);
GmmModel load_gmm(const std::string& path);

}  // namespace failsearch
