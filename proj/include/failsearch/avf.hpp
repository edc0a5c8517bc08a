#pragma once

#include "failsearch/mlp.hpp"
#include "failsearch/sim.hpp"

#include <vector>

namespace failsearch {

/// Late-training window of (X, theta) features and failure labels,
/// z-normalized per column.
struct AvfDataset {
    Mat features;  // rows = episodes, cols = x components then normalized theta
    Vec labels;    // 0/1
    NormStats norm;
    long first_episode = 0;
    long last_episode = 0;
    bool no_failures = false;  // warning flag: window contained zero failures
};

/// Supervised failure-probability predictor over (X, theta).
struct AvfModel {
    MlpParams network;  // [x_dim+1, 64, 32, 1] relu/relu/sigmoid
    NormStats norm;
    double theta_at_test = 1.0;
};

struct AvfTrainOpts {
    long epochs = 500;
    double lr = 1e-3;
    int batch_size = 32;
};

/// Keep the last `window_size` records; theta feature is episode index
/// normalized by the full log length.
AvfDataset build_dataset(const std::vector<EpisodeRecord>& log, size_t window_size);

AvfModel train_avf(const AvfDataset& ds, const AvfTrainOpts& opts, Rng& rng);

double avf_predict(const AvfModel& model, const InitialCondition& x, double theta);

/// Sample n candidates from P_X and return the one the predictor scores
/// highest; ties go to the lowest candidate index.
InitialCondition avf_select(const AvfModel& model, const InitialConditionDistribution& dist,
                            int n_candidates, Rng& rng);

/// Tie-break-stable argmax used by avf_select; exposed for testing.
int argmax_first(const Vec& scores);

void save_avf(const AvfModel& model, const std::string& path);
AvfModel load_avf(const std::string& path);

}  // namespace failsearch
