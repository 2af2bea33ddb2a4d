#pragma once

// Small scenarios shared by the unit tests.

#include "bibo/config.hpp"
#include "bibo/experiment.hpp"

namespace fixtures {

/// A few users over one hour: enough for every split to be non-empty.
inline bibo::config::RunConfig small_config(std::uint64_t seed = 7) {
    bibo::config::RunConfig rc;
    rc.seed = seed;
    rc.generator.labeled_users = 4;
    rc.generator.unlabeled_users = 6;
    rc.generator.duration_s = 3600.0;
    rc.model.epochs = 2;
    rc.forest.tree_count = 10;
    rc.sweep.trials = 2;
    rc.sweep.p_grid = {0.0, 0.3};
    rc.sweep.forest.tree_count = 5;
    rc.random_windows = 2000;
    return rc;
}

inline const bibo::experiment::Dataset& small_dataset() {
    static const auto ds = bibo::experiment::build_dataset(small_config());
    return ds;
}

} // namespace fixtures
