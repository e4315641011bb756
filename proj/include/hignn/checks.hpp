#pragma once

// Self-tests run by `hignn_cli check` and by the test suites.

#include <cstdint>
#include <string>

#include "hignn/model.hpp"

namespace hignn {

struct GradientCheck {
    /// max over scalars of |g - fd| / max(|g|, |fd|, floor)
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t num_scalars = 0;
};

/// Backward pass vs central differences of the full loss on a 3-link instance
/// (2 single-antenna + 1 two-antenna). `floor` keeps vanishing coordinates
/// from dividing round-off by round-off. At eps = 1e-6 the difference quotient
/// carries about 1e-9 absolute round-off, which dominates coordinates near 1e-7.
GradientCheck check_gradients(std::uint64_t seed, const ModelArch& arch = {}, double eps = 1e-5,
                              double floor = 1e-6);

struct PermutationCheck {
    double max_utility_error = 0.0;     ///< relative WSR change under relabeling
    double max_equivariance_error = 0.0; ///< relative output change vs permuted output
    int trials = 0;
};

/// Random (instance, parameters, permutation) triples of the default scenario.
PermutationCheck check_permutations(int trials, std::uint64_t seed, const ModelArch& arch = {});

} // namespace hignn
