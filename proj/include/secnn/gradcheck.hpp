#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "secnn/autograd.hpp"

namespace secnn {

struct GradCheckOptions {
    // Central-difference step is step_scale * (1 + |x|).
    double step_scale = 1e-5;
    // 0 checks every coordinate; otherwise a seeded sample of this many per
    // tensor.
    std::size_t max_coords_per_tensor = 0;
    std::uint64_t seed = 0;
};

struct GradCheckReport {
    // max over checked coordinates of |analytic - numeric| / max(1, |numeric|)
    double max_rel_err = 0.0;
    bool pass = false;
    std::size_t coords_checked = 0;
    // "<tensor>[<flat index>]" of the worst coordinate.
    std::string worst;
};

// Scalar-valued function of one input, evaluated on a fresh tape.
using ScalarFn = std::function<Var(Tape&, const Var& input)>;
// Scalar-valued function of whatever parameters it binds itself.
using LossFn = std::function<Var(Tape&)>;

// Checks d fn / d point. Throws NondeterministicFunction if two evaluations
// at the same point disagree.
GradCheckReport grad_check(const ScalarFn& fn, const Tensor& point, double tolerance,
                           const GradCheckOptions& options = {});

// Checks d fn / d p for every listed parameter (which fn must bind through
// Tape::param). Parameter grads are zeroed before and left holding the
// analytic gradient.
GradCheckReport grad_check_parameters(const LossFn& fn, const std::vector<Parameter*>& params,
                                      double tolerance, const GradCheckOptions& options = {});

}  // namespace secnn
