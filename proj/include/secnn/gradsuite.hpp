#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "secnn/gradcheck.hpp"

namespace secnn {

// layers: every primitive layer plus the SE gate; blocks: Residual-SE
// (identity and projection skips) and the ResNet bottleneck; model: the
// whole CustomCNN (C=8, 1x3x16x16) with sampled coordinates.
enum class GradScope { layers, blocks, model };

std::optional<GradScope> parse_grad_scope(std::string_view name) noexcept;

struct GradUnitResult {
    std::string unit;
    GradCheckReport report;
};

// f64 central differences on small seeded shapes.
std::vector<GradUnitResult> run_grad_suite(GradScope scope, double tolerance = 1e-4, std::uint64_t seed = 0);

}  // namespace secnn
