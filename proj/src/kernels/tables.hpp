#pragma once

#include "secnn/kernels.hpp"

namespace secnn::detail {

const KernelTable& scalar_table();
// nullptr when the variant was not compiled for this target.
const KernelTable* avx2_table();
const KernelTable* neon_table();

}  // namespace secnn::detail
