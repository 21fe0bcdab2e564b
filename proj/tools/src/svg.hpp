#pragma once

#include <string>

#include "metabias/dataset.hpp"

namespace metabias::tool {

enum class FunnelMode { standard, modified };

// Standalone SVG funnel plot. Standard mode plots published effects against
// precision 1/se; modified mode plots effects against sqrt(total sample size)
// and shows each unpublished study as a horizontal line at its sqrt(n).
// Published studies are the only circle elements, unpublished studies the
// only line elements; axes and the vertical reference sit in path elements.
// reference_theta is drawn as a dashed vertical rule (typically the pooled
// log odds ratio).
std::string funnel_svg(const MetaDataset& ds, FunnelMode mode, double reference_theta);

}  // namespace metabias::tool
