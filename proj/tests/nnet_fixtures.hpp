#pragma once

#include "radcls/model.hpp"

namespace testutil {

// Small enough for a full finite-difference sweep.
inline radcls::ModelConfig gradcheck_config() {
  radcls::ModelConfig c;
  c.stage_block_counts = {1, 1};
  c.stage_channels = {8, 8};
  c.stem_channels = 4;
  c.stem_kernel = 3;
  c.stem_stride = 1;
  c.stem_pool = false;
  c.cbam.reduction_ratio = 2;
  c.cbam.spatial_kernel = 3;
  c.dropout_p = 0.0;
  c.input_size = 8;
  return c;
}

}  // namespace testutil
