#pragma once

#include "bevloc/attention.hpp"
#include "bevloc/blob.hpp"
#include "bevloc/dataset.hpp"
#include "bevloc/decoder.hpp"
#include "bevloc/embedding.hpp"
#include "bevloc/format.hpp"
#include "bevloc/grid_ops.hpp"
#include "bevloc/grids.hpp"
#include "bevloc/index_io.hpp"
#include "bevloc/localizer.hpp"
#include "bevloc/losses.hpp"
#include "bevloc/metrics.hpp"
#include "bevloc/parallel.hpp"
#include "bevloc/pose2d.hpp"
#include "bevloc/report.hpp"
#include "bevloc/rng.hpp"
#include "bevloc/synthworld.hpp"
#include "bevloc/tensor.hpp"
