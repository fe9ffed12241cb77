#pragma once

#include "evsem/config_io.hpp"
#include "evsem/errors.hpp"
#include "evsem/evidence.hpp"
#include "evsem/kernel.hpp"
#include "evsem/map_io.hpp"
#include "evsem/metrics.hpp"
#include "evsem/pipeline.hpp"
#include "evsem/pose.hpp"
#include "evsem/random.hpp"
#include "evsem/scan_io.hpp"
#include "evsem/special_functions.hpp"
#include "evsem/synthetic.hpp"
#include "evsem/voxel_map.hpp"
