#pragma once

#include "cbo_lab/diagnostics.hpp"
#include "cbo_lab/dynamics.hpp"
#include "cbo_lab/ensemble.hpp"
#include "cbo_lab/errors.hpp"
#include "cbo_lab/montecarlo.hpp"
#include "cbo_lab/objectives.hpp"
#include "cbo_lab/random.hpp"
#include "cbo_lab/series.hpp"
#include "cbo_lab/spectral.hpp"

namespace cbo {
inline constexpr const char* kVersion = "0.1.0";
}
