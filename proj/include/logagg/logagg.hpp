#pragma once

#include "logagg/measures.hpp"
#include "logagg/fourier.hpp"
#include "logagg/simplex_opt.hpp"
#include "logagg/spectral_agg.hpp"
#include "logagg/density_agg.hpp"
#include "logagg/simulate.hpp"
#include "logagg/harness.hpp"
