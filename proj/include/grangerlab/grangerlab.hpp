#pragma once

// Umbrella header for the grangerlab library: Granger-causality statistics
// in the time domain, the frequency domain, and time-varying settings, with
// simulation ground truth and resampling-based significance testing.

#include "grangerlab/csv.hpp"
#include "grangerlab/distributions.hpp"
#include "grangerlab/errors.hpp"
#include "grangerlab/gc_time.hpp"
#include "grangerlab/parallel.hpp"
#include "grangerlab/resampling.hpp"
#include "grangerlab/rng.hpp"
#include "grangerlab/serialize.hpp"
#include "grangerlab/simulation.hpp"
#include "grangerlab/spectral.hpp"
#include "grangerlab/time_series.hpp"
#include "grangerlab/transfer_entropy.hpp"
#include "grangerlab/tv_var.hpp"
#include "grangerlab/var.hpp"
