#pragma once

// Umbrella header for the whole library.

#include "sqz/cavity.hpp"
#include "sqz/config.hpp"
#include "sqz/csv.hpp"
#include "sqz/errors.hpp"
#include "sqz/fit.hpp"
#include "sqz/homodyne.hpp"
#include "sqz/laser_noise.hpp"
#include "sqz/manifest.hpp"
#include "sqz/model.hpp"
#include "sqz/pump.hpp"
#include "sqz/random.hpp"
#include "sqz/spectra.hpp"
#include "sqz/units.hpp"
#include "sqz/welch.hpp"
