/**
 * @brief Umbrella header for the smica library.
 */
#pragma once

#include "smica/baselines.hpp"
#include "smica/core.hpp"
#include "smica/em.hpp"
#include "smica/extract.hpp"
#include "smica/io.hpp"
#include "smica/jdiag.hpp"
#include "smica/model.hpp"
#include "smica/spectral.hpp"
#include "smica/synth.hpp"
