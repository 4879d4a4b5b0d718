#pragma once

#include "gmmaug/augment.hpp"
#include "gmmaug/error.hpp"
#include "gmmaug/gmm.hpp"
#include "gmmaug/metrics.hpp"
#include "gmmaug/nifti.hpp"
#include "gmmaug/phantom.hpp"
#include "gmmaug/population.hpp"
#include "gmmaug/preprocess.hpp"
#include "gmmaug/quantile.hpp"
#include "gmmaug/rng.hpp"
#include "gmmaug/volume.hpp"
#include "gmmaug/histogram.hpp"
