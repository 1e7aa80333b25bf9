#pragma once

#include "flap/ci_test.hpp"
#include "flap/csv.hpp"
#include "flap/dataset.hpp"
#include "flap/errors.hpp"
#include "flap/experiment.hpp"
#include "flap/logistic.hpp"
#include "flap/metrics.hpp"
#include "flap/numeric.hpp"
#include "flap/parallel.hpp"
#include "flap/pipeline.hpp"
#include "flap/predictors.hpp"
#include "flap/preprocess.hpp"
#include "flap/rng.hpp"
#include "flap/schema.hpp"
#include "flap/scm.hpp"
