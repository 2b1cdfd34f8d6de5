// Umbrella header for the library (everything except the CLI front end).

#ifndef REPS_REPS_HPP
#define REPS_REPS_HPP

#include "reps/autodiff.hpp"
#include "reps/dataset.hpp"
#include "reps/error.hpp"
#include "reps/evaluation.hpp"
#include "reps/geometry.hpp"
#include "reps/glfa.hpp"
#include "reps/io.hpp"
#include "reps/models.hpp"
#include "reps/nn.hpp"
#include "reps/parallel.hpp"
#include "reps/point_cloud.hpp"
#include "reps/scoring.hpp"
#include "reps/training.hpp"

#endif  // REPS_REPS_HPP
