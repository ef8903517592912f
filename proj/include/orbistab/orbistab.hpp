#pragma once

#include "orbistab/errors.hpp"
#include "orbistab/mechanics.hpp"
#include "orbistab/spline.hpp"
#include "orbistab/orbit.hpp"
#include "orbistab/projection.hpp"
#include "orbistab/tvlin.hpp"
#include "orbistab/fourier.hpp"
#include "orbistab/riccati.hpp"
#include "orbistab/sim.hpp"
