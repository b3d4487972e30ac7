#pragma once

#include "quasirand/designs.hpp"
#include "quasirand/inference.hpp"
#include "quasirand/io.hpp"
#include "quasirand/links.hpp"
#include "quasirand/model.hpp"
#include "quasirand/propensity.hpp"
#include "quasirand/rng.hpp"
#include "quasirand/simlab.hpp"
#include "quasirand/theory.hpp"
