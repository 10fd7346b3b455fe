#pragma once

#include "errors.hpp"
#include "poly.hpp"
#include "grid.hpp"
#include "kernel.hpp"
#include "environment.hpp"
#include "mechanism.hpp"
#include "validate.hpp"
#include "value.hpp"
#include "ic.hpp"
#include "synth.hpp"
#include "optimize.hpp"
#include "montecarlo.hpp"
#include "scenario.hpp"
#include "output.hpp"
