#pragma once

#include "rotinv/definetti.hpp"
#include "rotinv/error.hpp"
#include "rotinv/linalg.hpp"
#include "rotinv/parallel.hpp"
#include "rotinv/paths.hpp"
#include "rotinv/random.hpp"
#include "rotinv/rotations.hpp"
#include "rotinv/simulators.hpp"
#include "rotinv/stattests.hpp"
