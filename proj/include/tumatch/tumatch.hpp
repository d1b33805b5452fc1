#pragma once

#include "tumatch/choice_kernels.hpp"
#include "tumatch/diagnostics.hpp"
#include "tumatch/gev.hpp"
#include "tumatch/io.hpp"
#include "tumatch/market.hpp"
#include "tumatch/oracle.hpp"
#include "tumatch/random.hpp"
#include "tumatch/solver.hpp"
