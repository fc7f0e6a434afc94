#pragma once

// Umbrella header.

#include "yamabe/config.hpp"
#include "yamabe/conformal.hpp"
#include "yamabe/errors.hpp"
#include "yamabe/estimates.hpp"
#include "yamabe/fermi.hpp"
#include "yamabe/geometry.hpp"
#include "yamabe/grid.hpp"
#include "yamabe/io.hpp"
#include "yamabe/manufactured.hpp"
#include "yamabe/pde.hpp"
#include "yamabe/problem.hpp"
#include "yamabe/symfunc.hpp"
#include "yamabe/verify.hpp"
