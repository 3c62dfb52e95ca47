#pragma once

#include "mclock/core.hpp"
#include "mclock/fourier.hpp"
#include "mclock/liouville.hpp"
#include "mclock/model.hpp"
#include "mclock/observables.hpp"
#include "mclock/trajectory.hpp"
