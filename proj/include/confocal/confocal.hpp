#pragma once

#include "confocal/cavity_solver.hpp"
#include "confocal/device.hpp"
#include "confocal/errors.hpp"
#include "confocal/finesse.hpp"
#include "confocal/geometry.hpp"
#include "confocal/imaging.hpp"
#include "confocal/io.hpp"
#include "confocal/lineshape.hpp"
#include "confocal/lock_analysis.hpp"
#include "confocal/mask.hpp"
#include "confocal/mode_basis.hpp"
#include "confocal/overlap.hpp"
#include "confocal/parallel.hpp"
#include "confocal/pump.hpp"
#include "confocal/spectrum.hpp"
#include "confocal/synth.hpp"
#include "confocal/waist.hpp"
