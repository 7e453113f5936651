#pragma once

#include "slowfast/errors.hpp"
#include "slowfast/rng.hpp"
#include "slowfast/linalg.hpp"
#include "slowfast/noise.hpp"
#include "slowfast/model.hpp"
#include "slowfast/manifold.hpp"
#include "slowfast/reduced.hpp"
#include "slowfast/parallel.hpp"
#include "slowfast/nelder_mead.hpp"
#include "slowfast/estimate.hpp"
#include "slowfast/io.hpp"
#include "slowfast/config.hpp"
#include "slowfast/cli.hpp"
