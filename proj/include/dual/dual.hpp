#pragma once

#include "dual/errors.hpp"
#include "dual/rng.hpp"
#include "dual/kernel.hpp"
#include "dual/sample.hpp"
#include "dual/hstack.hpp"
#include "dual/ustat.hpp"
#include "dual/selection.hpp"
#include "dual/boottest.hpp"
#include "dual/trainer.hpp"
#include "dual/datagen.hpp"
#include "dual/bench.hpp"
