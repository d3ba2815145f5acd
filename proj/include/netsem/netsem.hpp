#pragma once

#include "netsem/errors.hpp"
#include "netsem/rng.hpp"
#include "netsem/netcore.hpp"
#include "netsem/game.hpp"
#include "netsem/dgp.hpp"
#include "netsem/linkform.hpp"
#include "netsem/estimators.hpp"
#include "netsem/montecarlo.hpp"
#include "netsem/io.hpp"
#include "netsem/config.hpp"
