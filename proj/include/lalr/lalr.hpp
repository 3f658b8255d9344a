#pragma once

#include "lalr/activation.hpp"
#include "lalr/baselines.hpp"
#include "lalr/bench.hpp"
#include "lalr/config.hpp"
#include "lalr/data.hpp"
#include "lalr/error.hpp"
#include "lalr/format.hpp"
#include "lalr/lipschitz.hpp"
#include "lalr/losses.hpp"
#include "lalr/network.hpp"
#include "lalr/parallel.hpp"
#include "lalr/rng.hpp"
#include "lalr/serialize.hpp"
#include "lalr/trainer.hpp"
