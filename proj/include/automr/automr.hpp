#ifndef AUTOMR_AUTOMR_HPP
#define AUTOMR_AUTOMR_HPP

#include "automr/backend.hpp"
#include "automr/dataset.hpp"
#include "automr/gradcheck.hpp"
#include "automr/http_backend.hpp"
#include "automr/policy_net.hpp"
#include "automr/reinforce.hpp"
#include "automr/rng.hpp"
#include "automr/run_config.hpp"
#include "automr/sampler.hpp"
#include "automr/skeleton.hpp"
#include "automr/strategy.hpp"
#include "automr/strategy_catalog.hpp"

#endif  // AUTOMR_AUTOMR_HPP
