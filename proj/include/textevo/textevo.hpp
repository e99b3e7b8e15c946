#pragma once

#include <textevo/cache.hpp>
#include <textevo/checkpoint.hpp>
#include <textevo/core.hpp>
#include <textevo/domains/packing.hpp>
#include <textevo/domains/string_task.hpp>
#include <textevo/engine.hpp>
#include <textevo/eval_host.hpp>
#include <textevo/pareto.hpp>
#include <textevo/proposer.hpp>
#include <textevo/refine.hpp>
#include <textevo/rng.hpp>
