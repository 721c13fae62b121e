#pragma once

#include "atomql/error.hpp"
#include "atomql/gpu_spec.hpp"
#include "atomql/ingest.hpp"
#include "atomql/opquant.hpp"
#include "atomql/param_table.hpp"
#include "atomql/queue_sim.hpp"
#include "atomql/report.hpp"
#include "atomql/scenario.hpp"
#include "atomql/sweep.hpp"
