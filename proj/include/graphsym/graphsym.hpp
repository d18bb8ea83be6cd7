#pragma once

/// \file graphsym.hpp
/// \brief Umbrella header for the whole library.

#include "graphsym/adder_gen.hpp"
#include "graphsym/cell_library.hpp"
#include "graphsym/circuit_graph.hpp"
#include "graphsym/error.hpp"
#include "graphsym/features.hpp"
#include "graphsym/gatv2.hpp"
#include "graphsym/graph_io.hpp"
#include "graphsym/metrics.hpp"
#include "graphsym/netlist.hpp"
#include "graphsym/physopt.hpp"
#include "graphsym/pipeline.hpp"
#include "graphsym/reconstruct.hpp"
#include "graphsym/sta.hpp"
