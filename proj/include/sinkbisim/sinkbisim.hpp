#pragma once

#include "sinkbisim/rng.hpp"
#include "sinkbisim/mdp.hpp"
#include "sinkbisim/transport.hpp"
#include "sinkbisim/exact_transport.hpp"
#include "sinkbisim/bisim.hpp"
#include "sinkbisim/aggregate.hpp"
#include "sinkbisim/envgen.hpp"
#include "sinkbisim/measures.hpp"
#include "sinkbisim/api.hpp"
#include "sinkbisim/sharpness.hpp"
#include "sinkbisim/io.hpp"
