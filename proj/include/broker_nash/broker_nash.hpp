#pragma once

#include "broker_nash/errors.hpp"
#include "broker_nash/params.hpp"
#include "broker_nash/model.hpp"
#include "broker_nash/time_grid.hpp"
#include "broker_nash/riccati.hpp"
#include "broker_nash/offset.hpp"
#include "broker_nash/random.hpp"
#include "broker_nash/parallel.hpp"
#include "broker_nash/simulation.hpp"
#include "broker_nash/gateaux.hpp"
#include "broker_nash/picard.hpp"
#include "broker_nash/config.hpp"
#include "broker_nash/io.hpp"
#include "broker_nash/commands.hpp"
