#pragma once

#include "siv/cli.hpp"
#include "siv/config.hpp"
#include "siv/control.hpp"
#include "siv/grid.hpp"
#include "siv/integrator.hpp"
#include "siv/irl.hpp"
#include "siv/measure.hpp"
#include "siv/model.hpp"
#include "siv/regime.hpp"
