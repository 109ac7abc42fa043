#pragma once

#include "demandflow/calendar.hpp"
#include "demandflow/error.hpp"
#include "demandflow/geo.hpp"
#include "demandflow/hexbin.hpp"
#include "demandflow/ingest.hpp"
#include "demandflow/serialize.hpp"
#include "demandflow/service.hpp"
#include "demandflow/shift.hpp"
#include "demandflow/spatial.hpp"
#include "demandflow/temporal.hpp"
