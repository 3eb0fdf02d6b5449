#pragma once

#include "trustcal/rng.hpp"
#include "trustcal/math.hpp"
#include "trustcal/confidence.hpp"
#include "trustcal/records.hpp"
#include "trustcal/agent.hpp"
#include "trustcal/metrics.hpp"
#include "trustcal/model.hpp"
#include "trustcal/map_fit.hpp"
#include "trustcal/diagnostics.hpp"
#include "trustcal/mcmc.hpp"
#include "trustcal/posterior.hpp"
#include "trustcal/report.hpp"
#include "trustcal/study.hpp"
#include "trustcal/session.hpp"
