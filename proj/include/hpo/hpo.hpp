#pragma once

#include "hpo/rng.hpp"
#include "hpo/config_space.hpp"
#include "hpo/distance_cluster.hpp"
#include "hpo/objectives.hpp"
#include "hpo/forest.hpp"
#include "hpo/health_data.hpp"
#include "hpo/evaluation.hpp"
#include "hpo/sway.hpp"
#include "hpo/nisneak.hpp"
#include "hpo/baselines.hpp"
#include "hpo/stats.hpp"
#include "hpo/experiment.hpp"
