#pragma once

#include "hvacdt/types.hpp"
#include "hvacdt/rng.hpp"
#include "hvacdt/csv.hpp"
#include "hvacdt/parallel.hpp"
#include "hvacdt/building_sim.hpp"
#include "hvacdt/objective.hpp"
#include "hvacdt/dynamics_model.hpp"
#include "hvacdt/mbrl_controller.hpp"
#include "hvacdt/decision_tree.hpp"
#include "hvacdt/policy_extraction.hpp"
#include "hvacdt/verifier.hpp"
#include "hvacdt/harness.hpp"
#include "hvacdt/config.hpp"
