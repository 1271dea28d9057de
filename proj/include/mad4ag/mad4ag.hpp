#pragma once

#include "mad4ag/activity.hpp"
#include "mad4ag/config.hpp"
#include "mad4ag/core.hpp"
#include "mad4ag/csv.hpp"
#include "mad4ag/dbscan.hpp"
#include "mad4ag/debias.hpp"
#include "mad4ag/dummy.hpp"
#include "mad4ag/evaluation.hpp"
#include "mad4ag/ingestion.hpp"
#include "mad4ag/matching.hpp"
#include "mad4ag/parallel.hpp"
#include "mad4ag/pipeline.hpp"
#include "mad4ag/plan.hpp"
#include "mad4ag/primary.hpp"
#include "mad4ag/stops.hpp"
#include "mad4ag/synthesis.hpp"
#include "mad4ag/synthworld.hpp"
