#pragma once

#include "ben/adjust.hpp"
#include "ben/bagging.hpp"
#include "ben/config.hpp"
#include "ben/dataset.hpp"
#include "ben/design.hpp"
#include "ben/empirical_null.hpp"
#include "ben/errors.hpp"
#include "ben/glm.hpp"
#include "ben/io.hpp"
#include "ben/models.hpp"
#include "ben/pseudo_sim.hpp"
#include "ben/report.hpp"
#include "ben/rng.hpp"
#include "ben/stats.hpp"
#include "ben/synthetic.hpp"
