#pragma once

#include "panelbias/bias.hpp"
#include "panelbias/block_diagonal.hpp"
#include "panelbias/data.hpp"
#include "panelbias/errors.hpp"
#include "panelbias/estimators.hpp"
#include "panelbias/external_fit.hpp"
#include "panelbias/gls.hpp"
#include "panelbias/permutation.hpp"
#include "panelbias/report.hpp"
#include "panelbias/simulate.hpp"
#include "panelbias/specification.hpp"
#include "panelbias/transforms.hpp"
#include "panelbias/variance.hpp"

#define PANELBIAS_VERSION "0.1.0"
