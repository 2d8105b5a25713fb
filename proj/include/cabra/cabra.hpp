#ifndef CABRA_CABRA_HPP_
#define CABRA_CABRA_HPP_

#include "cabra/core.hpp"
#include "cabra/structure.hpp"
#include "cabra/matparams.hpp"
#include "cabra/families.hpp"
#include "cabra/operators.hpp"
#include "cabra/solver.hpp"
#include "cabra/design.hpp"
#include "cabra/sdpa.hpp"
#include "cabra/decentral.hpp"
#include "cabra/probgen.hpp"
#include "cabra/io.hpp"
#include "cabra/experiment.hpp"

#endif  // CABRA_CABRA_HPP_
