#pragma once

#include "relrec/dataset.hpp"
#include "relrec/estimation.hpp"
#include "relrec/frailty.hpp"
#include "relrec/inference.hpp"
#include "relrec/models.hpp"
#include "relrec/optim.hpp"
#include "relrec/random.hpp"
#include "relrec/simulation.hpp"
