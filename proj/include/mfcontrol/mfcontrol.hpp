#pragma once

#include "mfcontrol/errors.hpp"
#include "mfcontrol/core_types.hpp"
#include "mfcontrol/flows.hpp"
#include "mfcontrol/transport.hpp"
#include "mfcontrol/functionals.hpp"
#include "mfcontrol/increment.hpp"
#include "mfcontrol/descent.hpp"
#include "mfcontrol/bloch.hpp"
#include "mfcontrol/experiment.hpp"
#include "mfcontrol/toys.hpp"
