#pragma once

#include "pbill/analysis.hpp"
#include "pbill/backend.hpp"
#include "pbill/bytes.hpp"
#include "pbill/config.hpp"
#include "pbill/error.hpp"
#include "pbill/group/params.hpp"
#include "pbill/ledger.hpp"
#include "pbill/metering.hpp"
#include "pbill/net.hpp"
#include "pbill/parties.hpp"
#include "pbill/pedersen.hpp"
#include "pbill/privacy.hpp"
#include "pbill/random.hpp"
#include "pbill/signature.hpp"
#include "pbill/simulate.hpp"
#include "pbill/wire.hpp"
