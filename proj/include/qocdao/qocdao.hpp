#pragma once

#include "qocdao/agents.hpp"
#include "qocdao/engine.hpp"
#include "qocdao/errors.hpp"
#include "qocdao/harness.hpp"
#include "qocdao/hash.hpp"
#include "qocdao/ids.hpp"
#include "qocdao/json_io.hpp"
#include "qocdao/ledger.hpp"
#include "qocdao/pipeline.hpp"
#include "qocdao/report.hpp"
#include "qocdao/safeguards.hpp"
#include "qocdao/service.hpp"
