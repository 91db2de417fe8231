#pragma once

#include "selfj/baselines.hpp"
#include "selfj/calibrate.hpp"
#include "selfj/commands.hpp"
#include "selfj/config.hpp"
#include "selfj/core.hpp"
#include "selfj/digest.hpp"
#include "selfj/error.hpp"
#include "selfj/gateway.hpp"
#include "selfj/http_transport.hpp"
#include "selfj/judge.hpp"
#include "selfj/metrics.hpp"
#include "selfj/mock_backend.hpp"
#include "selfj/parallel.hpp"
#include "selfj/prompts.hpp"
#include "selfj/scoregen.hpp"
#include "selfj/selective.hpp"
