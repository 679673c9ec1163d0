// Umbrella header.
#pragma once

#include "streampoison/attacks.hpp"
#include "streampoison/core.hpp"
#include "streampoison/defense.hpp"
#include "streampoison/fully_online.hpp"
#include "streampoison/harness.hpp"
#include "streampoison/io.hpp"
#include "streampoison/learner.hpp"
#include "streampoison/numeric.hpp"
#include "streampoison/regime.hpp"
#include "streampoison/tasks.hpp"
#include "streampoison/verification.hpp"
