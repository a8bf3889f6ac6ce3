#pragma once

#include "dragvid/backbone.hpp"
#include "dragvid/core.hpp"
#include "dragvid/engine.hpp"
#include "dragvid/metrics.hpp"
#include "dragvid/propagate.hpp"
#include "dragvid/supervise.hpp"
#include "dragvid/synth.hpp"
#include "dragvid/track.hpp"
