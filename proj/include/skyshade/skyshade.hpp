#pragma once

#include "skyshade/cloud.hpp"
#include "skyshade/config.hpp"
#include "skyshade/error.hpp"
#include "skyshade/eval.hpp"
#include "skyshade/features.hpp"
#include "skyshade/geometry.hpp"
#include "skyshade/ground.hpp"
#include "skyshade/kdtree.hpp"
#include "skyshade/nmea.hpp"
#include "skyshade/ply.hpp"
#include "skyshade/predictor.hpp"
#include "skyshade/sky_model.hpp"
#include "skyshade/synth.hpp"
#include "skyshade/threading.hpp"
