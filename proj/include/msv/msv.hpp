#pragma once

#include "msv/errors.hpp"
#include "msv/raster.hpp"
#include "msv/camera_model.hpp"
#include "msv/synthetic_rig.hpp"
#include "msv/target_detect.hpp"
#include "msv/calibration.hpp"
#include "msv/registration.hpp"
#include "msv/fusion.hpp"
#include "msv/io/image_io.hpp"
#include "msv/io/ply.hpp"
#include "msv/io/json.hpp"
