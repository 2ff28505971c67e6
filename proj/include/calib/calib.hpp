#pragma once

#include <calib/analysis.hpp>
#include <calib/beta.hpp>
#include <calib/binning.hpp>
#include <calib/data.hpp>
#include <calib/error.hpp>
#include <calib/estimators.hpp>
#include <calib/fitting.hpp>
#include <calib/format.hpp>
#include <calib/glm.hpp>
#include <calib/recalibration.hpp>
#include <calib/report.hpp>
#include <calib/rng.hpp>
#include <calib/synthetic.hpp>

namespace calib {

inline constexpr char const* version = "0.1.0";

}  // namespace calib
