#pragma once

#include "fluidrisk/config.hpp"
#include "fluidrisk/model.hpp"

#include <string>
#include <vector>

namespace gallery {

using fluidrisk::FluidModel;
using fluidrisk::Matrix;
using fluidrisk::Vector;

inline FluidModel model_a() {
  Matrix c(2, 2), d(2, 2);
  c << -1, 0.9, 0.8, -1;
  d << 0.1, 0, 0, 0.2;
  return fluidrisk::make_model("MODEL-A", {1, -1}, fluidrisk::DurationKernel::constant(c, d, 1.0),
                               Vector::Unit(2, 0), Vector::Zero(2), Matrix::Zero(2, 2));
}

inline FluidModel model_a_weighted() {
  FluidModel m = model_a();
  m.sigma << 0.5, 0;
  m.cost << 0.4, 0, 0, 0.7;
  return m;
}

inline FluidModel pareto_renewal() {
  using fluidrisk::Hazard;
  Matrix route(2, 2);
  route << 0, 1, 1, 0;
  Hazard h{Hazard::Family::pareto, 2.0, 1.0, 0.0};
  return fluidrisk::make_model("pareto", {1, -1},
                               fluidrisk::DurationKernel::hazard({h, h}, route, 2.0),
                               Vector::Unit(2, 0), Vector::Zero(2), Matrix::Zero(2, 2));
}

// piecewise-constant C, no arrivals: the duration is calendar time
inline FluidModel calendar() {
  Matrix c1(2, 2), c2(2, 2);
  c1 << -1, 1, 0.5, -0.5;
  c2 << -0.5, 0.5, 1, -1;
  Matrix z = Matrix::Zero(2, 2);
  return fluidrisk::make_model("calendar", {1, -1},
                               fluidrisk::DurationKernel::piecewise({2.0}, {c1, c2}, {z, z}, 1.0),
                               Vector::Unit(2, 0), Vector::Zero(2), Matrix::Zero(2, 2));
}

inline std::string models_dir() { return FLUIDRISK_MODELS_DIR; }

inline std::vector<std::string> gallery_files() {
  return {"model_a.json", "mmpp.json", "renewal_erlang.json", "pareto_renewal.json",
          "calendar.json"};
}

inline FluidModel load(const std::string& file) {
  return fluidrisk::load_model(models_dir() + "/" + file);
}

}  // namespace gallery
