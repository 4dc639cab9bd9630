#pragma once

#include "streamgrid/camera.hpp"
#include "streamgrid/image.hpp"

namespace streamgrid {

// One training/evaluation view: a camera plus the image it observed.
struct View {
  Camera cam;
  Image image;
};

}  // namespace streamgrid
