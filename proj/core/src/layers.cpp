// Layer blocks are header-only templates; see cfstereo/layers.hpp.
#include "cfstereo/layers.hpp"
