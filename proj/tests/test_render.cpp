#include <catch_amalgamated.hpp>

#include "hmvae/render.hpp"
