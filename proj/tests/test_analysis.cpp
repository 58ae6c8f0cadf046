#include <catch_amalgamated.hpp>

#include "hmvae/analysis.hpp"
