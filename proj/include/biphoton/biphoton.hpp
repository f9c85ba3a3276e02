#pragma once

#include "biphoton/errors.hpp"
#include "biphoton/fockcore.hpp"
#include "biphoton/geometry.hpp"
#include "biphoton/scan.hpp"
#include "biphoton/fitfringe.hpp"
#include "biphoton/io.hpp"
#include "biphoton/reproduce.hpp"
