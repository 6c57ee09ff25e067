#include "tae/error.hpp"
