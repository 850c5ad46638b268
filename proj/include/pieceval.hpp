#pragma once

#include "pieceval/board.hpp"
#include "pieceval/elo.hpp"
#include "pieceval/error.hpp"
#include "pieceval/glm.hpp"
#include "pieceval/pgn.hpp"
#include "pieceval/random.hpp"
#include "pieceval/report.hpp"
#include "pieceval/selfplay.hpp"
#include "pieceval/simex.hpp"
#include "pieceval/snapshot.hpp"
#include "pieceval/synthetic.hpp"
