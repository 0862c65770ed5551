#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "blockjm/nuts.hpp"

namespace blockjm {

/// Draws of one scalar, one vector per chain.
using ChainDraws = std::vector<std::vector<double>>;

/// Rank-normalized split-R-hat.
double split_rhat(const ChainDraws& chains);

/// Effective sample size (Geyer initial monotone sequence), no split or ranks.
double ess_basic(const ChainDraws& chains);

/// Rank-normalized split-chain effective sample size.
double ess_bulk(const ChainDraws& chains);

/// Monte Carlo standard error of the mean: sd / sqrt(ESS) on split chains.
double mcse_mean(const ChainDraws& chains);

struct ParamDiagnostics {
  double rhat = 1.0;
  double ess_bulk = 0.0;
  double mcse_mean = 0.0;
  bool flagged = false;  // rhat > 1.01
};

/// Column `param` of every chain.
ChainDraws column(const std::vector<ChainOutput>& chains, std::size_t param);

std::vector<ParamDiagnostics> diagnostics(const std::vector<ChainOutput>& chains);

}  // namespace blockjm
