"""Nowcasting next-day implied-volatility moves from prices, option-implied volatility and social sentiment."""

from .evaluation import auc, make_plan, run_ablation
from .features import build_matrix, scenario_columns
from .forest import Forest, ForestConfig, config_grid, fit_forest
from .hmm import GaussianHmm, fit_baum_welch, viterbi
from .ivindex import OptionChainSnapshot, OptionQuote, iv30

__version__ = "0.1.0"
