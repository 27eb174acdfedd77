"""Minority Game simulation and minority-bidding analytics for RTB auctions."""
from ._backend import BACKEND
from .analytics import (
    ClusterResult,
    FeatureMatrix,
    adjusted_rand_index,
    cluster_dataset,
    cluster_skewness,
    identify_minority_cluster,
    kmeans,
    variance_scaling,
)
from .bidding import SimParams, cesaro_average, init_agents, median, run_auction_round, run_simulation
from .errors import (
    ConfigError,
    ContractError,
    DegenerateInputError,
    EvaluationError,
    MinorityRTBError,
    RowError,
    SchemaError,
)
from .landscape import GenConfig, LandscapeDataset, decode_date, parse_csv, summarize, synth_generate
from .mg_engine import MgConfig, history_index, init_game, run, step, volatility

__version__ = "0.1.0"
