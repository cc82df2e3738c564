"""V-fold penalization and competing model-selection criteria for histogram regression."""

from .errors import VFoldError
from .experiments import BenchmarkTable, benchmark, run_replication, table1_selectors
from .histogram_core import (
    FittedHistogram,
    HistogramModel,
    ModelCollection,
    Partition1D,
    bias,
    build_collection,
    empirical_risk,
    excess_loss,
    filter_admissible,
    fit,
)
from .scenarios import SCENARIOS, CollectionKind, DataSet, RegressionScenario, generate, get_scenario
from .selectors import Method, SelectorSpec, run_selector, select

__version__ = "0.1.0"
