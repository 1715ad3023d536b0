"""Cloud-to-climate response emulation workbench."""

__version__ = "0.1.0"

from .dataset import AnomalyDataset, SyntheticSpec, generate_synthetic  # noqa: F401
from .grid import IcosahedralGrid, RegionSpec, build_grid, get_grid  # noqa: F401
from .intervention import InterventionScenario, aggregate_response  # noqa: F401
from .mlp import MlpModel, mlp_backward, mlp_forward  # noqa: F401
from .pipeline import PipelineConfig, compute_anomalies  # noqa: F401
from .shift import fit_reference, score  # noqa: F401
from .tipping import TippingSite, assess  # noqa: F401
from .training import LagSuite, TrainConfig, train, train_lag_suite  # noqa: F401
