"""unitlab - unitization layers, exact EM distance bounds and critic estimates."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("unitlab")
except PackageNotFoundError:
    __version__ = "0.0.0"

from unitlab.core.config import ExperimentConfig
from unitlab.nn.network import Network
from unitlab.transport.models import SampleSet

__all__ = [
    "ExperimentConfig",
    "Network",
    "SampleSet",
]
