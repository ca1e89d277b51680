"""Constants and enums for unitlab to eliminate magic strings and values."""

from enum import Enum, IntEnum


class NormKind(Enum):
    """Normalization placed after a hidden dense layer."""

    NONE = "none"
    BN = "bn"
    UNITIZATION = "unitization"


class LayerMode(Enum):
    """Evaluation mode of a normalization layer."""

    TRAIN = "train"
    INFERENCE = "inference"


class RunMode(Enum):
    """Harness subcommands."""

    TRAIN = "train"
    MOMENTS = "moments"
    EMDIST = "emdist"
    BOUNDS = "bounds"
    ORACLE_CHECK = "oracle-check"


class UnitizationMode(Enum):
    """Unitization variants covered by the constant upper bounds."""

    VANILLA = "vanilla"  # g(x) = x / ||x||
    SCALAR = "scalar"  # one alpha for all components
    VECTOR = "vector"  # per-component alpha


class CriticOptimizer(Enum):
    """Update rule used for the critic's gradient ascent."""

    RMSPROP = "rmsprop"
    SGD = "sgd"


class ExitStatus(IntEnum):
    """Process exit codes of the CLI."""

    OK = 0
    ERROR = 1
    BOUND_VIOLATION = 2
    DIVERGED = 3


class FileNames:
    """Output file names written into a run directory."""

    RUN_CSV = "run.csv"
    MOMENTS_CSV = "moments.csv"
    STABILITY_CSV = "stability.csv"
    EMDIST_CSV = "emdist.csv"
    BOUNDS_CSV = "bounds.csv"
    ORACLE_CSV = "oracle.csv"
    MANIFEST = "manifest.txt"
    CHECKPOINT_DIR = "checkpoints"
    CONFIG = "unitlab_config.toml"

    @staticmethod
    def checkpoint(epoch: int) -> str:
        """Checkpoint file name for the weights at the end of ``epoch``."""
        return f"epoch_{epoch:04d}.ulab"


class Defaults:
    """Numeric defaults shared across modules."""

    BN_EPS = 1e-5
    BN_MOMENTUM = 0.1
    UNIT_EPS = 1e-5

    CONV_KERNEL = 3
    POOL_SIZE = 2

    SANDWICH_SLACK = 1e-9
    LIPSCHITZ_SLACK = 1e-12
    ORACLE_MAX_SAMPLES = 256

    GRAD_CHECK_STEP = 1e-5
    GRAD_CHECK_FLOOR = 1e-8

    CRITIC_ITERATIONS = 1500
    CRITIC_BATCH_SIZE = 128
    CRITIC_CLIP = 0.01
    CRITIC_LR = 5e-5
    CRITIC_HIDDEN = (128, 128, 128)
    RMSPROP_DECAY = 0.9
    RMSPROP_EPS = 1e-8

    MOMENT_VAR_FLOOR = 1e-12
    MOMENT_MIN_SAMPLES = 4


class CheckpointFormat:
    """Constants of the ULAB checkpoint container."""

    MAGIC = b"ULAB"
    VERSION = 1


class IdxMagic:
    """Big-endian magic numbers of the IDX container."""

    IMAGES = 2051
    LABELS = 2049
