"""Island-model neuroevolution of recurrent networks, with seed-network structure transfer."""

__version__ = "0.1.0"

from .genome import Genome, build_minimal_genome, deserialize, load, save, serialize  # noqa: E402
from .trainer import TrainConfig, sgd_train  # noqa: E402
from .evolution import EvolveConfig, run, run_from_scratch  # noqa: E402
from .transfer import TransferSpec, adapt  # noqa: E402

__all__ = ["Genome", "build_minimal_genome", "serialize", "deserialize", "save", "load",
           "TrainConfig", "sgd_train", "EvolveConfig", "run", "run_from_scratch",
           "TransferSpec", "adapt", "__version__"]
