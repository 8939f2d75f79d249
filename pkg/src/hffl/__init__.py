"""Hierarchically fair federated learning: simulator, valuation and bounds."""

from .datagen import (Dataset, LevelSubsample, Partition, agent_blobs, generate_blobs,
                      generate_cluster_blobs, level_subsample, load_idx, partition)
from .errors import (AggregationError, CapacityError, ConfigError, DomainError, FormatError,
                     HfflError, ParticipantError, PromotionError, SessionError, ShapeError)
from .federation import (FederationConfig, ParticipantSet, RoundMetrics, agent_update, aggregate,
                         local_baseline, run_federation)
from .hierarchy import HfflPlusReport, LevelReport, promote, run_hffl, run_hffl_plus
from .levels import LevelConfig
from .models import ArchSpec, OptimizerConfig, OptState, ParamVector, adam_step, init_params, loss_and_grad, score

__version__ = "0.1.0"
