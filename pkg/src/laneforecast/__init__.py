"""Lane-graph motion forecasting built on a small fp64 autodiff core.

Subpackages: ``numcore`` (tensors, tape, sparse matrices), the model pieces
``mapgraph``, ``actornet``, ``lanegcn``, ``fusion`` and ``head``, and
``pipeline`` (scenario I/O, synthesis, training, metrics, CLI).
"""

from .actornet import ActorNet, ActorNetConfig, InsufficientHistory, actor_features, encode_trajectory
from .fusion import AttentionLayer, FusionConfig, FusionNet, attention_aggregate, fuse
from .head import (
    Forecast,
    LossConfig,
    NoSupervision,
    PredictionHeader,
    classification_loss,
    positive_mode,
    predict_header,
    regression_loss,
    total_loss,
)
from .lanegcn import (
    LaneConvSpec,
    LaneGCN,
    dilated_laneconv,
    graphconv_baseline,
    lanegcn_forward,
    laneconv,
    multiscale_laneconv,
    normalized_laplacian,
)
from .mapgraph import (
    Lane,
    LaneGraph,
    MapError,
    NodeFeatureNet,
    build_lane_graph,
    context_pairs,
    dilated_adjacency,
    node_features,
)
from .pipeline.frame import Frame, denormalize_forecast, normalize
from .pipeline.metrics import MetricsReport, evaluate
from .pipeline.model import LaneGCNModel, ModelConfig, predict, prepare
from .pipeline.scenario import (
    Actor,
    AgentForecast,
    Scenario,
    ScenarioParseError,
    load_forecasts,
    load_scenarios,
    save_forecasts,
    save_scenarios,
)
from .pipeline.synth import SynthSpec, synth_corpus
from .pipeline.train import TrainConfig, TrainingDiverged, train

__version__ = "0.1.0"
