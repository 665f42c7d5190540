"""greenbytes: node-level energy estimation from CPU telemetry.

Collects CPU metrics and cumulative energy counters (or simulates both),
trains from-scratch LSTM and gradient-boosted-tree regressors on the
resulting time series, evaluates master-trained models on worker nodes, and
serves predictions over HTTP.
"""

from .collector import (
    DEFAULT_FREQ_MHZ,
    SIM_START_MS,
    WORKLOAD_PROFILES,
    EnergyCoeffs,
    MpstatRow,
    RecordStore,
    SynthConfig,
    collect_from_capture,
    load_dataset,
    parse_energy_log,
    parse_mpstat_interval,
    read_energy_counter,
    sample_from_record,
    sample_to_json,
    save_dataset,
    simulate,
)
from .errors import (
    ConfigurationError,
    EmptyDatasetError,
    GreenBytesError,
    InsufficientDataError,
    NumericError,
    OrderingError,
    ParseError,
    SchemaError,
    ShapeError,
    UnsupportedVersionError,
    ValidationError,
)
from .evaluation import (
    EvalReport,
    evaluate_model,
    export_loss_history,
    export_series,
    mae,
    mse,
    r2,
    render_series_svg,
    transfer_eval,
)
from .gbt import GradientBoostedTrees, RegressionTree, fit_tree
from .lstm import LstmParams, LstmRegressor, backward, forward, init_params
from .model_io import (
    FORMAT_VERSION,
    EnergyModel,
    data_fingerprint,
    load_model,
    save_model,
)
from .pipeline import TrainResult, train_energy_model
from .preprocess import (
    MinMaxScaler,
    WindowedSet,
    clean,
    fit_scaler,
    make_windows,
    select_features,
    split_chronological,
)
from .rng import SplitMix64
from .service import PredictionServer, serve
from .types import (
    FEATURE_NAMES,
    Dataset,
    EnergyReading,
    FeatureVector,
    NodeRole,
    Sample,
    counter_delta,
    joules_to_kwh,
)

__version__ = "0.1.0"
