"""SAM-kNN streaming regression and residual-based anomaly detection."""

from .baselines import OnlineLinearRegressor, WindowKnnRegressor
from .core import DivergenceError, ErrorTracker, InputError, MemorySet, Sample, StateError, itte, record_residual
from .detection import AlarmRecord, DetectionScore, ThresholdConfig, VirtualSensorBank, score_scenario
from .harness import RunConfig, compare_methods, preprocess, run_experiment
from .knn import k_nearest, knn_predict
from .memory import clean_one, clean_set, compress_ltm
from .regressor import Memory, SamConfig, SamKnnRegressor
from .synth import AnomalySpec, ScenarioSpec, generate

__version__ = "0.1.0"

__all__ = [
    "AlarmRecord",
    "AnomalySpec",
    "DetectionScore",
    "DivergenceError",
    "ErrorTracker",
    "InputError",
    "Memory",
    "MemorySet",
    "OnlineLinearRegressor",
    "RunConfig",
    "SamConfig",
    "SamKnnRegressor",
    "Sample",
    "ScenarioSpec",
    "StateError",
    "ThresholdConfig",
    "VirtualSensorBank",
    "WindowKnnRegressor",
    "clean_one",
    "clean_set",
    "compare_methods",
    "compress_ltm",
    "generate",
    "itte",
    "k_nearest",
    "knn_predict",
    "preprocess",
    "record_residual",
    "run_experiment",
    "score_scenario",
]
