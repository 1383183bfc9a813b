"""Compact graph-convolutional segmentation of cultivated land from image series."""

from .errors import CropGcnError, DataError, FormatError, InputError, NumericError
from .graph import Connectivity, GridGraph, build_adjacency, grid_graph, max_eigenvalue, normalize
from .metrics import ConfusionCounts, EvalReport, Mode, accuracy, confusion, evaluate, f_score, mcc
from .model import DEFAULT_DIMS, GcnModel, backward, count_parameters, forward, load_model, predict_map, save_model
from .numerics import CsrMatrix, gemm, spmm, transpose_gemm, transpose_spmm
from .preprocess import PreprocConfig, SceneSeries, adaptive_max_pool, reassemble, split_patches, stack_series
from .resample import Interpolation, upsample
from .synth import SynthConfig, generate_synthetic
from .training import TrainConfig, TrainLog, adam_step, infer_scene, split_dataset, train

__version__ = "0.1.0"
