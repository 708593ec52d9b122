"""
SmoothBoost - gradient boosting with smooth transition regression trees.
Python library for differentiable tree ensembles and their analytical partial effects.
"""

from .model import (
    BoostEnsemble,
    Dataset,
    DegenerateDataError,
    InvalidArgumentError,
    Leaf,
    SmoothBoostError,
    SmoothTree,
    SplitNode,
    ensemble_predict,
    leaf_basis,
    tree_predict,
)
from .booster import FitReport, Hyperparameters, fit
from .gradients import PartialEffectRequest, effect_curve, ensemble_partial, partial_effect_table
from .simgen import Dgp, SimSpec, generate
from .evalkit import CvResult, benchmark_models, boost_model, kfold_cv
from .modelio import export_results, load_model, read_csv, save_model

__version__ = "1.0.0"

__all__ = [
    'BoostEnsemble',
    'Dataset',
    'DegenerateDataError',
    'InvalidArgumentError',
    'Leaf',
    'SmoothBoostError',
    'SmoothTree',
    'SplitNode',
    'ensemble_predict',
    'leaf_basis',
    'tree_predict',
    'FitReport',
    'Hyperparameters',
    'fit',
    'PartialEffectRequest',
    'effect_curve',
    'ensemble_partial',
    'partial_effect_table',
    'Dgp',
    'SimSpec',
    'generate',
    'CvResult',
    'benchmark_models',
    'boost_model',
    'kfold_cv',
    'export_results',
    'load_model',
    'read_csv',
    'save_model',
]
