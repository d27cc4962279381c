"""Synthetic benchmark, metrics, ablations, reports and the CLI."""
from .ablation import ablation_suite, run_suite
from .config import Config
from .metrics import BenchmarkSummary, PairEvaluation, fmr, inlier_ratio, registration_recall, rre_rte
from .pipeline import Variant, run_pipeline
from .synth import ScenePair, make_suite, synth_pair
