"""流水线模块：语料、合成数据、建图、模型、训练评估与消融"""

from .ablation import SWEEPS, TOGGLE_SETTINGS, run_ablation, sweep_cells
from .builder import add_vision_tokens, build_kg
from .corpus import ReportPair, load_corpus, read_pgm, save_corpus, write_pgm
from .model import ReportModel, build_vocab, load_model, save_model
from .synth import SynthResult, synth_corpus
from .trainer import TrainResult, evaluate, evaluate_model, load_kg, train, train_model

__all__ = [
    "ReportPair",
    "load_corpus",
    "save_corpus",
    "read_pgm",
    "write_pgm",
    "synth_corpus",
    "SynthResult",
    "build_kg",
    "add_vision_tokens",
    "ReportModel",
    "build_vocab",
    "save_model",
    "load_model",
    "train",
    "train_model",
    "evaluate",
    "evaluate_model",
    "load_kg",
    "TrainResult",
    "run_ablation",
    "sweep_cells",
    "SWEEPS",
    "TOGGLE_SETTINGS",
]
