"""Exemplar-free class-incremental learning with condensed prototypes.

YONO replays one attentional mean-shift prototype per seen class; YONO+
additionally replays embeddings synthesized around each prototype on the
unit hypersphere.
"""
from .config import RunConfig
from .datasets import SyntheticBlobSpec, TaskStream, generate_blobs, load_csv, split_stream
from .metrics import AccuracyMatrix, average_accuracy, average_forgetting
from .prototypes import Prototype, PrototypeMemory, condense_class
from .trainer import JOINT_ORACLE, NAIVE, YONO, YONO_PLUS, RunRecord, TrainerConfig, run_stream, train_task

__version__ = "0.1.0"
