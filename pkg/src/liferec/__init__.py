"""Lifelong learning for recurrent networks: gradient episodic memory,
function-preserving width expansion, and the Copy / Recall / SSMNIST
curriculum benchmark, on a small numpy autodiff core."""

__version__ = "0.1.0"

from .errors import CheckpointError, ConfigError, ContractError, DataError, ShapeError, StrokeParseError
from .numcore import AdamState, Tape, adam_step, backward, condition_number, singular_values
from .model import LstmParams, SequenceBatch, forward_sequence, init_params, loss_and_grads, sequence_accuracy
from .gem import EpisodicMemory, GemConfig, gem_project, solve_nnqp
from .expand import ExpansionReport, NoiseSpec, WidenPlan, make_mapping, widen_lstm, zero_sum_noise
from .tasks import StrokeCorpus, gen_copy_batch, gen_recall_batch, gen_ssmnist_batch, load_strokes, make_batch, synth_strokes
from .harness import BenchmarkConfig, CurriculumRunner, RunLog, emit_reports, evaluate_all, run_curriculum
from .checkpoint import load_checkpoint, save_checkpoint
from .config import PRESETS, load_config
