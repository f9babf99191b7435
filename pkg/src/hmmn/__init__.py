"""Holistic multi-modal memory network for multiple-choice QA, in numpy."""

from .ablation import RepresentationSpec, build_representation, enumerate_specs, parse_spec
from .attention import inter_modal, query_to_context, self_attention, summarize
from .data import Dataset, SyntheticConfig, generate_synthetic, split
from .encodings import (
    EncodedInstance,
    ModelParams,
    RawInstance,
    Vocabulary,
    encode_frame,
    encode_instance,
    encode_sentence,
)
from .gradients import Gradients, backward, finite_diff_grad, loss
from .model import AttentionTrace, Prediction, e2emn_forward, hmmn_forward, hmmn_hop
from .numerics import softmax, weighted_sum
from .training import Metrics, TrainConfig, evaluate, train
from .variants import predict

__version__ = "0.1.0"
