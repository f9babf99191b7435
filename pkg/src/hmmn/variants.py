"""Model variants selectable for training, evaluation and gradient checks.

``hmmn`` and ``hmmn-no-answer`` run the multi-modal cell with and without the
answer choice in the retrieval query. ``e2emn-S`` / ``e2emn-V`` read one raw
modality with the baseline memory network, and ``spec:<name>`` reads any
ablation representation (``spec:V->S'``).
"""

from __future__ import annotations

from dataclasses import dataclass

from .ablation import RepresentationSpec, build_representation, parse_spec
from .encodings import EncodedInstance, ModelParams
from .model import Prediction, e2emn_forward, hmmn_forward

VARIANT_NAMES = ("hmmn", "hmmn-no-answer", "e2emn-S", "e2emn-V", "spec:<name>")


@dataclass(frozen=True)
class Variant:
    kind: str  # "hmmn" or "memory"
    answer_attention: bool = True
    spec: RepresentationSpec | None = None

    @property
    def name(self) -> str:
        if self.kind == "hmmn":
            return "hmmn" if self.answer_attention else "hmmn-no-answer"
        if self.spec.right is None and self.spec.left.transform == "id":
            return f"e2emn-{self.spec.left.modality}"
        return f"spec:{self.spec.name}"


def parse_variant(name: str | Variant) -> Variant:
    if isinstance(name, Variant):
        return name
    if name == "hmmn":
        return Variant("hmmn", True)
    if name == "hmmn-no-answer":
        return Variant("hmmn", False)
    if name in ("e2emn-S", "e2emn-V"):
        return Variant("memory", spec=parse_spec(name[-1]))
    if name.startswith("spec:"):
        return Variant("memory", spec=parse_spec(name[5:]))
    raise ValueError(f"unknown variant {name!r}; expected one of {', '.join(VARIANT_NAMES)}")


def predict(enc: EncodedInstance, params: ModelParams, variant="hmmn",
            keep_trace: bool = False) -> Prediction:
    v = parse_variant(variant)
    if v.kind == "hmmn":
        return hmmn_forward(enc, params, v.answer_attention, keep_trace)
    extra = {} if keep_trace else None
    M = build_representation(v.spec, enc, normalize_coattention=params.normalize_coattention,
                             trace=extra)
    pred = e2emn_forward(enc.q, M, enc.A, params.hops, keep_trace=keep_trace)
    if keep_trace:
        pred.trace.extra.update(extra)
    return pred

