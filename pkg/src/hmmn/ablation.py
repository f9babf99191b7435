"""Baseline memory representations built from the attention primitives.

A single-stage representation transforms one modality: plain (``S``),
question-reweighted (``S'``), inter-modal (``Sbar``, subtitles attending to
frames) or intra-modal self attention (``Shat``). A two-stage representation
``X->Y`` lets one transformed modality attend to a transformed version of the
other. Any of them can serve as the memory of the single-memory baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import attention
from .encodings import EncodedInstance

TRANSFORMS = ("id", "prime", "bar", "hat")
_SUFFIX = {"id": "", "prime": "'", "bar": "bar", "hat": "hat"}
_PRETTY = {"id": "{}", "prime": "{}′", "bar": "{}̄", "hat": "{}̂"}


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class Term:
    modality: str  # "S" or "V"
    transform: str = "id"

    def __post_init__(self):
        if self.modality not in ("S", "V"):
            raise SpecError(f"unknown modality {self.modality!r}")
        if self.transform not in TRANSFORMS:
            raise SpecError(f"unknown transform {self.transform!r}")

    @property
    def name(self) -> str:
        return self.modality + _SUFFIX[self.transform]

    @property
    def pretty(self) -> str:
        return _PRETTY[self.transform].format(self.modality)


@dataclass(frozen=True)
class RepresentationSpec:
    left: Term
    right: Term | None = None

    def __post_init__(self):
        if self.right is not None and self.left.modality == self.right.modality:
            raise SpecError(f"{self.name}: a pair must cross modalities")

    @property
    def name(self) -> str:
        if self.right is None:
            return self.left.name
        return f"{self.left.name}->{self.right.name}"

    @property
    def pretty(self) -> str:
        if self.right is None:
            return self.left.pretty
        return f"{self.left.pretty}→{self.right.pretty}"

    @property
    def stage(self) -> str:
        return "single" if self.right is None else "pair"

    def __str__(self):
        return self.name


def parse_term(text: str) -> Term:
    text = text.strip()
    if not text or text[0] not in "SV":
        raise SpecError(f"cannot parse term {text!r}")
    rest = text[1:]
    for transform, suffix in _SUFFIX.items():
        if rest == suffix:
            return Term(text[0], transform)
    raise SpecError(f"cannot parse term {text!r}")


def parse_spec(text: str) -> RepresentationSpec:
    """Parse names such as ``"V"``, ``"S'"``, ``"Vbar"`` or ``"V->S'"``."""
    parts = text.split("->")
    if len(parts) == 1:
        return RepresentationSpec(parse_term(parts[0]))
    if len(parts) == 2:
        return RepresentationSpec(parse_term(parts[0]), parse_term(parts[1]))
    raise SpecError(f"cannot parse spec {text!r}")


_ORDER = ("id", "prime", "bar", "hat")


def enumerate_specs() -> list[RepresentationSpec]:
    """All 40 baseline representations in a fixed order.

    Eight single-stage rows (``V, S, V', S', Vbar, Sbar, Vhat, Shat``), then the
    32 two-stage cells row-major: for each video variant and subtitle variant,
    ``V*->S*`` followed by its mirror ``S*->V*``.
    """
    specs = []
    for t in _ORDER:
        specs.append(RepresentationSpec(Term("V", t)))
        specs.append(RepresentationSpec(Term("S", t)))
    for tv in _ORDER:
        for ts in _ORDER:
            v, s = Term("V", tv), Term("S", ts)
            specs.append(RepresentationSpec(v, s))
            specs.append(RepresentationSpec(s, v))
    return specs


def _base(term: Term, enc: EncodedInstance):
    if term.modality == "S":
        return enc.S, enc.V
    return enc.V, enc.S


def apply_term(term: Term, enc: EncodedInstance, query_scale: float = 1.0,
               normalize_coattention: bool = False, trace: dict | None = None):
    X, other = _base(term, enc)
    if term.transform == "id":
        return X
    if term.transform == "prime":
        rw = attention.query_to_context(query_scale * enc.q, X)
        if trace is not None:
            trace[f"alpha[{term.name}]"] = rw.weights
        return rw.memory
    if term.transform == "bar":
        if trace is not None:
            trace[f"beta[{term.name}]"] = attention.coattention(X, other, normalize_coattention)
        return attention.inter_modal(X, other, normalize_coattention)
    if trace is not None:
        trace[f"gamma[{term.name}]"] = attention.self_affinity(X)
    return attention.self_attention(X)


def build_representation(spec: RepresentationSpec, enc: EncodedInstance,
                         query_scale: float = 1.0, normalize_coattention: bool = False,
                         trace: dict | None = None):
    """Memory matrix for ``spec``; shaped like its left operand's modality.

    Primed terms are queried with ``query_scale * q``.
    """
    if isinstance(spec, str):
        spec = parse_spec(spec)
    left = apply_term(spec.left, enc, query_scale, normalize_coattention, trace)
    if spec.right is None:
        return left
    right = apply_term(spec.right, enc, query_scale, normalize_coattention, trace)
    if trace is not None:
        trace[f"beta[{spec.name}]"] = attention.coattention(left, right, normalize_coattention)
    return attention.inter_modal(left, right, normalize_coattention)
