"""Lexical-semantic silver labels: type overlap, edit distance ratio, cosine.

These are reference scores for interpreting the information scores, not
ground truth.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field

import numpy as np


class SilverLabelError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace tokens with leading/trailing punctuation stripped.

    Tokens that are entirely punctuation vanish.
    """
    out = []
    for raw in text.split():
        tok = raw.lower().strip(string.punctuation)
        if tok:
            out.append(tok)
    return out


def type_overlap_ratio(input_text: str, explanan: str) -> float:
    """Portion of the input's word types that also occur in the explanan."""
    input_types = set(tokenize(input_text))
    if not input_types:
        raise SilverLabelError("input text has no word types")
    explanan_types = set(tokenize(explanan))
    return len(input_types & explanan_types) / len(input_types)


def levenshtein(a, b) -> int:
    """Unit-cost Levenshtein distance between two sequences.

    Works on token lists as well as plain strings. Two rolling rows keep
    memory linear in len(b).
    """
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ai in enumerate(a, start=1):
        cur = [i]
        for j, bj in enumerate(b, start=1):
            cost = 0 if ai == bj else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


def edit_distance_ratio(input_text: str, explanan: str, level: str = "token") -> float:
    """Edit distance from the input to the explanan, normalized by input length.

    ``level="token"`` (default) measures in unit-cost token edits over the
    tokenized texts and divides by the input token count. ``level="char"``
    is a sensitivity variant over raw characters, divided by the input
    character count. Values above 1 are possible when the explanan is
    longer than the input.
    """
    if level == "token":
        src = tokenize(input_text)
        dst = tokenize(explanan)
    elif level == "char":
        src = input_text
        dst = explanan
    else:
        raise SilverLabelError(f"unknown edit distance level {level!r}")
    if not src:
        raise SilverLabelError("input text is empty after tokenization")
    return levenshtein(src, dst) / len(src)


def cosine_similarity(x_vec, e_vec) -> float:
    """Cosine of the angle between two embedding vectors.

    Sums run through ``math.fsum`` so the result is the correctly rounded
    value of the exact-real formula, independent of element order.
    """
    x = [float(v) for v in np.asarray(x_vec, dtype=np.float64)]
    e = [float(v) for v in np.asarray(e_vec, dtype=np.float64)]
    if len(x) != len(e):
        raise SilverLabelError(f"dimension mismatch: {len(x)} vs {len(e)}")
    nx = math.sqrt(math.fsum(v * v for v in x))
    ne = math.sqrt(math.fsum(v * v for v in e))
    if nx == 0.0 or ne == 0.0:
        raise SilverLabelError("cosine similarity is undefined for a zero vector")
    return math.fsum(a * b for a, b in zip(x, e)) / (nx * ne)


@dataclass
class SilverLabelSet:
    """Per-instance silver labels; LLM-judged items are filled in separately."""

    id: str
    type_overlap_ratio: float
    edit_distance_ratio: float
    cosine_similarity: float
    gpt_scores: dict = field(default_factory=dict)


def compute_silver_labels(record_id, input_text, explanan, x_vec, e_vec) -> SilverLabelSet:
    return SilverLabelSet(
        id=record_id,
        type_overlap_ratio=type_overlap_ratio(input_text, explanan),
        edit_distance_ratio=edit_distance_ratio(input_text, explanan),
        cosine_similarity=cosine_similarity(x_vec, e_vec),
    )
