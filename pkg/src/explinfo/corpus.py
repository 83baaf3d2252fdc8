"""Explanation corpus ingestion, splitting, and explanan rendering.

A corpus is a JSON Lines file, one record per line, with fields
``id``, ``premise``, ``hypothesis``, ``label``, ``explanan``, ``kind``.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

LABELS = ("contradiction", "entailment", "neutral")
KINDS = ("rationale", "nle")

NLE_PROMPT_SUFFIX = "The label is {label} because"


class CorpusError(ValueError):
    """Base class for corpus ingestion failures."""


class ParseError(CorpusError):
    def __init__(self, path, line_no, reason):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.line_no = line_no


class UnknownLabelError(CorpusError):
    def __init__(self, path, line_no, label):
        super().__init__(f"{path}:{line_no}: unknown label {label!r}")
        self.line_no = line_no
        self.label = label


class DuplicateIdError(CorpusError):
    def __init__(self, path, line_no, record_id):
        super().__init__(f"{path}:{line_no}: duplicate id {record_id!r}")
        self.line_no = line_no
        self.record_id = record_id


@dataclass(frozen=True)
class ExplanationRecord:
    """One task instance with its explanan text.

    ``kind`` says whether the explanan is an extractive rationale or a
    free-text explanation.
    """

    id: str
    premise: str
    hypothesis: str
    label: str
    explanan: str
    kind: str

    def __post_init__(self):
        if not self.id:
            raise CorpusError("record id must be non-empty")
        if self.label not in LABELS:
            raise CorpusError(f"unknown label {self.label!r}")
        if self.kind not in KINDS:
            raise CorpusError(f"unknown explanation kind {self.kind!r}")
        if not self.premise.strip() or not self.hypothesis.strip():
            raise CorpusError(f"record {self.id}: premise and hypothesis must be non-empty")

    @property
    def label_index(self) -> int:
        return LABELS.index(self.label)


def canonical_input(record: ExplanationRecord) -> str:
    """The text input seen by downstream embedding: premise and hypothesis
    joined by a single space."""
    return f"{record.premise} {record.hypothesis}"


@dataclass
class DatasetSplit:
    train: list = field(default_factory=list)
    validation: list = field(default_factory=list)
    test: list = field(default_factory=list)
    seed: int = 0

    @property
    def sizes(self) -> tuple:
        return (len(self.train), len(self.validation), len(self.test))


def _record_from_obj(obj: dict, path, line_no, kind) -> ExplanationRecord:
    required = ("id", "premise", "hypothesis", "label", "explanan", "kind")
    missing = [k for k in required if k not in obj]
    if missing:
        raise ParseError(path, line_no, f"missing fields {missing}")
    if obj["label"] not in LABELS:
        raise UnknownLabelError(path, line_no, obj["label"])
    if kind is not None and obj["kind"] != kind:
        raise ParseError(path, line_no, f"expected kind {kind!r}, found {obj['kind']!r}")
    try:
        return ExplanationRecord(
            id=str(obj["id"]),
            premise=obj["premise"],
            hypothesis=obj["hypothesis"],
            label=obj["label"],
            explanan=obj["explanan"],
            kind=obj["kind"],
        )
    except CorpusError as exc:
        raise ParseError(path, line_no, str(exc)) from exc


def load_corpus(path, kind: str | None = None) -> list[ExplanationRecord]:
    """Read records from a JSON Lines file, in file order.

    ``kind``, when given, requires every record to carry that explanation
    kind. Ids must be unique within the file.
    """
    path = Path(path)
    records = []
    seen = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise ParseError(path, line_no, "line is not a JSON object")
            record = _record_from_obj(obj, path, line_no, kind)
            if record.id in seen:
                raise DuplicateIdError(path, line_no, record.id)
            seen.add(record.id)
            records.append(record)
    return records


def save_corpus(records, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for r in records:
            obj = {
                "id": r.id,
                "premise": r.premise,
                "hypothesis": r.hypothesis,
                "label": r.label,
                "explanan": r.explanan,
                "kind": r.kind,
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def split_dataset(records, ratios, seed: int) -> DatasetSplit:
    """Deterministic disjoint train/validation/test split.

    Validation and test sizes are ``floor(n * ratio)``; the remainder goes
    to train, so a 12000-record corpus at (2/3, 1/6, 1/6) yields exactly
    (8000, 2000, 2000).
    """
    if not records:
        raise CorpusError("cannot split an empty record list")
    if len(ratios) != 3:
        raise CorpusError("ratios must have exactly three entries")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"ratios must sum to 1, got {sum(ratios)}")
    n = len(records)
    n_val = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_val - n_test
    shuffled = list(records)
    random.Random(seed).shuffle(shuffled)
    return DatasetSplit(
        train=shuffled[:n_train],
        validation=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
        seed=seed,
    )


def write_split(split: DatasetSplit, out_dir, ratios=None) -> dict:
    """Emit the three split files plus a manifest recording seed and ratios."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", split.train), ("validation", split.validation), ("test", split.test)):
        save_corpus(part, out_dir / f"{name}.jsonl")
    manifest = {
        "seed": split.seed,
        "ratios": list(ratios) if ratios is not None else None,
        "sizes": {"train": len(split.train), "validation": len(split.validation), "test": len(split.test)},
    }
    (out_dir / "split_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest


def read_split(split_dir, kind: str | None = None) -> DatasetSplit:
    split_dir = Path(split_dir)
    manifest = json.loads((split_dir / "split_manifest.json").read_text(encoding="utf-8"))
    return DatasetSplit(
        train=load_corpus(split_dir / "train.jsonl", kind),
        validation=load_corpus(split_dir / "validation.jsonl", kind),
        test=load_corpus(split_dir / "test.jsonl", kind),
        seed=manifest["seed"],
    )


def render_rationale(tokens, keep_mask) -> str:
    """Render an extractive rationale over whitespace tokens.

    Kept tokens appear verbatim; every dropped token is replaced by a run
    of spaces of the same character length, so the output has exactly the
    length of the single-space join of ``tokens``.
    """
    if len(tokens) != len(keep_mask):
        raise CorpusError(f"tokens ({len(tokens)}) and mask ({len(keep_mask)}) differ in length")
    return " ".join(tok if keep else " " * len(tok) for tok, keep in zip(tokens, keep_mask))


def build_nle_prompt(record: ExplanationRecord) -> str:
    """Prompt for generating a free-text explanation of a labeled pair."""
    if not record.premise or not record.hypothesis or not record.label:
        raise CorpusError("record fields must be populated")
    suffix = NLE_PROMPT_SUFFIX.format(label=record.label)
    return f"{record.premise} {record.hypothesis} {suffix}"
