import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from explinfo import corpus


def _write_jsonl(path, objs):
    with path.open("w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj) + "\n")


def _obj(i, **over):
    obj = {
        "id": f"r{i}",
        "premise": "A man sits.",
        "hypothesis": "A person rests.",
        "label": "entailment",
        "explanan": "sitting is resting",
        "kind": "nle",
    }
    obj.update(over)
    return obj


def test_load_corpus_in_order(tmp_path):
    path = tmp_path / "c.jsonl"
    _write_jsonl(path, [_obj(0), _obj(1), _obj(2)])
    records = corpus.load_corpus(path)
    assert [r.id for r in records] == ["r0", "r1", "r2"]


def test_load_corpus_skips_blank_lines(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps(_obj(0)) + "\n\n" + json.dumps(_obj(1)) + "\n", encoding="utf-8")
    assert len(corpus.load_corpus(path)) == 2


def test_unknown_label_names_line(tmp_path):
    path = tmp_path / "c.jsonl"
    _write_jsonl(path, [_obj(0), _obj(1, label="maybe")])
    with pytest.raises(corpus.UnknownLabelError) as err:
        corpus.load_corpus(path)
    assert err.value.line_no == 2
    assert "maybe" in str(err.value)


def test_duplicate_id_error(tmp_path):
    path = tmp_path / "c.jsonl"
    _write_jsonl(path, [_obj(0), _obj(0)])
    with pytest.raises(corpus.DuplicateIdError) as err:
        corpus.load_corpus(path)
    assert err.value.record_id == "r0"


def test_missing_field_is_a_parse_error_with_line(tmp_path):
    path = tmp_path / "c.jsonl"
    obj = _obj(0)
    del obj["premise"]
    _write_jsonl(path, [obj])
    with pytest.raises(corpus.ParseError) as err:
        corpus.load_corpus(path)
    assert err.value.line_no == 1
    assert "premise" in str(err.value)


def test_invalid_json_is_a_parse_error(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text("{not json\n", encoding="utf-8")
    with pytest.raises(corpus.ParseError):
        corpus.load_corpus(path)


def test_kind_filter_rejects_other_kinds(tmp_path):
    path = tmp_path / "c.jsonl"
    _write_jsonl(path, [_obj(0, kind="rationale")])
    with pytest.raises(corpus.ParseError):
        corpus.load_corpus(path, kind="nle")


def test_record_validation():
    with pytest.raises(corpus.CorpusError):
        corpus.ExplanationRecord(id="", premise="p", hypothesis="h", label="neutral", explanan="e", kind="nle")
    with pytest.raises(corpus.CorpusError):
        corpus.ExplanationRecord(id="a", premise=" ", hypothesis="h", label="neutral", explanan="e", kind="nle")
    with pytest.raises(corpus.CorpusError):
        corpus.ExplanationRecord(id="a", premise="p", hypothesis="h", label="neutral", explanan="e", kind="extractive")


def test_label_index_follows_label_tuple():
    for i, label in enumerate(corpus.LABELS):
        r = corpus.ExplanationRecord(id="a", premise="p", hypothesis="h", label=label, explanan="e", kind="nle")
        assert r.label_index == i


def test_canonical_input_single_space():
    r = corpus.ExplanationRecord(id="a", premise="A man sits.", hypothesis="A person rests.", label="neutral", explanan="e", kind="nle")
    assert corpus.canonical_input(r) == "A man sits. A person rests."


def _records(n):
    return [
        corpus.ExplanationRecord(
            id=f"r{i}", premise="p q", hypothesis="h", label=corpus.LABELS[i % 3], explanan="x", kind="nle"
        )
        for i in range(n)
    ]


def test_split_sizes_12000():
    split = corpus.split_dataset(_records(12000), (2 / 3, 1 / 6, 1 / 6), seed=7)
    assert split.sizes == (8000, 2000, 2000)


def test_split_sizes_10():
    split = corpus.split_dataset(_records(10), (0.8, 0.1, 0.1), seed=0)
    assert split.sizes == (8, 1, 1)


def test_split_deterministic():
    records = _records(100)
    a = corpus.split_dataset(records, (0.5, 0.25, 0.25), seed=3)
    b = corpus.split_dataset(records, (0.5, 0.25, 0.25), seed=3)
    assert [r.id for r in a.train] == [r.id for r in b.train]
    assert [r.id for r in a.test] == [r.id for r in b.test]


def test_split_rejects_bad_ratios():
    with pytest.raises(corpus.CorpusError):
        corpus.split_dataset(_records(10), (0.5, 0.2, 0.2), seed=0)
    with pytest.raises(corpus.CorpusError):
        corpus.split_dataset([], (0.8, 0.1, 0.1), seed=0)
    with pytest.raises(corpus.CorpusError):
        corpus.split_dataset(_records(10), (0.5, 0.5), seed=0)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(min_value=1, max_value=60), seed=st.integers(min_value=0, max_value=2**31))
def test_split_is_a_partition(n, seed):
    records = _records(n)
    split = corpus.split_dataset(records, (0.6, 0.2, 0.2), seed=seed)
    ids = [r.id for part in (split.train, split.validation, split.test) for r in part]
    assert sorted(ids) == sorted(r.id for r in records)
    assert len(set(ids)) == len(ids)


def test_save_load_roundtrip(tmp_path):
    records = _records(7)
    path = tmp_path / "out.jsonl"
    corpus.save_corpus(records, path)
    assert corpus.load_corpus(path) == records


def test_write_read_split_roundtrip(tmp_path):
    split = corpus.split_dataset(_records(20), (0.5, 0.25, 0.25), seed=11)
    manifest = corpus.write_split(split, tmp_path / "splits", ratios=(0.5, 0.25, 0.25))
    assert manifest["sizes"] == {"train": 10, "validation": 5, "test": 5}
    back = corpus.read_split(tmp_path / "splits")
    assert back.seed == 11
    assert [r.id for r in back.train] == [r.id for r in split.train]


def test_render_rationale_example():
    assert corpus.render_rationale(["The", "cat", "runs"], [False, True, False]) == "    cat     "


def test_render_rationale_identity_and_blank():
    tokens = ["a", "bb", "ccc"]
    assert corpus.render_rationale(tokens, [True] * 3) == "a bb ccc"
    assert corpus.render_rationale(tokens, [False] * 3) == " " * len("a bb ccc")


def test_render_rationale_length_mismatch():
    with pytest.raises(corpus.CorpusError):
        corpus.render_rationale(["a"], [True, False])


@settings(max_examples=100, deadline=None)
@given(
    tokens=st.lists(st.text(alphabet="abcdef", min_size=1, max_size=5), min_size=1, max_size=8),
    data=st.data(),
)
def test_render_rationale_preserves_length_and_positions(tokens, data):
    mask = data.draw(st.lists(st.booleans(), min_size=len(tokens), max_size=len(tokens)))
    joined = " ".join(tokens)
    rendered = corpus.render_rationale(tokens, mask)
    assert len(rendered) == len(joined)
    pos = 0
    for tok, keep in zip(tokens, mask):
        segment = rendered[pos : pos + len(tok)]
        assert segment == (tok if keep else " " * len(tok))
        pos += len(tok) + 1


def test_nle_prompt_example():
    r = corpus.ExplanationRecord(
        id="a", premise="A man sits.", hypothesis="A person rests.", label="entailment", explanan="e", kind="nle"
    )
    assert corpus.build_nle_prompt(r) == "A man sits. A person rests. The label is entailment because"


def test_nle_prompt_label_verbatim():
    r = corpus.ExplanationRecord(id="a", premise="p", hypothesis="h", label="neutral", explanan="e", kind="nle")
    assert "The label is neutral because" in corpus.build_nle_prompt(r)
