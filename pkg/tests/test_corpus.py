import json
import logging

import pytest

from pxre.corpus import (
    ConlluError,
    ParsedSentence,
    build_instances,
    extract_triples,
    ingest_conllu,
    lemmatize_relation,
    load_lexicon,
    pair_records,
    select_top_k,
    split_emit,
    with_relation_keys,
)
from pxre.corpus.build import BuildError, split_sizes
from pxre.corpus.extract import RelationTriple
from pxre.data import load_jsonl, validate

# hand-derived oracle for tests/fixtures/parsed.conllu (0-based spans)
EXPECTED_TRIPLES = [
    ("s1", (0, 2), ("founded",), (3, 4)),
    ("s3", (0, 2), ("worked", "in"), (4, 5)),
    ("s4", (0, 2), ("founded",), (3, 4)),
    ("s4", (0, 2), ("founded", "in"), (5, 6)),
    ("s6", (0, 1), ("gave",), (2, 3)),
    ("s6", (0, 1), ("gave",), (3, 5)),
    ("s7", (0, 2), ("acquired", "by"), (5, 6)),
    ("s8", (0, 1), ("is",), (2, 3)),
    ("s9", (0, 1), ("is",), (2, 4)),
    ("s10", (0, 1), ("published",), (2, 3)),
    ("s10", (5, 6), ("praised",), (7, 8)),
]


@pytest.fixture
def sentences(fixtures_dir):
    return ingest_conllu(fixtures_dir / "parsed.conllu")


def test_fixture_loads_ten_sentences(sentences):
    assert len(sentences) == 10
    assert [s.sent_id for s in sentences] == [f"s{i}" for i in range(1, 11)]


def test_multiword_and_empty_nodes_skipped(sentences):
    dog = sentences[1]
    assert dog.tokens == ("The", "dog", "barked", ".")
    birds = sentences[4]
    assert birds.tokens == ("Birds", "sing", ".")


def test_two_token_sentence_root():
    sent = ParsedSentence(
        sent_id="mini",
        tokens=("Dogs", "bark"),
        lemmas=("dog", "bark"),
        upos=("NOUN", "VERB"),
        heads=(2, 0),
        deprels=("nsubj", "root"),
    )
    assert sent.heads[1] == 0  # bark is the root
    assert extract_triples(sent) == []  # no object


def test_cycle_detected(tmp_path):
    bad = tmp_path / "cycle.conllu"
    bad.write_text(
        "# sent_id = loop\n"
        "1\ta\ta\tNOUN\t_\t_\t2\tnsubj\t_\t_\n"
        "2\tb\tb\tVERB\t_\t_\t1\tconj\t_\t_\n\n",
        encoding="utf-8",
    )
    with pytest.raises(ConlluError, match="loop"):
        ingest_conllu(bad)


def test_multi_root_detected(tmp_path):
    bad = tmp_path / "roots.conllu"
    bad.write_text(
        "1\ta\ta\tNOUN\t_\t_\t0\troot\t_\t_\n"
        "2\tb\tb\tVERB\t_\t_\t0\troot\t_\t_\n\n",
        encoding="utf-8",
    )
    with pytest.raises(ConlluError, match="exactly one root"):
        ingest_conllu(bad)


def test_bad_column_count_carries_line_number(tmp_path):
    bad = tmp_path / "cols.conllu"
    bad.write_text("1\ta\ta\n", encoding="utf-8")
    with pytest.raises(ConlluError, match=":1"):
        ingest_conllu(bad)


def test_extract_matches_hand_oracle(sentences):
    triples = []
    for sent in sentences:
        triples.extend(extract_triples(sent))
    got = [(t.sent_id, t.subj_span, t.relation_surface, t.obj_span) for t in triples]
    assert got == EXPECTED_TRIPLES


def test_no_verb_no_triples(sentences):
    assert extract_triples(sentences[1]) == []  # The dog barked .
    assert extract_triples(sentences[4]) == []  # Birds sing .


def test_lemmatize():
    assert lemmatize_relation(["founded"], {"founded": "found"}) == "found"
    assert lemmatize_relation(["Founded", "In"], {"founded": "found"}) == "found in"
    assert lemmatize_relation(["Founded", "In"], {}) == "founded in"


def test_lexicon_loader(fixtures_dir):
    lex = load_lexicon(fixtures_dir / "lexicon.tsv")
    assert lex["founded"] == "found"
    assert lex["is"] == "be"


def _keyed(keys):
    return [
        RelationTriple(f"s{i}", (0, 1), (k,), (1, 2), relation_key=k)
        for i, k in enumerate(keys)
    ]


def test_select_top_k_counts():
    triples = _keyed(["a"] * 5 + ["b"] * 3 + ["c"])
    kept, space = select_top_k(triples, 2)
    assert space.labels == ("a", "b")
    assert len(kept) == 8


def test_select_top_k_tie_lexicographic():
    triples = _keyed(["b", "a", "b", "a"])
    kept, space = select_top_k(triples, 1)
    assert space.labels == ("a",)
    assert len(kept) == 2


def test_select_top_k_fewer_than_k_warns(caplog):
    with caplog.at_level(logging.WARNING, logger="pxre"):
        kept, space = select_top_k(_keyed(["a", "b"]), 5)
    assert space.labels == ("a", "b")
    assert any("keeping all" in r.message for r in caplog.records)


def test_select_top_k_requires_keys():
    bare = [RelationTriple("s", (0, 1), ("x",), (1, 2))]
    with pytest.raises(ValueError, match="relation keys"):
        select_top_k(bare, 1)


@pytest.fixture
def records(sentences, fixtures_dir):
    target = (fixtures_dir / "target_zh.txt").read_text(encoding="utf-8").splitlines()
    return pair_records(sentences, target)


def test_pair_records_alignment_mismatch(sentences):
    with pytest.raises(BuildError, match="alignment mismatch"):
        pair_records(sentences, ["only one line"])


def test_build_instances_locates_shared_entities(records, sentences, fixtures_dir):
    lexicon = load_lexicon(fixtures_dir / "lexicon.tsv")
    triples = with_relation_keys(
        [t for s in sentences for t in extract_triples(s)], lexicon
    )
    instances, stats = build_instances(records, triples)
    assert stats["n_instances"] == len(EXPECTED_TRIPLES)
    by_id = {i.id: i for i in instances}
    # s4 first triple: both "Steve Jobs" and "Apple" occur verbatim in the target
    located = by_id["s4-0"]
    assert not located.is_label_only
    assert located.tokens[located.subj_span[0] : located.subj_span[1]] == ("Steve", "Jobs")
    assert located.tokens[located.obj_span[0] : located.obj_span[1]] == ("Apple",)
    assert located.label == "found"
    # s1: subject "Steve Jobs" absent from the target sentence
    assert by_id["s1-0"].is_label_only
    assert stats["n_label_only"] >= 1


def test_build_instances_missing_alignment(records):
    orphan = [RelationTriple("s99", (0, 1), ("x",), (1, 2), relation_key="x")]
    with pytest.raises(BuildError, match="s99"):
        build_instances(records, orphan)


def test_build_instances_empty():
    instances, stats = build_instances([], [])
    assert instances == [] and stats["n_instances"] == 0


def test_split_sizes_paper_ratios():
    assert split_sizes(1000, (0.9424, 0.0225, 0.0351)) == (943, 22, 35)


def test_split_sizes_all_train():
    assert split_sizes(17, (1.0, 0.0, 0.0)) == (17, 0, 0)


def test_split_sizes_bad_ratios():
    with pytest.raises(BuildError, match="sum to 1"):
        split_sizes(10, (0.5, 0.2, 0.2))


def _pipeline(outdir, fixtures_dir, seed=1):
    sentences = ingest_conllu(fixtures_dir / "parsed.conllu")
    target = (fixtures_dir / "target_zh.txt").read_text(encoding="utf-8").splitlines()
    records = pair_records(sentences, target)
    lexicon = load_lexicon(fixtures_dir / "lexicon.tsv")
    triples = with_relation_keys(
        [t for s in sentences for t in extract_triples(s)], lexicon
    )
    kept, space = select_top_k(triples, 2)
    instances, stats = build_instances(records, kept)
    return split_emit(
        instances, space, (0.6, 0.2, 0.2), seed, outdir, extra_report={"k": 2, **stats}
    )


def test_pipeline_deterministic_byte_identical(tmp_path, fixtures_dir):
    report_a = _pipeline(tmp_path / "a", fixtures_dir)
    report_b = _pipeline(tmp_path / "b", fixtures_dir)
    assert report_a == report_b
    for name in ("train.jsonl", "dev.jsonl", "test.jsonl", "build_report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_emitted_instances_validate(tmp_path, fixtures_dir):
    report = _pipeline(tmp_path / "out", fixtures_dir)
    total = 0
    for split in ("train", "dev", "test"):
        ds = load_jsonl(tmp_path / "out" / f"{split}.jsonl")
        assert validate(ds) == []
        total += len(ds)
    assert total == report["n_instances"]
    # conservation: top-2 keys are "be"(2) and "found"(2) after the tie rule
    assert report["labels"] == ["be", "found"]
    assert total == 4
