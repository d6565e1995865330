from .build import (
    ParallelRecord,
    build_instances,
    load_lexicon,
    pair_records,
    split_emit,
)
from .conllu import ConlluError, ParsedSentence, ingest_conllu
from .extract import (
    RelationTriple,
    extract_triples,
    lemmatize_relation,
    select_top_k,
    with_relation_keys,
)

__all__ = [
    "ConlluError",
    "ParsedSentence",
    "ingest_conllu",
    "RelationTriple",
    "extract_triples",
    "lemmatize_relation",
    "select_top_k",
    "with_relation_keys",
    "ParallelRecord",
    "pair_records",
    "build_instances",
    "split_emit",
    "load_lexicon",
]
