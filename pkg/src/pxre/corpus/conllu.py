"""CoNLL-U reader for dependency-parsed sentences.

Only plain token lines are kept: multiword-token ranges (``1-2``) and empty
nodes (``1.1``) are skipped. ``# sent_id = ...`` comments become sentence
ids; sentences without one get ``s<ordinal>``. Each sentence must form a
single-rooted tree.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

N_COLUMNS = 10


class ConlluError(ValueError):
    pass


@dataclass(frozen=True)
class ParsedSentence:
    sent_id: str
    tokens: tuple[str, ...]
    lemmas: tuple[str, ...]
    upos: tuple[str, ...]
    heads: tuple[int, ...]  # 1-based parent index per token; 0 = root
    deprels: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def children(self) -> dict[int, list[int]]:
        """0-based child lists keyed by 0-based parent index."""
        out: dict[int, list[int]] = {i: [] for i in range(len(self.tokens))}
        for i, h in enumerate(self.heads):
            if h > 0:
                out[h - 1].append(i)
        return out

    def subtree(self, idx: int) -> set[int]:
        """0-based indices of the full subtree rooted at idx."""
        children = self.children()
        out: set[int] = set()
        stack = [idx]
        while stack:
            node = stack.pop()
            if node in out:
                continue
            out.add(node)
            stack.extend(children[node])
        return out


def _validate_tree(sent: ParsedSentence) -> None:
    n = len(sent.tokens)
    roots = [i for i, h in enumerate(sent.heads) if h == 0]
    if len(roots) != 1:
        raise ConlluError(
            f"sentence {sent.sent_id!r}: expected exactly one root, found {len(roots)}"
        )
    for i, h in enumerate(sent.heads):
        if not (0 <= h <= n):
            raise ConlluError(
                f"sentence {sent.sent_id!r}: head index {h} out of range for {n} tokens"
            )
    for start in range(n):
        seen = set()
        node = start
        while sent.heads[node] != 0:
            if node in seen:
                raise ConlluError(f"sentence {sent.sent_id!r}: head cycle at token {node + 1}")
            seen.add(node)
            node = sent.heads[node] - 1


def ingest_conllu(path) -> list[ParsedSentence]:
    path = Path(path)
    sentences: list[ParsedSentence] = []
    sent_id: str | None = None
    rows: list[tuple[str, str, str, int, str]] = []

    def flush() -> None:
        nonlocal sent_id, rows
        if rows:
            sent = ParsedSentence(
                sent_id=sent_id or f"s{len(sentences) + 1}",
                tokens=tuple(r[0] for r in rows),
                lemmas=tuple(r[1] for r in rows),
                upos=tuple(r[2] for r in rows),
                heads=tuple(r[3] for r in rows),
                deprels=tuple(r[4] for r in rows),
            )
            _validate_tree(sent)
            sentences.append(sent)
        sent_id = None
        rows = []

    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                flush()
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("sent_id"):
                    _, _, value = body.partition("=")
                    sent_id = value.strip()
                continue
            cols = line.split("\t")
            if len(cols) != N_COLUMNS:
                raise ConlluError(
                    f"{path}:{lineno}: expected {N_COLUMNS} tab-separated columns, "
                    f"got {len(cols)}"
                )
            tok_id = cols[0]
            if "-" in tok_id or "." in tok_id:  # multiword token / empty node
                continue
            try:
                idx = int(tok_id)
                head = int(cols[6])
            except ValueError as exc:
                raise ConlluError(f"{path}:{lineno}: non-integer ID or HEAD field") from exc
            if idx != len(rows) + 1:
                raise ConlluError(
                    f"{path}:{lineno}: token ids must be consecutive from 1, got {idx}"
                )
            rows.append((cols[1], cols[2], cols[3], head, cols[7]))
    flush()
    return sentences
