"""Word error rate via Levenshtein distance over whitespace tokens."""

from __future__ import annotations


def edit_distance(a: list[str], b: list[str]) -> int:
    """Substitutions, insertions, and deletions all cost 1."""
    prev = list(range(len(b) + 1))
    for i, tok_a in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, tok_b in enumerate(b, 1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (tok_a != tok_b),
            )
        prev = cur
    return prev[len(b)]


def word_error_rate(reference: str, hypothesis: str) -> float:
    """WER = edit distance / reference length; empty reference gives 0 or 1."""
    ref = reference.split()
    hyp = hypothesis.split()
    if not ref:
        return 0.0 if not hyp else 1.0
    return edit_distance(ref, hyp) / len(ref)
