"""WER/CER scoring via minimal edit-distance alignment.

Alignment uses unit costs with a deterministic tie-break (substitution
preferred over an insert+delete pair, then deletion).  Reference-side
filtering approximates sclite's handling of noise markers and word
fragments: matching tokens are removed from the reference before alignment,
and both raw and filtered numbers are always reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class UttScore:
    utt_id: str
    substitutions: int
    insertions: int
    deletions: int
    ref_len: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions


@dataclass
class ScoreReport:
    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0
    ref_tokens: int = 0
    per_utt: list[UttScore] = field(default_factory=list)

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer(self) -> float | None:
        """Percentage, or None when the reference is empty."""
        if self.ref_tokens == 0:
            return None
        return 100.0 * self.errors / self.ref_tokens

    def add(self, utt: UttScore) -> None:
        self.per_utt.append(utt)
        self.substitutions += utt.substitutions
        self.insertions += utt.insertions
        self.deletions += utt.deletions
        self.ref_tokens += utt.ref_len


def edit_align(ref, hyp):
    """Minimal-cost alignment of two token sequences.

    Returns ((S, I, D), alignment) where alignment is a list of
    (op, ref_token, hyp_token) with op in {ok, sub, ins, del} and None for
    the missing side of insertions/deletions.
    """
    ref, hyp = list(ref), list(hyp)
    n, m = len(ref), len(hyp)
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i
    for j in range(1, m + 1):
        cost[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = cost[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1])
            dele = cost[i - 1][j] + 1
            ins = cost[i][j - 1] + 1
            cost[i][j] = min(sub, dele, ins)

    # backtrace; tie order: substitution/match, then deletion, then insertion
    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and cost[i][j] == cost[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            op = "ok" if ref[i - 1] == hyp[j - 1] else "sub"
            ops.append((op, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and cost[i][j] == cost[i - 1][j] + 1:
            ops.append(("del", ref[i - 1], None))
            i -= 1
        else:
            ops.append(("ins", None, hyp[j - 1]))
            j -= 1
    ops.reverse()
    s = sum(1 for op, *_ in ops if op == "sub")
    ins_n = sum(1 for op, *_ in ops if op == "ins")
    dele_n = sum(1 for op, *_ in ops if op == "del")
    return (s, ins_n, dele_n), ops


def _is_fragment(token: str) -> bool:
    return len(token) > 1 and (token.startswith("-") or token.endswith("-"))


def filter_reference(tokens, ignore_tokens=(), drop_fragments: bool = False):
    """Drop ignore-set tokens (and hyphen-marked fragments) from a reference."""
    ignore = set(ignore_tokens)
    return [
        t
        for t in tokens
        if t not in ignore and not (drop_fragments and _is_fragment(t))
    ]


def score_utterance(utt_id, ref_tokens, hyp_tokens) -> UttScore:
    (s, i, d), _ = edit_align(ref_tokens, hyp_tokens)
    return UttScore(utt_id, s, i, d, len(ref_tokens))


def score_corpus(refs: dict, hyps: dict, tokenizer=str.split) -> ScoreReport:
    """Score hypotheses against references keyed by utterance id.

    ``tokenizer`` splits a transcript into tokens; pass ``list`` for
    character error rates.  Missing hypotheses count as empty.
    """
    report = ScoreReport()
    for utt_id in sorted(refs):
        ref = tokenizer(refs[utt_id])
        hyp = tokenizer(hyps.get(utt_id, ""))
        report.add(score_utterance(utt_id, ref, hyp))
    return report


def filtered_score(
    refs: dict,
    hyps: dict,
    ignore_tokens=(),
    drop_fragments: bool = False,
) -> tuple[ScoreReport, ScoreReport]:
    """(raw, filtered) word-level reports; filtering touches references only."""
    raw = score_corpus(refs, hyps)
    filtered_refs = {
        utt_id: " ".join(filter_reference(text.split(), ignore_tokens, drop_fragments))
        for utt_id, text in refs.items()
    }
    filtered = score_corpus(filtered_refs, hyps)
    return raw, filtered


def cer(refs: dict, hyps: dict) -> ScoreReport:
    """Character error rate over the same machinery (tokens = characters)."""
    return score_corpus(refs, hyps, tokenizer=list)


def format_report(report: ScoreReport, label: str = "WER") -> str:
    wer = report.wer
    rate = "undefined (empty reference)" if wer is None else f"{wer:.2f}%"
    return (
        f"{label} {rate}  "
        f"[S={report.substitutions} I={report.insertions} D={report.deletions} "
        f"N={report.ref_tokens}]"
    )
