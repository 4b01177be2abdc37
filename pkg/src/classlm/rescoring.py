"""N-best list rescoring with interpolated language model scores.

Each hypothesis carries an acoustic log-probability and a back-off language
model log-probability from the first decoding pass (natural logarithms).
The network contributes log P_nn, and the combined language model score is

    (1 - lambda) * s_bo * log P_bo  +  lambda * s_nn * log P_nn

The total hypothesis score adds the acoustic term; hypotheses are reranked
per utterance by total score, descending, with ties keeping the original
order.  Interpolation weights can be tuned on a reference set by grid
search over (lambda, s_nn) with s_bo fixed to the back-off model's scale.
"""

from __future__ import annotations

from dataclasses import dataclass

from .scoring import score_sentences

__all__ = [
    "InterpolationParams",
    "NBestHypothesis",
    "edit_distance",
    "optimize_interpolation",
    "read_nbest_file",
    "read_reference_file",
    "rescore_nbest",
    "score_hypotheses",
]


@dataclass(frozen=True)
class InterpolationParams:
    lam: float
    s_bo: float = 1.0
    s_nn: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        if self.s_bo <= 0 or self.s_nn <= 0:
            raise ValueError("scale factors must be positive")

    def combine(self, log_p_bo, log_p_nn):
        return (1.0 - self.lam) * self.s_bo * log_p_bo + self.lam * self.s_nn * log_p_nn


@dataclass(frozen=True)
class NBestHypothesis:
    utterance_id: str
    acoustic: float  # acoustic log-probability (natural log, possibly scaled)
    backoff: float   # back-off LM log-probability (natural log)
    tokens: tuple

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("hypothesis has no tokens")


@dataclass(frozen=True)
class RescoredHypothesis:
    hypothesis: NBestHypothesis
    log_p_nn: float
    lm_score: float
    total: float


def read_nbest_file(path):
    """Parse ``utt_id acoustic backoff w1 ... wN`` lines, grouped by utterance.

    Grouping does not require contiguous lines; within an utterance the
    original line order is kept (it defines the first-pass ranking).
    """
    by_utterance = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 4:
                raise ValueError(
                    f"{path}: line {line_no}: expected 'utt_id acoustic backoff words...'"
                )
            try:
                acoustic = float(parts[1])
                backoff = float(parts[2])
            except ValueError:
                raise ValueError(f"{path}: line {line_no}: scores are not numbers")
            hyp = NBestHypothesis(parts[0], acoustic, backoff, tuple(parts[3:]))
            by_utterance.setdefault(parts[0], []).append(hyp)
    if not by_utterance:
        raise ValueError(f"{path}: no hypotheses")
    return by_utterance


def read_reference_file(path):
    """Parse ``utt_id w1 ... wN`` reference transcripts."""
    refs = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise ValueError(f"{path}: line {line_no}: expected 'utt_id words...'")
            if parts[0] in refs:
                raise ValueError(f"{path}: line {line_no}: duplicate utterance {parts[0]!r}")
            refs[parts[0]] = tuple(parts[1:])
    if not refs:
        raise ValueError(f"{path}: no references")
    return refs


def score_hypotheses(by_utterance, network, unk_policy="include"):
    """Network log-probability of every hypothesis, computed once.

    Returns a map from utterance id to the list of log P_nn values aligned
    with that utterance's hypotheses.
    """
    order = []
    texts = []
    for utt, hyps in by_utterance.items():
        if not hyps:
            raise ValueError(f"utterance {utt!r} has an empty hypothesis list")
        for i, hyp in enumerate(hyps):
            order.append((utt, i))
            texts.append(list(hyp.tokens))
    results = score_sentences(network, texts, unk_policy)
    scores = {utt: [0.0] * len(hyps) for utt, hyps in by_utterance.items()}
    for (utt, i), res in zip(order, results):
        scores[utt][i] = res.total
    return scores


def _rerank(by_utterance, nn_scores, params):
    reranked = {}
    for utt, hyps in by_utterance.items():
        rows = []
        for hyp, log_p_nn in zip(hyps, nn_scores[utt]):
            lm = params.combine(hyp.backoff, log_p_nn)
            rows.append(RescoredHypothesis(hyp, log_p_nn, lm, hyp.acoustic + lm))
        # stable sort: ties keep the first-pass order
        reranked[utt] = sorted(rows, key=lambda r: -r.total)
    return reranked


def rescore_nbest(by_utterance, network, params, unk_policy="include"):
    """Rerank every utterance's hypotheses by acoustic + interpolated LM score."""
    nn_scores = score_hypotheses(by_utterance, network, unk_policy)
    return _rerank(by_utterance, nn_scores, params)


def edit_distance(hyp, ref):
    """Word-level Levenshtein distance (substitutions + insertions + deletions)."""
    hyp, ref = list(hyp), list(ref)
    previous = list(range(len(ref) + 1))
    for i, h in enumerate(hyp, start=1):
        current = [i] + [0] * len(ref)
        for j, r in enumerate(ref, start=1):
            current[j] = min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (h != r),
            )
        previous = current
    return previous[len(ref)]


def optimize_interpolation(
    by_utterance, references, network, s_bo, lambda_grid, snn_grid, unk_policy="include"
):
    """Grid-search (lambda, s_nn) minimizing total word errors on references.

    The error count is the summed edit distance between each utterance's
    top-ranked hypothesis and its reference.  Ties prefer the smaller
    lambda, then the smaller s_nn.
    """
    lambda_grid = sorted(set(float(x) for x in lambda_grid))
    snn_grid = sorted(set(float(x) for x in snn_grid))
    if not lambda_grid or not snn_grid:
        raise ValueError("empty tuning grid")
    missing = [utt for utt in by_utterance if utt not in references]
    if missing:
        raise ValueError(f"no reference for utterance(s): {', '.join(sorted(missing))}")

    nn_scores = score_hypotheses(by_utterance, network, unk_policy)
    best = None
    best_errors = None
    for lam in lambda_grid:
        for s_nn in snn_grid:
            params = InterpolationParams(lam, s_bo, s_nn)
            reranked = _rerank(by_utterance, nn_scores, params)
            errors = sum(
                edit_distance(rows[0].hypothesis.tokens, references[utt])
                for utt, rows in reranked.items()
            )
            if best_errors is None or errors < best_errors:
                best, best_errors = params, errors
    return best, best_errors
