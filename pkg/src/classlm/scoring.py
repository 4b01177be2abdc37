"""Sentence log-probabilities and corpus perplexity.

Every sentence is framed as ``<s> w1 ... wn </s>``: the start token is
input-only and the end token is a predicted position.  A predicted token
contributes

    log P(w | history) = log P(c(w) | history) + log P(w | c(w))

Unknown-word handling follows `unk_policy`: with ``"include"`` the unknown
token is scored like any word; with ``"exclude"`` positions whose target is
``<unk>`` contribute neither to the total nor to the token count, although
the history still advances through them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["ScoreResult", "corpus_perplexity", "score_sentence", "score_sentences"]

UNK_POLICIES = ("include", "exclude")


@dataclass
class ScoreResult:
    """Log-probability of one sentence under the model.

    `per_token` has one entry per predicted position (w1 ... wn </s>);
    excluded positions hold None.  `total` is the sum of the included
    entries and `counted` their number.
    """

    total: float = 0.0
    per_token: list = field(default_factory=list)
    counted: int = 0


def _check_policy(unk_policy):
    if unk_policy not in UNK_POLICIES:
        raise ValueError(f"unk_policy must be one of {UNK_POLICIES}, got {unk_policy!r}")


def score_sentences(network, sentences, unk_policy="include"):
    """Score a batch of token sequences; returns one ScoreResult per sentence.

    Sentences of equal length are evaluated together through the single-step
    graph, which keeps results identical to one-at-a-time scoring.
    """
    _check_policy(unk_policy)
    framed = []
    for tokens in sentences:
        tokens = list(tokens)
        if not tokens:
            raise ValueError("cannot score an empty sentence")
        framed.append(np.asarray(network.vocab.frame(tokens), dtype=np.int64))

    results = [ScoreResult() for _ in framed]
    groups = {}
    for idx, ids in enumerate(framed):
        groups.setdefault(len(ids), []).append(idx)

    class_of = network.classes.class_of
    log_membership = network.classes.log_membership
    unk_id = network.vocab.unk_id
    for length, idxs in sorted(groups.items()):
        ids = np.stack([framed[i] for i in idxs])
        state = network.initial_state(len(idxs))
        for t in range(length - 1):
            probs, state = network.step(state, ids[:, t])
            targets = ids[:, t + 1]
            with np.errstate(divide="ignore"):
                logp = np.log(probs[np.arange(len(idxs)), class_of[targets]])
            logp = logp + log_membership[targets]
            for row, idx in enumerate(idxs):
                if unk_policy == "exclude" and targets[row] == unk_id:
                    results[idx].per_token.append(None)
                else:
                    value = float(logp[row])
                    results[idx].per_token.append(value)
                    results[idx].total += value
                    results[idx].counted += 1
    return results


def score_sentence(network, tokens, unk_policy="include"):
    """Score one sentence; see :func:`score_sentences`."""
    return score_sentences(network, [tokens], unk_policy)[0]


def corpus_perplexity(network, sentences, unk_policy="include"):
    """exp of the average negative log-probability per counted token.

    Counted tokens include the sentence-end token of every sentence, never
    the start token, and respect `unk_policy`.
    """
    results = score_sentences(network, sentences, unk_policy)
    total = sum(r.total for r in results)
    counted = sum(r.counted for r in results)
    if counted == 0:
        raise ValueError("no counted tokens; cannot compute perplexity")
    with np.errstate(over="ignore"):
        return float(np.exp(-total / counted))
