"""Lexical-translation alignment: IBM Model 1 EM with an optional
fast_align-style diagonal prior, Viterbi decoding, and symmetrization.

Conventions: a corpus is a list of (source tokens, target tokens) pairs of
lower-cased strings.  Each target position is generated by one source
position or the null word.  Links are zero-indexed (i, j) = (source, target).
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError

LinkSet = set  # of (i, j) int pairs

# Decode-time floor for word pairs unseen in training.
SMOOTH_FLOOR = 1e-9


@dataclass
class DiagonalParams:
    tension: float = 4.0
    null_prob: float = 0.08

    def __post_init__(self) -> None:
        if self.tension <= 0:
            raise ValueError("tension must be positive")
        if not 0 <= self.null_prob < 1:
            raise ValueError("null_prob must be in [0, 1)")


@dataclass
class AlignmentModel:
    """A translation table plus distortion parameters and the EM trace.

    ``ttable[src][tgt]`` is p(tgt | src), normalized per source word.
    ``ll_history[k]`` is the corpus log-likelihood under the parameters
    after k EM updates (entry 0 is the uniform initialization).
    """

    ttable: dict[str, dict[str, float]]
    diag: DiagonalParams
    mode: str = "model1"
    warmup: int = 0
    ll_history: list[float] = field(default_factory=list)

    def prob(self, src: str, tgt: str) -> float:
        row = self.ttable.get(src)
        if row is None:
            return SMOOTH_FLOOR
        return max(row.get(tgt, 0.0), SMOOTH_FLOOR)


def _delta(i: int, j: int, l: int, m: int, mode: str, diag: DiagonalParams) -> float:
    """Prior probability that target position j links to source position i.

    i ranges over 0..l with 0 the null word, which always takes the fixed
    p0 mass (the null has the same co-occurrence pattern as a stop word, so
    a uniform prior would let it soak up links).  Lexical positions share
    1 - p0: uniformly in model1 mode, by the log-linear distance feature
    |i/l - j/m| (1-based) in diagonal mode.
    """
    if i == 0:
        return diag.null_prob
    if mode == "model1":
        return (1.0 - diag.null_prob) / l
    z = 0.0
    for i2 in range(1, l + 1):
        z += math.exp(-diag.tension * abs(i2 / l - j / m))
    return (1.0 - diag.null_prob) * math.exp(-diag.tension * abs(i / l - j / m)) / z


def _iter_mode(it: int, mode: str, warmup: int) -> str:
    if mode == "diagonal" and it < warmup:
        return "model1"
    return mode


def corpus_log_likelihood(corpus, model: AlignmentModel, mode: str | None = None) -> float:
    """Sum over pairs of log p(target sentence | source sentence)."""
    mode = mode or model.mode
    total = 0.0
    for src, tgt in corpus:
        l, m = len(src), len(tgt)
        for j, t in enumerate(tgt, start=1):
            p = _delta(0, j, l, m, mode, model.diag) * model.prob("<null>", t)
            for i, s in enumerate(src, start=1):
                p += _delta(i, j, l, m, mode, model.diag) * model.prob(s, t)
            total += math.log(p)
    return total


def em_train(corpus, iterations: int, mode: str = "model1",
             warmup: int = 5, tension: float = 4.0, null_prob: float = 0.08) -> AlignmentModel:
    """Train the translation table by EM.

    ``model1`` uses the uniform link prior throughout; ``diagonal`` runs
    ``warmup`` Model-1 iterations and then switches to the fixed diagonal
    prior.  The t-table is initialized uniformly at 1/|target vocab| over
    co-occurring pairs, and renormalized per source word at every M-step.
    """
    corpus = [(list(s), list(t)) for s, t in corpus]
    if not corpus:
        raise DataError("empty corpus")
    if iterations <= 0:
        raise DataError("iterations must be positive")
    for s, t in corpus:
        if not s or not t:
            raise DataError("corpus pair with an empty side")
    if mode not in ("model1", "diagonal"):
        raise ValueError(f"unknown mode: {mode!r}")

    tgt_vocab = {t for _, ts in corpus for t in ts}
    uniform = 1.0 / len(tgt_vocab)
    ttable: dict[str, dict[str, float]] = defaultdict(dict)
    for src, tgt in corpus:
        for s in src + ["<null>"]:
            for t in tgt:
                ttable[s].setdefault(t, uniform)

    diag = DiagonalParams(tension=tension, null_prob=null_prob)
    model = AlignmentModel(ttable=dict(ttable), diag=diag, mode=mode,
                           warmup=warmup if mode == "diagonal" else 0)

    for it in range(iterations):
        it_mode = _iter_mode(it, mode, model.warmup)
        counts: dict[str, dict[str, float]] = defaultdict(lambda: defaultdict(float))
        ll = 0.0
        for src, tgt in corpus:
            l, m = len(src), len(tgt)
            for j, t in enumerate(tgt, start=1):
                terms = [( "<null>", _delta(0, j, l, m, it_mode, diag) * model.ttable["<null>"].get(t, 0.0))]
                for i, s in enumerate(src, start=1):
                    terms.append((s, _delta(i, j, l, m, it_mode, diag) * model.ttable[s].get(t, 0.0)))
                z = sum(p for _, p in terms)
                ll += math.log(z)
                for s, p in terms:
                    counts[s][t] += p / z
        model.ll_history.append(ll)
        # M-step: renormalize per source word.
        new_table: dict[str, dict[str, float]] = {}
        for s, row in counts.items():
            total = sum(row.values())
            new_table[s] = {t: c / total for t, c in row.items()}
        model.ttable = new_table
    model.ll_history.append(corpus_log_likelihood(corpus, model))
    return model


def viterbi_align(pair, model: AlignmentModel) -> set[tuple[int, int]]:
    """Hard-align one pair: each target position takes its argmax source
    position (or the null word, yielding no link).  Unseen word pairs score
    the SMOOTH_FLOOR constant."""
    src, tgt = list(pair[0]), list(pair[1])
    if not src or not tgt:
        raise DataError("cannot align a pair with an empty side")
    l, m = len(src), len(tgt)
    links: set[tuple[int, int]] = set()
    for j, t in enumerate(tgt, start=1):
        best_i, best_p = 0, _delta(0, j, l, m, model.mode, model.diag) * model.prob("<null>", t)
        for i, s in enumerate(src, start=1):
            p = _delta(i, j, l, m, model.mode, model.diag) * model.prob(s, t)
            if p > best_p:
                best_i, best_p = i, p
        if best_i > 0:
            links.add((best_i - 1, j - 1))
    return links


def _grow_diag_final_and(forward: set, backward: set) -> set:
    union = forward | backward
    aligned = set(forward & backward)
    src_al = {i for i, _ in aligned}
    tgt_al = {j for _, j in aligned}
    neigh = [(-1, 0), (0, -1), (1, 0), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)]
    added = True
    while added:
        added = False
        for i, j in sorted(aligned):
            for di, dj in neigh:
                p = (i + di, j + dj)
                if p in union and p not in aligned and (p[0] not in src_al or p[1] not in tgt_al):
                    aligned.add(p)
                    src_al.add(p[0])
                    tgt_al.add(p[1])
                    added = True
    for direction in (forward, backward):
        for i, j in sorted(direction):
            if i not in src_al and j not in tgt_al:
                aligned.add((i, j))
                src_al.add(i)
                tgt_al.add(j)
    return aligned


def symmetrize(forward: set, backward: set, heuristic: str = "grow-diag-final-and") -> set:
    """Combine two directional link sets over the same sentence pair.

    Both inputs must already be in (source, target) coordinates.  The result
    always satisfies intersection <= result <= union.
    """
    forward, backward = set(forward), set(backward)
    if heuristic == "intersection":
        return forward & backward
    if heuristic == "union":
        return forward | backward
    if heuristic == "grow-diag-final-and":
        return _grow_diag_final_and(forward, backward)
    raise ValueError(f"unknown symmetrization heuristic: {heuristic!r}")


def flip_links(links: set) -> set:
    return {(j, i) for i, j in links}


def format_pharaoh(links: set) -> str:
    return " ".join(f"{i}-{j}" for i, j in sorted(links))


def parse_pharaoh(line: str) -> set[tuple[int, int]]:
    links: set[tuple[int, int]] = set()
    for part in line.split():
        try:
            a, b = part.split("-")
            links.add((int(a), int(b)))
        except ValueError:
            raise DataError(f"bad Pharaoh link {part!r}") from None
    return links


def write_pharaoh(link_sets, path: str | Path) -> None:
    Path(path).write_text("\n".join(format_pharaoh(ls) for ls in link_sets) + "\n",
                          encoding="utf-8")


def read_pharaoh(path: str | Path) -> list[set[tuple[int, int]]]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [parse_pharaoh(line) for line in lines]


_MODEL_MAGIC = "anaphora-eval-ttable\tv1"


def save_model(model: AlignmentModel, path: str | Path) -> None:
    """Versioned text format: header line, then source<TAB>target<TAB>prob rows."""
    src_vocab = len(model.ttable)
    tgt_vocab = len({t for row in model.ttable.values() for t in row})
    lines = [f"{_MODEL_MAGIC}\tlambda={model.diag.tension!r}\tp0={model.diag.null_prob!r}"
             f"\tmode={model.mode}\twarmup={model.warmup}"
             f"\tsrc_vocab={src_vocab}\ttgt_vocab={tgt_vocab}"]
    for s in sorted(model.ttable):
        for t in sorted(model.ttable[s]):
            lines.append(f"{s}\t{t}\t{model.ttable[s][t]!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> AlignmentModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(_MODEL_MAGIC):
        raise DataError(f"{path}: not an alignment model file")
    header = dict(kv.split("=", 1) for kv in lines[0].split("\t")[2:])
    ttable: dict[str, dict[str, float]] = defaultdict(dict)
    for lineno, line in enumerate(lines[1:], 2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected source<TAB>target<TAB>prob")
        ttable[parts[0]][parts[1]] = float(parts[2])
    return AlignmentModel(ttable=dict(ttable),
                          diag=DiagonalParams(tension=float(header["lambda"]),
                                              null_prob=float(header["p0"])),
                          mode=header.get("mode", "model1"),
                          warmup=int(header.get("warmup", 0)))
