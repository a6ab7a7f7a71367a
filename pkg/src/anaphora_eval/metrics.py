"""Agreement statistics over human judgments.

Implements Gwet's AC1 in its multi-rater form (Gwet 2008, "Computing
inter-rater reliability and its variance in the presence of high
agreement"), which is robust to the skewed category prevalence these
annotation campaigns produce: p_a is the average item-level pairwise
agreement and p_e = (1/(Q-1)) * sum_q pi_q (1 - pi_q) with pi_q the mean
classification proportion of category q.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError

REF_BETTER = "reference-better"
NOISY_BETTER = "noisy-better"
TIE = "tie"

CHOICES = ("A", "B", "tie", "neither", "invalid")
ROLES = ("reference", "noisy")


@dataclass
class JudgmentRecord:
    """One annotator's choice on one blinded A/B task."""

    item_id: str
    annotator_id: str
    displayed_order: tuple[str, str]  # roles shown as (A, B)
    choice: str  # A | B | tie | neither | invalid
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        if self.choice not in CHOICES:
            raise ValueError(f"choice must be one of {CHOICES}, got {self.choice!r}")
        order = tuple(self.displayed_order)
        if sorted(order) != sorted(ROLES):
            raise ValueError(f"displayed_order must name the roles {ROLES}, got {order!r}")
        self.displayed_order = order


def record_to_dict(rec: JudgmentRecord) -> dict:
    return {"item_id": rec.item_id, "annotator_id": rec.annotator_id,
            "displayed_order": list(rec.displayed_order), "choice": rec.choice,
            "timestamp": rec.timestamp}


def record_from_dict(d: dict) -> JudgmentRecord:
    if "displayed_order" not in d:
        raise DataError("judgment record missing displayed_order")
    return JudgmentRecord(item_id=d["item_id"], annotator_id=d["annotator_id"],
                          displayed_order=tuple(d["displayed_order"]),
                          choice=d["choice"], timestamp=d.get("timestamp", 0.0))


def write_judgments(records, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_dict(rec)) + "\n")


def read_judgments(path: str | Path) -> list[JudgmentRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(record_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad judgment record ({exc})") from None
    return records


def normalize_judgments(records) -> tuple[dict, dict]:
    """Map blinded A/B choices back to categories.

    Returns (assignments, excluded) where assignments maps item_id ->
    {annotator_id: category} over the three categories reference-better /
    noisy-better / tie.  Items with any "neither" or "invalid" vote are
    excluded entirely; excluded counts them per reason.  A later record for
    the same (item, annotator) supersedes an earlier one.
    """
    by_item: dict[str, dict[str, str]] = {}
    dropped: dict[str, set[str]] = {"neither": set(), "invalid": set()}
    for rec in records:
        if rec.choice in ("neither", "invalid"):
            dropped[rec.choice].add(rec.item_id)
            by_item.setdefault(rec.item_id, {})[rec.annotator_id] = rec.choice
            continue
        if rec.choice == "tie":
            category = TIE
        else:
            role = rec.displayed_order[0] if rec.choice == "A" else rec.displayed_order[1]
            category = REF_BETTER if role == "reference" else NOISY_BETTER
        by_item.setdefault(rec.item_id, {})[rec.annotator_id] = category
    excluded_items = dropped["neither"] | dropped["invalid"]
    assignments = {item: votes for item, votes in by_item.items()
                   if item not in excluded_items}
    excluded = {"neither": len(dropped["neither"]),
                "invalid": len(dropped["invalid"] - dropped["neither"])}
    return assignments, excluded


def gwet_ac1(assignments: dict, categories) -> float:
    """Gwet's AC1 over items x raters categorical assignments.

    ``assignments`` maps item -> {rater: category}; items with fewer than
    two ratings are skipped.  AC1 = (p_a - p_e) / (1 - p_e).
    """
    categories = list(categories)
    if len(categories) < 2:
        raise ValueError("need at least 2 categories")
    usable = {item: votes for item, votes in assignments.items() if len(votes) >= 2}
    if not usable:
        raise ValueError("fewer than 2 raters on every item")
    pa_sum = 0.0
    pi = {q: 0.0 for q in categories}
    for votes in usable.values():
        cats = list(votes.values())
        r = len(cats)
        agree = 0
        for q in categories:
            rq = cats.count(q)
            agree += rq * (rq - 1)
            pi[q] += rq / r
        pa_sum += agree / (r * (r - 1))
    n = len(usable)
    p_a = pa_sum / n
    for q in pi:
        pi[q] /= n
    q_count = len(categories)
    p_e = sum(p * (1.0 - p) for p in pi.values()) / (q_count - 1)
    if p_e >= 1.0:
        raise ValueError("degenerate chance agreement p_e == 1")
    return (p_a - p_e) / (1.0 - p_e)


def avg_pct_ref(assignments: dict) -> float:
    """Mean over annotators of the fraction of their non-tie judgments that
    prefer the reference.  Annotators with no usable judgments are excluded."""
    per_annotator: dict[str, list[int]] = {}
    for votes in assignments.values():
        for rater, cat in votes.items():
            if cat == TIE:
                continue
            per_annotator.setdefault(rater, []).append(1 if cat == REF_BETTER else 0)
    fractions = [sum(v) / len(v) for v in per_annotator.values() if v]
    if not fractions:
        raise ValueError("no non-tie judgments")
    return sum(fractions) / len(fractions)


@dataclass
class AgreementReport:
    ac1_incl_ties: float
    ac1_excl_ties: float | None
    avg_pct_ref: float
    n_items: int
    n_annotators: int
    excluded: dict = field(default_factory=dict)  # reason -> item count

    def to_dict(self) -> dict:
        return {"ac1_incl_ties": self.ac1_incl_ties,
                "ac1_excl_ties": self.ac1_excl_ties,
                "avg_pct_ref": self.avg_pct_ref,
                "n_items": self.n_items, "n_annotators": self.n_annotators,
                "excluded": dict(self.excluded)}

    @classmethod
    def from_dict(cls, d: dict) -> "AgreementReport":
        return cls(ac1_incl_ties=d["ac1_incl_ties"], ac1_excl_ties=d["ac1_excl_ties"],
                   avg_pct_ref=d["avg_pct_ref"], n_items=d["n_items"],
                   n_annotators=d["n_annotators"], excluded=dict(d["excluded"]))


def agreement_report(records) -> AgreementReport:
    """Full campaign-level agreement summary.

    The excl-ties coefficient drops whole items where any annotator chose
    tie (Q=2); the incl-ties coefficient keeps them (Q=3).  When no items
    survive the tie exclusion the excl-ties value is None.
    """
    assignments, excluded = normalize_judgments(records)
    if not assignments:
        raise ValueError("no usable items after exclusions")
    annotators = {r for votes in assignments.values() for r in votes}
    incl = gwet_ac1(assignments, [REF_BETTER, NOISY_BETTER, TIE])
    no_ties = {item: votes for item, votes in assignments.items()
               if TIE not in votes.values()}
    try:
        excl = gwet_ac1(no_ties, [REF_BETTER, NOISY_BETTER])
    except ValueError:
        excl = None
    return AgreementReport(ac1_incl_ties=incl, ac1_excl_ties=excl,
                           avg_pct_ref=avg_pct_ref(assignments),
                           n_items=len(assignments), n_annotators=len(annotators),
                           excluded=excluded)


def agreement_by_pronoun_pair(assignments: dict, item_forms: dict) -> dict:
    """Per (ref_form, sys_form) agreement: AC1 (ties included), pooled
    fraction of non-tie votes preferring the reference, and the item count.
    Groups where AC1 is undefined (no multiply-rated item) get coefficient
    0.0, which any positive threshold then drops."""
    groups: dict[tuple[str, str], dict] = {}
    for item, votes in assignments.items():
        forms = item_forms.get(item)
        if forms is None:
            continue
        groups.setdefault(tuple(forms), {})[item] = votes
    table: dict[tuple[str, str], tuple[float, float, int]] = {}
    for forms, items in groups.items():
        try:
            ac1 = gwet_ac1(items, [REF_BETTER, NOISY_BETTER, TIE])
        except ValueError:
            ac1 = 0.0
        votes = [cat for v in items.values() for cat in v.values() if cat != TIE]
        pct = sum(1 for c in votes if c == REF_BETTER) / len(votes) if votes else 0.0
        table[forms] = (ac1, pct, len(items))
    return table


def pronoun_pair_error_report(eval_report, seen_in_training: set) -> list[dict]:
    """Per mismatch form pair: sample count, model accuracy, and whether the
    pair occurred in training."""
    rows = []
    for forms in sorted(eval_report.per_pair):
        stat = eval_report.per_pair[forms]
        rows.append({"ref_form": forms[0], "sys_form": forms[1], "n": stat.n,
                     "accuracy": stat.accuracy,
                     "seen_in_training": tuple(forms) in seen_in_training})
    return rows
