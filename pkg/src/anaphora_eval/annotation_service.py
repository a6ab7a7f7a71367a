"""HTTP annotation service: blinded A/B task delivery over mined
single-mismatch pairs, durable judgment persistence, live agreement reports.

Per-annotator presentation order and A/B assignment are derived
deterministically from (campaign seed, annotator id, item id), so a
campaign can be replayed bit-exactly.  Judgments go to an append-only
JSON-lines journal; state is rebuilt by replay on startup.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import PlainTextResponse

from . import metrics
from .corpus import tokenize
from .errors import DataError
from .metrics import CHOICES, JudgmentRecord
from .miner import RankingPair, read_pairs

CONFIG_FILE = "config.txt"
PAIRS_FILE = "pairs.jsonl"
JOURNAL_FILE = "journal.jsonl"


@dataclass
class CampaignConfig:
    seed: int = 0
    show_source: bool = False
    context_k: int = 2
    sample_size: int | None = None
    annotators: tuple[str, ...] | None = None  # None: any id may annotate

    def to_text(self) -> str:
        lines = [f"seed={self.seed}", f"show_source={str(self.show_source).lower()}",
                 f"context_k={self.context_k}"]
        if self.sample_size is not None:
            lines.append(f"sample_size={self.sample_size}")
        if self.annotators is not None:
            lines.append("annotators=" + ",".join(self.annotators))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CampaignConfig":
        cfg = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"campaign config line {lineno}: expected key=value")
            key, value = line.split("=", 1)
            key, value = key.strip(), value.strip()
            if key == "seed":
                cfg.seed = int(value)
            elif key == "show_source":
                cfg.show_source = value.lower() in ("1", "true", "yes")
            elif key == "context_k":
                cfg.context_k = int(value)
            elif key == "sample_size":
                cfg.sample_size = int(value)
            elif key == "annotators":
                cfg.annotators = tuple(a.strip() for a in value.split(",") if a.strip())
            else:
                raise DataError(f"campaign config line {lineno}: unknown key {key!r}")
        return cfg


def _mismatch_position(pair: RankingPair) -> tuple[int, tuple[int, int], tuple[int, int]]:
    """Locate the single differing token; returns (index, ref span, sys span)."""
    ref_toks = tokenize(pair.ref)
    sys_toks = tokenize(pair.sys)
    if len(ref_toks) != len(sys_toks):
        raise DataError(f"pair {pair.id!r}: candidates differ in token count")
    diff = [i for i, (a, b) in enumerate(zip(ref_toks, sys_toks)) if a.lower != b.lower]
    if len(diff) != 1:
        raise DataError(f"pair {pair.id!r}: expected exactly one differing token, found {len(diff)}")
    i = diff[0]
    return i, ref_toks[i].char_span, sys_toks[i].char_span


def _hash_int(*parts: str) -> int:
    digest = hashlib.sha256(":".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class Campaign:
    """In-memory campaign state over a directory of config + pairs + journal."""

    id: str
    directory: Path
    config: CampaignConfig
    pairs: dict[str, RankingPair]
    item_order: list[str]  # sampled item ids, canonical order
    spans: dict[str, tuple[int, tuple[int, int], tuple[int, int]]]
    # (annotator, item) -> effective record; journal holds the full audit trail
    judgments: dict[tuple[str, str], JudgmentRecord] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @classmethod
    def load(cls, directory: str | Path) -> "Campaign":
        directory = Path(directory)
        config = CampaignConfig.from_text((directory / CONFIG_FILE).read_text(encoding="utf-8"))
        all_pairs = read_pairs(directory / PAIRS_FILE)
        if not all_pairs:
            raise DataError(f"{directory / PAIRS_FILE}: campaign has no pairs")
        bad = []
        spans = {}
        for pair in all_pairs:
            try:
                spans[pair.id] = _mismatch_position(pair)
            except DataError:
                bad.append(pair.id)
        if bad:
            raise DataError("multi-mismatch pairs rejected: " + ", ".join(bad))
        item_order = [p.id for p in all_pairs]
        if config.sample_size is not None:
            if config.sample_size > len(item_order):
                raise DataError(f"sample_size {config.sample_size} exceeds pair count {len(item_order)}")
            rng = np.random.default_rng(config.seed)
            picked = rng.choice(len(item_order), size=config.sample_size, replace=False)
            item_order = [item_order[i] for i in sorted(picked)]
        campaign = cls(id=directory.name, directory=directory, config=config,
                       pairs={p.id: p for p in all_pairs}, item_order=item_order,
                       spans=spans)
        journal = directory / JOURNAL_FILE
        if journal.exists():
            for record in metrics.read_judgments(journal):
                campaign.judgments[(record.annotator_id, record.item_id)] = record
        return campaign

    # -- deterministic per-annotator blinding ---------------------------------

    def annotator_known(self, annotator: str) -> bool:
        return self.config.annotators is None or annotator in self.config.annotators

    def order_for(self, annotator: str) -> list[str]:
        rng = np.random.default_rng(_hash_int(str(self.config.seed), annotator))
        perm = rng.permutation(len(self.item_order))
        return [self.item_order[i] for i in perm]

    def ref_shown_as_a(self, annotator: str, item_id: str) -> bool:
        return _hash_int(str(self.config.seed), annotator, item_id) % 2 == 0

    # -- task lifecycle --------------------------------------------------------

    def next_task(self, annotator: str) -> dict | None:
        if not self.annotator_known(annotator):
            raise KeyError(f"unknown annotator {annotator!r}")
        done = {item for (a, item) in self.judgments if a == annotator}
        for item_id in self.order_for(annotator):
            if item_id not in done:
                return self.build_task(annotator, item_id)
        return None

    def build_task(self, annotator: str, item_id: str) -> dict:
        pair = self.pairs[item_id]
        _, ref_span, sys_span = self.spans[item_id]
        ref_candidate = {"text": pair.ref, "pronoun_start": ref_span[0], "pronoun_end": ref_span[1]}
        sys_candidate = {"text": pair.sys, "pronoun_start": sys_span[0], "pronoun_end": sys_span[1]}
        if self.ref_shown_as_a(annotator, item_id):
            cand_a, cand_b = ref_candidate, sys_candidate
        else:
            cand_a, cand_b = sys_candidate, ref_candidate
        context = pair.ref_context[-self.config.context_k:] if self.config.context_k else []
        judged = sum(1 for (a, _) in self.judgments if a == annotator)
        task = {
            "item_id": item_id,
            "context": list(context),
            "bold_sentence_index": len(context),
            "candidate_a": cand_a,
            "candidate_b": cand_b,
            "choices": list(CHOICES),
            "progress": {"judged": judged, "total": len(self.item_order)},
        }
        if self.config.show_source and pair.source_text is not None:
            task["source"] = pair.source_text
        return task

    def submit(self, annotator: str, item_id: str, choice: str) -> tuple[int, dict]:
        """Returns (status, ack).  200 on first write, 409 on an audited overwrite."""
        if choice not in CHOICES:
            raise ValueError(f"choice must be one of {CHOICES}")
        if not self.annotator_known(annotator):
            raise KeyError(f"unknown annotator {annotator!r}")
        if item_id not in self.pairs or item_id not in set(self.item_order):
            raise KeyError(f"unknown item {item_id!r}")
        order = ("reference", "noisy") if self.ref_shown_as_a(annotator, item_id) else ("noisy", "reference")
        record = JudgmentRecord(item_id=item_id, annotator_id=annotator,
                                displayed_order=order, choice=choice,
                                timestamp=time.time())
        with self.lock:
            duplicate = (annotator, item_id) in self.judgments
            entry = metrics.record_to_dict(record)
            entry["supersedes"] = duplicate
            with open(self.directory / JOURNAL_FILE, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry) + "\n")
                fh.flush()
            self.judgments[(annotator, item_id)] = record
        ack = {"item_id": item_id, "recorded": choice, "duplicate": duplicate}
        return (409 if duplicate else 200), ack

    # -- reporting -------------------------------------------------------------

    def effective_records(self) -> list[JudgmentRecord]:
        return list(self.judgments.values())

    def report(self) -> dict:
        records = self.effective_records()
        annotators = {r.annotator_id for r in records}
        if len(annotators) < 2:
            raise ValueError("report needs at least 2 annotators")
        overlap = {}
        for r in records:
            overlap.setdefault(r.item_id, set()).add(r.annotator_id)
        if not any(len(raters) >= 2 for raters in overlap.values()):
            raise ValueError("report needs overlapping completed items")
        rep = metrics.agreement_report(records)
        assignments, _ = metrics.normalize_judgments(records)
        item_forms = {pid: pair.mismatch_forms[0] for pid, pair in self.pairs.items()}
        table = metrics.agreement_by_pronoun_pair(assignments, item_forms)
        return {
            "report": rep.to_dict(),
            "by_pronoun_pair": [
                {"ref_form": k[0], "sys_form": k[1], "ac1": v[0], "pct_ref": v[1], "n": v[2]}
                for k, v in sorted(table.items())
            ],
        }


def new_campaign_dir(directory: str | Path, pairs, config: CampaignConfig) -> Path:
    """Materialize a campaign directory (config + pairs) and validate it."""
    from .miner import write_pairs

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / CONFIG_FILE).write_text(config.to_text(), encoding="utf-8")
    write_pairs(pairs, directory / PAIRS_FILE)
    Campaign.load(directory)  # validation: parses, single-mismatch, sample size
    return directory


def create_app(root: str | Path) -> FastAPI:
    """Serve every campaign directory under ``root``."""
    root = Path(root)
    campaigns: dict[str, Campaign] = {}
    for sub in sorted(root.iterdir()) if root.is_dir() else []:
        if sub.is_dir() and (sub / CONFIG_FILE).exists():
            campaigns[sub.name] = Campaign.load(sub)
    if not campaigns:
        raise DataError(f"no campaign directories under {root}")

    app = FastAPI(title="anaphora-eval annotation service")

    def get_campaign(campaign_id: str) -> Campaign:
        if campaign_id not in campaigns:
            raise HTTPException(status_code=404, detail=f"unknown campaign {campaign_id!r}")
        return campaigns[campaign_id]

    @app.get("/campaigns/{campaign_id}/next")
    def next_task(campaign_id: str, annotator: str = Query(...)):
        campaign = get_campaign(campaign_id)
        try:
            task = campaign.next_task(annotator)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        if task is None:
            return {"done": True, "total": len(campaign.item_order)}
        return task

    @app.post("/campaigns/{campaign_id}/judgments")
    def submit(campaign_id: str, payload: dict):
        campaign = get_campaign(campaign_id)
        for key in ("annotator", "item_id", "choice"):
            if key not in payload:
                raise HTTPException(status_code=400, detail=f"missing field {key!r}")
        try:
            status, ack = campaign.submit(payload["annotator"], payload["item_id"],
                                          payload["choice"])
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        if status != 200:
            raise HTTPException(status_code=status, detail=ack)
        return ack

    @app.get("/campaigns/{campaign_id}/report")
    def report(campaign_id: str):
        campaign = get_campaign(campaign_id)
        try:
            return campaign.report()
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/campaigns/{campaign_id}/export", response_class=PlainTextResponse)
    def export(campaign_id: str):
        campaign = get_campaign(campaign_id)
        lines = [json.dumps(metrics.record_to_dict(r)) for r in campaign.effective_records()]
        return "\n".join(lines) + ("\n" if lines else "")

    return app
