"""Mining pronoun mismatches from aligned reference/system pairs and
assembling ranking-pair files.

A mismatch is an aligned token pair where both sides are lexicon pronouns
but the forms differ.  Noisy candidates replace exactly one pronoun in the
reference with the system's pronoun.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Document, PronounLexicon, SentenceRec, context_of, make_sentence, pronoun_indices
from .errors import DataError

LABEL_REF_BETTER = "ref-better"
LABEL_UNLABELED = "unlabeled"


@dataclass(frozen=True)
class PronounMismatch:
    ref_index: int
    sys_index: int
    ref_form: str
    sys_form: str


@dataclass
class RankingPair:
    """One (R, S) comparison: reference side vs system (or noisy) side.

    Contexts and sentences are raw strings; pronoun fields are token indices
    under the package tokenizer.
    """

    id: str
    lang_pair: str
    ref_context: list[str]
    ref: str
    sys_context: list[str]
    sys: str
    ref_pronouns: list[int]
    sys_pronouns: list[int]
    mismatch_forms: list[tuple[str, str]]
    source_text: str | None = None
    label: str = LABEL_REF_BETTER


# (ref_form, sys_form) -> (agreement coefficient, fraction preferring reference, n)
AgreementTable = dict


def find_mismatches(ref: SentenceRec, sys: SentenceRec, links,
                    lexicon: PronounLexicon) -> list[PronounMismatch]:
    """Aligned pronoun pairs whose forms differ.

    ``links`` holds (i, j) pairs with i indexing the system sentence and j
    the reference sentence.  Non-pronoun links and identical forms are
    skipped; results are ordered by reference index.
    """
    out: list[PronounMismatch] = []
    for i, j in links:
        if not (0 <= i < len(sys.tokens) and 0 <= j < len(ref.tokens)):
            raise DataError(f"alignment link ({i},{j}) out of range")
        sys_form = sys.tokens[i].lower
        ref_form = ref.tokens[j].lower
        if ref_form == sys_form:
            continue
        if ref_form in lexicon and sys_form in lexicon:
            out.append(PronounMismatch(ref_index=j, sys_index=i,
                                       ref_form=ref_form, sys_form=sys_form))
    out.sort(key=lambda m: m.ref_index)
    return out


def make_noisy_candidate(ref: SentenceRec, mismatch: PronounMismatch) -> SentenceRec:
    """Replace the mismatched reference pronoun with the system's form.

    The substituted form is capitalized sentence-initially (and "i" is always
    rendered "I"); every other token stays byte-identical.
    """
    tok = ref.tokens[mismatch.ref_index]
    surface = mismatch.sys_form
    if mismatch.ref_index == 0:
        surface = surface[:1].upper() + surface[1:]
    elif surface == "i":
        surface = "I"
    start, end = tok.char_span
    new_text = ref.text[:start] + surface + ref.text[end:]
    candidate = make_sentence(ref.doc_id, ref.index_in_doc, new_text)
    if len(candidate.tokens) != len(ref.tokens):
        raise DataError(f"substitution of {surface!r} changed the token count")
    return candidate


def _content_hash(pair: RankingPair) -> str:
    key = json.dumps([pair.ref, pair.sys, pair.ref_context, pair.sys_context],
                     ensure_ascii=False)
    return hashlib.sha256(key.encode("utf-8")).hexdigest()


def harvest(ref_docs: list[Document], sys_docs: list[Document], alignments,
            lexicon: PronounLexicon, mode: str = "ref-vs-noisy", k: int = 2,
            lang_pair: str = "", sources: list[str] | None = None) -> list[RankingPair]:
    """Walk parallel documents and emit ranking pairs for every mismatch.

    ``alignments`` is one link set per sentence pair, flattened in corpus
    order, with links as (system position, reference position).  In
    ``ref-vs-sys`` mode one pair is emitted per sentence with a mismatch and
    S is the full system sentence; in ``ref-vs-noisy`` mode one pair per
    mismatch with S the single-substitution noisy candidate (sharing the
    reference context).  Duplicates are removed by content hash.
    """
    if mode not in ("ref-vs-sys", "ref-vs-noisy"):
        raise ValueError(f"unknown harvest mode: {mode!r}")
    if len(ref_docs) != len(sys_docs):
        raise DataError(f"document count mismatch: {len(ref_docs)} reference vs {len(sys_docs)} system")
    total_sents = sum(len(d) for d in ref_docs)
    alignments = list(alignments)
    if len(alignments) != total_sents:
        raise DataError(f"alignment count mismatch: {len(alignments)} for {total_sents} sentence pairs")

    pairs: list[RankingPair] = []
    seen: set[str] = set()
    flat_idx = 0
    for ref_doc, sys_doc in zip(ref_docs, sys_docs):
        if len(ref_doc) != len(sys_doc):
            raise DataError(f"sentence count mismatch in {ref_doc.doc_id}: "
                            f"{len(ref_doc)} reference vs {len(sys_doc)} system")
        for i, (ref_sent, sys_sent) in enumerate(zip(ref_doc.sentences, sys_doc.sentences)):
            links = alignments[flat_idx]
            source = sources[flat_idx] if sources is not None else None
            flat_idx += 1
            mismatches = find_mismatches(ref_sent, sys_sent, links, lexicon)
            if not mismatches:
                continue
            ref_ctx = context_of(ref_doc, i, k).texts()
            if mode == "ref-vs-sys":
                candidates = [RankingPair(
                    id="", lang_pair=lang_pair,
                    ref_context=ref_ctx, ref=ref_sent.text,
                    sys_context=context_of(sys_doc, i, k).texts(), sys=sys_sent.text,
                    ref_pronouns=pronoun_indices(ref_sent, lexicon),
                    sys_pronouns=pronoun_indices(sys_sent, lexicon),
                    mismatch_forms=[(m.ref_form, m.sys_form) for m in mismatches],
                    source_text=source)]
            else:
                candidates = []
                for m in mismatches:
                    noisy = make_noisy_candidate(ref_sent, m)
                    candidates.append(RankingPair(
                        id="", lang_pair=lang_pair,
                        ref_context=ref_ctx, ref=ref_sent.text,
                        sys_context=list(ref_ctx), sys=noisy.text,
                        ref_pronouns=pronoun_indices(ref_sent, lexicon),
                        sys_pronouns=pronoun_indices(noisy, lexicon),
                        mismatch_forms=[(m.ref_form, m.sys_form)],
                        source_text=source))
            for cand in candidates:
                h = _content_hash(cand)
                if h in seen:
                    continue
                seen.add(h)
                cand.id = f"{lang_pair or 'pair'}-{len(pairs):06d}"
                pairs.append(cand)
    return pairs


def filter_pairs(pairs: list[RankingPair], table: AgreementTable, tau: float,
                 strict: bool = True) -> list[RankingPair]:
    """Keep pairs whose every mismatch form pair has agreement >= tau and a
    majority preferring the reference.  Form pairs absent from the table drop
    the pair in strict mode and are ignored in permissive mode."""
    if not 0 <= tau <= 1:
        raise ValueError("tau must be in [0, 1]")
    kept = []
    for pair in pairs:
        ok = True
        for forms in pair.mismatch_forms:
            entry = table.get(tuple(forms))
            if entry is None:
                if strict:
                    ok = False
                    break
                continue
            coefficient, pct_ref = entry[0], entry[1]
            if coefficient < tau or pct_ref <= 0.5:
                ok = False
                break
        if ok:
            kept.append(pair)
    return kept


def pair_to_dict(pair: RankingPair) -> dict:
    return {
        "id": pair.id,
        "lang_pair": pair.lang_pair,
        "ref_context": list(pair.ref_context),
        "ref": pair.ref,
        "sys_context": list(pair.sys_context),
        "sys": pair.sys,
        "ref_pronouns": list(pair.ref_pronouns),
        "sys_pronouns": list(pair.sys_pronouns),
        "mismatch_forms": [list(m) for m in pair.mismatch_forms],
        "source_text": pair.source_text,
        "label": pair.label,
    }


def pair_from_dict(d: dict) -> RankingPair:
    return RankingPair(
        id=d["id"],
        lang_pair=d["lang_pair"],
        ref_context=list(d["ref_context"]),
        ref=d["ref"],
        sys_context=list(d["sys_context"]),
        sys=d["sys"],
        ref_pronouns=list(d["ref_pronouns"]),
        sys_pronouns=list(d["sys_pronouns"]),
        mismatch_forms=[tuple(m) for m in d["mismatch_forms"]],
        source_text=d.get("source_text"),
        label=d.get("label", LABEL_REF_BETTER),
    )


def write_pairs(pairs, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair_to_dict(pair), ensure_ascii=False) + "\n")


def read_pairs(path: str | Path) -> list[RankingPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                pairs.append(pair_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise DataError(f"{path}:{lineno}: bad ranking pair record ({exc})") from None
    return pairs


def write_agreement_table(table: AgreementTable, path: str | Path) -> None:
    """TSV rows: ref_form<TAB>sys_form<TAB>ac1<TAB>pct_ref<TAB>n"""
    lines = ["ref_form\tsys_form\tac1\tpct_ref\tn"]
    for (ref_form, sys_form) in sorted(table):
        ac1, pct, n = table[(ref_form, sys_form)]
        lines.append(f"{ref_form}\t{sys_form}\t{ac1!r}\t{pct!r}\t{n}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_agreement_table(path: str | Path) -> AgreementTable:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "ref_form\tsys_form\tac1\tpct_ref\tn":
        raise DataError(f"{path}: missing agreement table header")
    table: AgreementTable = {}
    for lineno, line in enumerate(lines[1:], 2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise DataError(f"{path}:{lineno}: expected 5 tab-separated fields")
        table[(parts[0], parts[1])] = (float(parts[2]), float(parts[3]), int(parts[4]))
    return table
