"""Tokenization, documents and contexts, the pronoun lexicon, and corpus file I/O."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError

# Pronoun categories.
PERSONAL_SUBJECT = "personal-subject"
PERSONAL_OBJECT = "personal-object"
POSSESSIVE = "possessive"
REFLEXIVE = "reflexive"
DEMONSTRATIVE = "demonstrative"
RELATIVE_WH = "relative-wh"


@dataclass(frozen=True)
class Token:
    surface: str
    lower: str  # case-folded form
    char_span: tuple[int, int]  # (start, end) offsets into the source line


@dataclass
class SentenceRec:
    doc_id: str
    index_in_doc: int
    text: str  # the raw source line; token char_spans index into it
    tokens: list[Token]


@dataclass
class Document:
    doc_id: str
    sentences: list[SentenceRec]

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass
class ContextWindow:
    sentences: list[SentenceRec]  # oldest first
    k: int

    def texts(self) -> list[str]:
        return [s.text for s in self.sentences]


_APOSTROPHES = ("'", "’")
# Clitics split off the end of a word, longest first.  "n't" keeps the n with
# the clitic (did + n't); the apostrophe forms keep it with the suffix.
_CLITICS = ("'re", "'ve", "'ll", "'s", "'d", "'m")


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _emit(line: str, start: int, end: int, out: list[Token]) -> None:
    surface = line[start:end]
    out.append(Token(surface=surface, lower=surface.casefold(), char_span=(start, end)))


def _split_core(line: str, start: int, end: int, out: list[Token]) -> None:
    """Apply the contraction rule to a punctuation-stripped word.

    Rule: a single rightmost clitic is split off.  "n't" splits before the-
    n ("didn't" -> "did" + "n't"); the suffixes 's, 're, 've, 'll, 'd, 'm
    split at the apostrophe.  Both ASCII and curly apostrophes count.
    """
    word = line[start:end].casefold()
    for apo in _APOSTROPHES:
        nt = "n" + apo + "t"
        if word.endswith(nt) and len(word) > len(nt):
            _emit(line, start, end - len(nt), out)
            _emit(line, end - len(nt), end, out)
            return
        for clitic in _CLITICS:
            form = apo + clitic[1:]
            if word.endswith(form) and len(word) > len(form):
                _emit(line, start, end - len(form), out)
                _emit(line, end - len(form), end, out)
                return
    _emit(line, start, end, out)


def _split_chunk(line: str, start: int, end: int, out: list[Token]) -> None:
    s, e = start, end
    lead: list[tuple[int, int]] = []
    while s < e and _is_punct(line[s]):
        lead.append((s, s + 1))
        s += 1
    tail: list[tuple[int, int]] = []
    while e > s and _is_punct(line[e - 1]):
        tail.append((e - 1, e))
        e -= 1
    for a, b in lead:
        _emit(line, a, b, out)
    if s < e:
        _split_core(line, s, e, out)
    for a, b in reversed(tail):
        _emit(line, a, b, out)


def tokenize(line: str) -> list[Token]:
    """Split a line into tokens with exact character spans.

    Whitespace separates chunks; punctuation characters (Unicode category P)
    are peeled one at a time off chunk edges; the contraction rule of
    ``_split_core`` splits a single rightmost clitic.  Internal hyphens and
    apostrophes stay inside the word.
    """
    tokens: list[Token] = []
    i, n = 0, len(line)
    while i < n:
        if line[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not line[j].isspace():
            j += 1
        _split_chunk(line, i, j, tokens)
        i = j
    return tokens


def detokenize(line: str, tokens: list[Token]) -> str:
    """Rebuild the line from token spans plus the original separators."""
    out: list[str] = []
    prev = 0
    for t in tokens:
        a, b = t.char_span
        out.append(line[prev:a])
        out.append(t.surface)
        prev = b
    out.append(line[prev:])
    return "".join(out)


def make_sentence(doc_id: str, index_in_doc: int, line: str) -> SentenceRec:
    return SentenceRec(doc_id=doc_id, index_in_doc=index_in_doc, text=line, tokens=tokenize(line))


_PRONOUN_CATEGORIES: dict[str, list[str]] = {
    PERSONAL_SUBJECT: ["i", "we", "you", "he", "she", "it", "they"],
    PERSONAL_OBJECT: ["me", "us", "you", "him", "her", "it", "them"],
    POSSESSIVE: ["my", "our", "your", "his", "her", "its", "their",
                 "mine", "ours", "yours", "hers", "theirs"],
    REFLEXIVE: ["myself", "ourselves", "yourself", "yourselves",
                "himself", "herself", "itself", "themselves"],
    DEMONSTRATIVE: ["this", "that", "these", "those"],
    RELATIVE_WH: ["who", "whom", "whose", "which"],
}

# Error dimension of a confused pronoun pair: gender (he->it), number
# (they->it), animacy (who->which), syntactic role (he->him).  Symmetric;
# unlisted pairs fall back to "other".  Extensible via file.
_DEFAULT_ERROR_KINDS: list[tuple[str, str, str]] = [
    ("he", "it", "gender"), ("she", "it", "gender"), ("he", "she", "gender"),
    ("him", "it", "gender"), ("her", "it", "gender"), ("him", "her", "gender"),
    ("his", "its", "gender"), ("her", "its", "gender"), ("his", "her", "gender"),
    ("himself", "herself", "gender"), ("himself", "itself", "gender"),
    ("herself", "itself", "gender"),
    ("they", "it", "number"), ("they", "he", "number"), ("they", "she", "number"),
    ("them", "it", "number"), ("them", "him", "number"), ("them", "her", "number"),
    ("these", "this", "number"), ("those", "that", "number"),
    ("we", "i", "number"), ("us", "me", "number"), ("their", "its", "number"),
    ("themselves", "itself", "number"),
    ("who", "which", "animacy"), ("whom", "which", "animacy"),
    ("he", "him", "syntactic-role"), ("she", "her", "syntactic-role"),
    ("they", "them", "syntactic-role"), ("i", "me", "syntactic-role"),
    ("we", "us", "syntactic-role"), ("it", "its", "syntactic-role"),
]


def _pair_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass
class PronounLexicon:
    """Closed-class pronoun list with per-form categories and error dimensions."""

    entries: dict[str, frozenset[str]]
    error_dimension: dict[tuple[str, str], str] = field(default_factory=dict)

    def __contains__(self, form: str) -> bool:
        return form in self.entries

    def categories(self, form: str) -> frozenset[str]:
        return self.entries.get(form, frozenset())

    def error_kind(self, form_a: str, form_b: str) -> str:
        return self.error_dimension.get(_pair_key(form_a, form_b), "other")

    @classmethod
    def default(cls) -> "PronounLexicon":
        entries: dict[str, set[str]] = {}
        for cat, forms in _PRONOUN_CATEGORIES.items():
            for form in forms:
                entries.setdefault(form, set()).add(cat)
        dims = {_pair_key(a, b): kind for a, b, kind in _DEFAULT_ERROR_KINDS}
        return cls(entries={f: frozenset(c) for f, c in entries.items()},
                   error_dimension=dims)

    @classmethod
    def load(cls, path: str | Path, error_path: str | Path | None = None) -> "PronounLexicon":
        """Read ``form<TAB>category`` entries, optionally ``a<TAB>b<TAB>kind`` dimensions."""
        entries: dict[str, set[str]] = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected form<TAB>category")
            entries.setdefault(parts[0].casefold(), set()).add(parts[1])
        dims: dict[tuple[str, str], str] = {}
        if error_path is not None:
            for lineno, line in enumerate(Path(error_path).read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise DataError(f"{error_path}:{lineno}: expected form_a<TAB>form_b<TAB>kind")
                dims[_pair_key(parts[0].casefold(), parts[1].casefold())] = parts[2]
        return cls(entries={f: frozenset(c) for f, c in entries.items()},
                   error_dimension=dims)

    def save(self, path: str | Path, error_path: str | Path | None = None) -> None:
        lines = []
        for form in sorted(self.entries):
            for cat in sorted(self.entries[form]):
                lines.append(f"{form}\t{cat}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
        if error_path is not None:
            dim_lines = [f"{a}\t{b}\t{kind}" for (a, b), kind in sorted(self.error_dimension.items())]
            Path(error_path).write_text("\n".join(dim_lines) + "\n", encoding="utf-8")


def pronoun_indices(sentence: SentenceRec, lexicon: PronounLexicon) -> list[int]:
    """Positions of tokens whose case-folded form is a lexicon entry."""
    return [i for i, tok in enumerate(sentence.tokens) if tok.lower in lexicon]


def context_of(doc: Document, i: int, k: int) -> ContextWindow:
    """The min(i, k) sentences immediately preceding sentence i."""
    if not 0 <= i < len(doc.sentences):
        raise IndexError(f"sentence index {i} out of range for document of {len(doc.sentences)}")
    return ContextWindow(sentences=doc.sentences[max(0, i - k):i], k=k)


def _decode_utf8(path: str | Path) -> str:
    raw = Path(path).read_bytes()
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: malformed UTF-8 at byte offset {exc.start}") from None


def load_corpus(path: str | Path, format: str = "flat") -> list[Document]:
    """Load a one-sentence-per-line corpus.

    ``flat`` treats the whole file as a single document; ``doc-blocks``
    starts a new document at every blank line.
    """
    text = _decode_utf8(path)
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if format == "flat":
        if not lines:
            return []
        doc = Document("doc0", [])
        for i, line in enumerate(lines):
            doc.sentences.append(make_sentence("doc0", i, line))
        return [doc]
    if format == "doc-blocks":
        docs: list[Document] = []
        block: list[str] = []

        def flush() -> None:
            if block:
                doc_id = f"doc{len(docs)}"
                docs.append(Document(doc_id, [make_sentence(doc_id, i, ln) for i, ln in enumerate(block)]))
                block.clear()

        for line in lines:
            if line.strip() == "":
                flush()
            else:
                block.append(line)
        flush()
        return docs
    raise ValueError(f"unknown corpus format: {format!r}")


@dataclass
class ManifestRow:
    language: str
    years: list[int]
    unique_source_contexts: int


@dataclass
class TestSuiteManifest:
    rows: list[ManifestRow]


_YEAR_RE = re.compile(r"(?<!\d)(\d{4})(?!\d)")


def build_manifest(suite_root: str | Path) -> TestSuiteManifest:
    """Scan a test-suite tree: one subdirectory per source language, each
    holding ``*.txt`` files (year taken from a 4-digit run in the file name)
    with one source context per line.  Counts are over unique non-empty lines.
    """
    root = Path(suite_root)
    if not root.is_dir():
        raise DataError(f"suite root not found: {root}")
    lang_dirs = sorted((p for p in root.iterdir() if p.is_dir()), key=lambda p: p.name)
    seen: dict[str, str] = {}
    rows: list[ManifestRow] = []
    for lang in lang_dirs:
        folded = lang.name.casefold()
        if folded in seen:
            raise DataError(f"duplicated language directory: {lang.name!r} vs {seen[folded]!r}")
        seen[folded] = lang.name
        years: set[int] = set()
        contexts: set[str] = set()
        for f in sorted(lang.glob("*.txt")):
            years.update(int(y) for y in _YEAR_RE.findall(f.name))
            for line in _decode_utf8(f).splitlines():
                if line.strip():
                    contexts.add(line)
        rows.append(ManifestRow(language=lang.name, years=sorted(years),
                                unique_source_contexts=len(contexts)))
    rows.sort(key=lambda r: (-r.unique_source_contexts, r.language))
    return TestSuiteManifest(rows=rows)


_MANIFEST_HEADER = "language\tyears\tunique_source_contexts"


def write_manifest(manifest: TestSuiteManifest, path: str | Path) -> None:
    lines = [_MANIFEST_HEADER]
    for r in manifest.rows:
        years = ",".join(str(y) for y in r.years)
        lines.append(f"{r.language}\t{years}\t{r.unique_source_contexts}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> TestSuiteManifest:
    lines = _decode_utf8(path).splitlines()
    if not lines or lines[0] != _MANIFEST_HEADER:
        raise DataError(f"{path}: missing manifest header")
    rows = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields")
        years = [int(y) for y in parts[1].split(",") if y]
        rows.append(ManifestRow(language=parts[0], years=years,
                                unique_source_contexts=int(parts[2])))
    return TestSuiteManifest(rows=rows)
