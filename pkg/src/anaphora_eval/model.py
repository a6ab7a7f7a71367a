"""The pairwise pronoun ranking architecture: shared embeddings, BiLSTM
encoder (or a raw-embedding averaging baseline), scaled multiplicative
attention from pronoun slots over all token representations, residual +
layer norm, and bias-free scoring heads shared across both sides.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics
from .corpus import SentenceRec, Token
from .errors import DataError
from .numerics import Parameter

logger = logging.getLogger(__name__)

CONTEXT_MODES = ("NC", "RC", "CRC")
ENCODERS = ("average-baseline", "bilstm")

UNK = "<unk>"

CHECKPOINT_MAGIC = b"ANEV"
CHECKPOINT_VERSION = 1


class UnscorableInputError(Exception):
    """The target sentence has no pronoun slots to score."""


@dataclass
class ModelConfig:
    d: int
    h: int
    v: int
    M: int = 12
    context_mode: str = "NC"
    encoder: str = "bilstm"
    margin: float = 0.1

    def __post_init__(self) -> None:
        if min(self.d, self.h, self.v, self.M) <= 0:
            raise ValueError("d, h, v, M must be positive")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.context_mode not in CONTEXT_MODES:
            raise ValueError(f"context_mode must be one of {CONTEXT_MODES}")
        if self.encoder not in ENCODERS:
            raise ValueError(f"encoder must be one of {ENCODERS}")

    @property
    def enc_dim(self) -> int:
        return 2 * self.h if self.encoder == "bilstm" else self.d

    def to_dict(self) -> dict:
        return {"d": self.d, "h": self.h, "v": self.v, "M": self.M,
                "context_mode": self.context_mode, "encoder": self.encoder,
                "margin": self.margin}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class Vocab:
    words: list[str]  # index 0 is the unknown word
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.index:
            self.index = {w: i for i, w in enumerate(self.words)}

    def id(self, word: str) -> int:
        return self.index.get(word, 0)

    def __len__(self) -> int:
        return len(self.words)


def build_vocab(token_lowers, min_freq: int = 1) -> Vocab:
    """Frequency-then-lexicographic vocabulary over case-folded tokens, with
    a reserved unknown row at index 0."""
    counts: dict[str, int] = {}
    for w in token_lowers:
        counts[w] = counts.get(w, 0) + 1
    kept = sorted((w for w, c in counts.items() if c >= min_freq),
                  key=lambda w: (-counts[w], w))
    return Vocab(words=[UNK] + kept)


def init_parameters(config: ModelConfig, rng: np.random.Generator,
                    pretrained: dict[str, np.ndarray] | None = None,
                    vocab: Vocab | None = None) -> dict[str, Parameter]:
    """Fresh parameter blocks.  LSTM weights are uniform in +/-1/sqrt(h) with
    the forget-gate bias at 1; the z and w heads carry no bias so that
    zero-padded slots contribute exactly zero."""
    d, h, M = config.d, config.h, config.M
    params: dict[str, Parameter] = {}
    E = rng.uniform(-0.1, 0.1, size=(config.v, d))
    if pretrained:
        if vocab is None:
            raise ValueError("pretrained embeddings require a vocabulary")
        for i, w in enumerate(vocab.words):
            vec = pretrained.get(w)
            if vec is not None:
                if vec.shape != (d,):
                    raise DataError(f"embedding for {w!r} has dimension {vec.shape[0]}, expected {d}")
                E[i] = vec
    params["E"] = Parameter.of(E)
    if config.encoder == "bilstm":
        s = 1.0 / np.sqrt(h)
        for direction in ("fw", "bw"):
            params[f"lstm_{direction}_W"] = Parameter.of(rng.uniform(-s, s, size=(d, 4 * h)))
            params[f"lstm_{direction}_U"] = Parameter.of(rng.uniform(-s, s, size=(h, 4 * h)))
            b = np.zeros(4 * h)
            b[h:2 * h] = 1.0
            params[f"lstm_{direction}_b"] = Parameter.of(b)
        params["ln_gain"] = Parameter.of(np.ones(config.enc_dim))
        params["ln_bias"] = Parameter.of(np.zeros(config.enc_dim))
        params["z"] = Parameter.of(rng.uniform(-s, s, size=config.enc_dim))
        params["w"] = Parameter.of(rng.uniform(-s, s, size=M))
    else:
        s = 1.0 / np.sqrt(d)
        params["z"] = Parameter.of(rng.uniform(-s, s, size=d))
        params["w"] = Parameter.of(rng.uniform(-s, s, size=1))
    return params


def zero_grads(params: dict[str, Parameter]) -> None:
    for p in params.values():
        p.zero_grad()


@dataclass
class EncodedInput:
    K: np.ndarray                # one row per context+sentence token
    sentence_offset: int         # index of the first target-sentence row
    pronoun_slots: np.ndarray    # M x enc_dim, zero-padded
    slot_mask: np.ndarray        # boolean, length M
    slot_positions: list[int]    # rows of K backing the unmasked slots
    token_surfaces: list[str]
    slot_forms: list[str]
    cache: dict = field(default_factory=dict)


@dataclass
class AttentionTrace:
    weights: np.ndarray          # M x tokens; masked rows all zero
    token_surfaces: list[str]
    slot_forms: list[str]
    slot_mask: np.ndarray


SideInput = tuple  # (context sentences: list[SentenceRec], sentence: SentenceRec, pronoun idx: list[int])


def encode(context: list[SentenceRec], sentence: SentenceRec, pronoun_idx: list[int],
           config: ModelConfig, params: dict[str, Parameter], vocab: Vocab,
           with_cache: bool = False) -> EncodedInput:
    """Embed context+sentence tokens and extract pronoun slot rows.

    Pronoun queries come only from the target sentence.  The BiLSTM encoder
    produces 2h-dimensional rows; the averaging baseline uses the raw
    embeddings.  Sentences without pronouns are unscorable.
    """
    if not pronoun_idx:
        raise UnscorableInputError(f"no pronouns in: {sentence.text!r}")
    tokens: list[Token] = []
    for s in context:
        tokens.extend(s.tokens)
    offset = len(tokens)
    tokens.extend(sentence.tokens)
    ids = np.array([vocab.id(t.lower) for t in tokens], dtype=np.intp)
    X = params["E"].value[ids]
    cache: dict = {"ids": ids, "X": X}
    if config.encoder == "bilstm":
        fwd = (params["lstm_fw_W"].value, params["lstm_fw_U"].value, params["lstm_fw_b"].value)
        bwd = (params["lstm_bw_W"].value, params["lstm_bw_U"].value, params["lstm_bw_b"].value)
        K, lstm_cache = numerics.bilstm_encode_with_cache(X, fwd, bwd)
        if with_cache:
            cache["lstm"] = lstm_cache
    else:
        K = X
    pronoun_idx = list(pronoun_idx)
    if len(pronoun_idx) > config.M:
        logger.warning("sentence has %d pronouns; truncating slots to M=%d",
                       len(pronoun_idx), config.M)
        pronoun_idx = pronoun_idx[:config.M]
    positions = [offset + i for i in pronoun_idx]
    P = np.zeros((config.M, K.shape[1]))
    mask = np.zeros(config.M, dtype=bool)
    for slot, pos in enumerate(positions):
        P[slot] = K[pos]
        mask[slot] = True
    return EncodedInput(K=K, sentence_offset=offset, pronoun_slots=P,
                        slot_mask=mask, slot_positions=positions,
                        token_surfaces=[t.surface for t in tokens],
                        slot_forms=[sentence.tokens[i].lower for i in pronoun_idx],
                        cache=cache)


def _attention_core(enc: EncodedInput, params: dict[str, Parameter]):
    """Shared attention computation over the unmasked slots."""
    K = enc.K
    mask = enc.slot_mask
    P_um = enc.pronoun_slots[mask]
    scale = np.sqrt(K.shape[1])
    A_um = numerics.softmax_rows((P_um @ K.T) / scale)
    B_prime = A_um @ K
    normed, ln_cache = numerics.layer_norm_with_cache(P_um + B_prime,
                                                      params["ln_gain"].value,
                                                      params["ln_bias"].value)
    B = np.zeros_like(enc.pronoun_slots)
    B[mask] = normed
    weights = np.zeros((enc.pronoun_slots.shape[0], K.shape[0]))
    weights[mask] = A_um
    trace = AttentionTrace(weights=weights, token_surfaces=list(enc.token_surfaces),
                           slot_forms=list(enc.slot_forms), slot_mask=mask.copy())
    return B, trace, {"P_um": P_um, "A_um": A_um, "ln_cache": ln_cache, "scale": scale}


def pronoun_attention(enc: EncodedInput, params: dict[str, Parameter]):
    """Scaled multiplicative attention from pronoun slots over all token
    rows, then residual + layer norm.  Masked slots stay all-zero and are
    excluded from normalization.  Returns (B, AttentionTrace)."""
    B, trace, _ = _attention_core(enc, params)
    return B, trace


def score(B: np.ndarray, mask: np.ndarray, params: dict[str, Parameter]) -> float:
    """u = B z with masked slots zero; y = u . w

    Computed over the packed unmasked rows so the result is bitwise
    independent of the padding width M."""
    u_um = B[mask] @ params["z"].value
    return float(u_um @ params["w"].value[mask])


def baseline_score(enc: EncodedInput, params: dict[str, Parameter]) -> float:
    """Mean of the unmasked pronoun rows through the z head and the scalar w head."""
    if not enc.slot_mask.any():
        raise UnscorableInputError("no pronoun slots to average")
    pbar = enc.pronoun_slots[enc.slot_mask].mean(axis=0)
    u = float(pbar @ params["z"].value)
    return u * float(params["w"].value[0])


def _forward_side(side: SideInput, config: ModelConfig, params: dict[str, Parameter],
                  vocab: Vocab, with_cache: bool = False):
    """Score one side; returns (y, enc, trace or None, cache dict)."""
    context, sentence, pronoun_idx = side
    enc = encode(context, sentence, pronoun_idx, config, params, vocab, with_cache=with_cache)
    cache: dict = {"enc": enc}
    if config.encoder == "bilstm":
        B, trace, attn_cache = _attention_core(enc, params)
        B_um = B[enc.slot_mask]
        u_um = B_um @ params["z"].value
        y = float(u_um @ params["w"].value[enc.slot_mask])
        cache.update(attn_cache, B_um=B_um, u_um=u_um)
        return y, enc, trace, cache
    pbar = enc.pronoun_slots[enc.slot_mask].mean(axis=0)
    u = float(pbar @ params["z"].value)
    y = u * float(params["w"].value[0])
    cache.update(pbar=pbar, u=u)
    return y, enc, None, cache


def _backward_side(dy: float, cache: dict, config: ModelConfig,
                   params: dict[str, Parameter]) -> None:
    """Accumulate d(dy * y)/d(theta) into the parameter grads."""
    enc: EncodedInput = cache["enc"]
    mask = enc.slot_mask
    if config.encoder == "bilstm":
        K = enc.K
        u_um, B_um = cache["u_um"], cache["B_um"]
        w, z = params["w"].value, params["z"].value
        params["w"].grad[mask] += dy * u_um
        du_um = dy * w[mask]
        dB_um = np.outer(du_um, z)
        params["z"].grad += B_um.T @ du_um
        dR_um, dgain, dbias = numerics.layer_norm_backward(dB_um, cache["ln_cache"])
        params["ln_gain"].grad += dgain
        params["ln_bias"].grad += dbias
        dP_um = dR_um.copy()
        dBp_um = dR_um
        A_um = cache["A_um"]
        dA = dBp_um @ K.T
        dK = A_um.T @ dBp_um
        dS = numerics.softmax_rows_backward(dA, A_um)
        dP_um += (dS @ K) / cache["scale"]
        dK += (dS.T @ cache["P_um"]) / cache["scale"]
        # Unmasked slots occupy the leading rows, in slot_positions order.
        for um_idx, pos in enumerate(enc.slot_positions):
            dK[pos] += dP_um[um_idx]
        dX = _encoder_backward(dK, enc, params)
    else:
        pbar, u = cache["pbar"], cache["u"]
        params["w"].grad[0] += dy * u
        du = dy * float(params["w"].value[0])
        params["z"].grad += du * pbar
        dpbar = du * params["z"].value
        count = len(enc.slot_positions)
        dK = np.zeros_like(enc.K)
        for pos in enc.slot_positions:
            dK[pos] += dpbar / count
        dX = _encoder_backward(dK, enc, params)
    ids = enc.cache["ids"]
    np.add.at(params["E"].grad, ids, dX)


def _encoder_backward(dK: np.ndarray, enc: EncodedInput,
                      params: dict[str, Parameter]) -> np.ndarray:
    if "lstm" in enc.cache:
        dX, (dWf, dUf, dbf), (dWb, dUb, dbb) = numerics.bilstm_backward(dK, enc.cache["lstm"])
        params["lstm_fw_W"].grad += dWf
        params["lstm_fw_U"].grad += dUf
        params["lstm_fw_b"].grad += dbf
        params["lstm_bw_W"].grad += dWb
        params["lstm_bw_U"].grad += dUb
        params["lstm_bw_b"].grad += dbb
        return dX
    return dK


def score_side(side: SideInput, config: ModelConfig, params: dict[str, Parameter],
               vocab: Vocab, with_cache: bool = False):
    """Public single-side scorer; returns (y, trace, cache)."""
    y, _, trace, cache = _forward_side(side, config, params, vocab, with_cache=with_cache)
    return y, trace, cache


def score_pair(R: SideInput, S: SideInput, config: ModelConfig,
               params: dict[str, Parameter], vocab: Vocab) -> tuple[float, float]:
    """Score both sides with the same shared parameters."""
    y_r, _, _ = score_side(R, config, params, vocab)
    y_s, _, _ = score_side(S, config, params, vocab)
    return y_r, y_s


def backward_side(dy: float, cache: dict, config: ModelConfig,
                  params: dict[str, Parameter]) -> None:
    _backward_side(dy, cache, config, params)


def export_attention(trace: AttentionTrace, path: str | Path) -> None:
    """TSV heatmap: a header row of token surfaces, then one row per unmasked
    slot as slot_form<TAB>w1<TAB>...  Weights round-trip via repr."""
    lines = ["slot\t" + "\t".join(trace.token_surfaces)]
    for row in range(trace.weights.shape[0]):
        if not trace.slot_mask[row]:
            continue
        slot_idx = int(trace.slot_mask[:row].sum())
        form = trace.slot_forms[slot_idx]
        weights = "\t".join(repr(float(x)) for x in trace.weights[row])
        lines.append(f"{form}\t{weights}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_attention(path: str | Path):
    """Parse an attention TSV back to (token_surfaces, slot_forms, weights)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("slot\t"):
        raise DataError(f"{path}: missing attention header")
    surfaces = lines[0].split("\t")[1:]
    forms: list[str] = []
    rows: list[list[float]] = []
    for line in lines[1:]:
        if not line:
            continue
        parts = line.split("\t")
        forms.append(parts[0])
        rows.append([float(x) for x in parts[1:]])
    return surfaces, forms, np.array(rows, dtype=np.float64)


def load_embeddings_text(path: str | Path) -> dict[str, np.ndarray]:
    """Standard text vectors: ``word v1 v2 ... vd`` per line."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            try:
                vectors[parts[0]] = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad embedding row") from None
    return vectors


def save_checkpoint(path: str | Path, config: ModelConfig, vocab: Vocab,
                    params: dict[str, Parameter]) -> None:
    """Versioned binary container: magic, version, JSON header (config, vocab,
    block shapes), then raw little-endian float64 blocks."""
    names = sorted(params)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "vocab": vocab.words,
        "blocks": [{"name": n, "shape": list(params[n].value.shape)} for n in names],
    }
    blob = json.dumps(header, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(params[n].value, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path):
    """Returns (config, vocab, params)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        config = ModelConfig.from_dict(header["config"])
        vocab = Vocab(words=header["vocab"])
        params: dict[str, Parameter] = {}
        for block in header["blocks"]:
            shape = tuple(block["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape)
            params[block["name"]] = Parameter.of(data.copy())
    return config, vocab, params
