"""Small encoder-decoder transformer for headline -> explanation generation.

Word-level vocabulary, learned positions, teacher-forced cross-entropy.
Training is deterministic for a fixed seed on CPU: the model is built from
``torch.manual_seed(seed)`` and batches are drawn with a seeded generator.
"""

from __future__ import annotations

import contextlib
import copy
import hashlib
import json
import logging
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch
from torch import nn

from ..corpus import content_hash
from ..labels import EMOTIONS

log = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)
LABEL_TOKENS = tuple(e.value.lower() for e in EMOTIONS)

_TOKEN = re.compile(r"[a-z0-9]+(?:'[a-z]+)?|[^\sa-z0-9]")
_NO_SPACE_BEFORE = re.compile(r" ([.,;:!?')\]])")
_NO_SPACE_AFTER = re.compile(r"([(\[]) ")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def detokenize(tokens: Iterable[str]) -> str:
    s = " ".join(tokens)
    s = _NO_SPACE_BEFORE.sub(r"\1", s)
    return _NO_SPACE_AFTER.sub(r"\1", s)


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    @classmethod
    def build(cls, texts: Iterable[str], min_freq: int = 1, max_size: int | None = None) -> "Vocab":
        freq = Counter(t for text in texts for t in tokenize(text))
        fixed = list(SPECIALS) + list(LABEL_TOKENS)
        rest = sorted((t for t, c in freq.items() if c >= min_freq and t not in fixed), key=lambda t: (-freq[t], t))
        if max_size is not None:
            rest = rest[:max(0, max_size - len(fixed))]
        return cls(tuple(fixed + rest))

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, text: str, max_len: int) -> list[int]:
        unk = self._index[UNK]
        return [self._index.get(t, unk) for t in tokenize(text)][:max_len]

    def decode(self, ids: Iterable[int]) -> list[str]:
        out = []
        for i in ids:
            tok = self.tokens[int(i)]
            if tok == EOS:
                break
            if tok not in (PAD, BOS):
                out.append(tok)
        return out

    def id(self, token: str) -> int:
        return self._index[token]

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Seq2SeqConfig:
    seed: int = 0
    epochs: int = 30
    batch_size: int = 16
    lr: float = 3e-3
    weight_decay: float = 0.0
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    ff_dim: int = 128
    dropout: float = 0.0
    max_source_len: int = 64
    max_target_len: int = 512
    beam_width: int = 1
    vocab_min_freq: int = 1
    vocab_max_size: int | None = 20000

    def __post_init__(self):
        for name in ("epochs", "batch_size", "d_model", "n_heads", "n_layers", "ff_dim", "max_source_len",
                     "max_target_len", "beam_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"seq2seq {name} must be positive")
        if self.d_model % self.n_heads:
            raise ValueError("seq2seq d_model must be divisible by n_heads")
        if self.lr <= 0 or not 0.0 <= self.dropout < 1.0:
            raise ValueError("seq2seq lr must be positive and dropout in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "Seq2SeqConfig":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in d.items() if k in known})


ARCH_FIELDS = ("d_model", "n_heads", "n_layers", "ff_dim", "max_source_len", "max_target_len")


class Seq2SeqTransformer(nn.Module):
    def __init__(self, vocab_size: int, cfg: Seq2SeqConfig):
        super().__init__()
        self.embed = nn.Embedding(vocab_size, cfg.d_model, padding_idx=0)
        self.pos = nn.Embedding(max(cfg.max_source_len, cfg.max_target_len) + 2, cfg.d_model)
        self.core = nn.Transformer(cfg.d_model, cfg.n_heads, cfg.n_layers, cfg.n_layers, cfg.ff_dim,
                                   cfg.dropout, batch_first=True)
        # padded batches must take the regular path in eval mode too
        self.core.encoder.enable_nested_tensor = False
        self.core.encoder.use_nested_tensor = False
        self.out = nn.Linear(cfg.d_model, vocab_size)

    def _embed(self, ids):
        pos = torch.arange(ids.shape[1], device=ids.device)
        # token and position embeddings on the same scale; copying relies on position
        return self.embed(ids) + self.pos(pos)[None]

    def encode(self, src):
        return self.core.encoder(self._embed(src), src_key_padding_mask=src.eq(0))

    def decode(self, tgt_in, memory, src_pad):
        T = tgt_in.shape[1]
        causal = torch.triu(torch.ones((T, T), dtype=torch.bool), diagonal=1)
        h = self.core.decoder(self._embed(tgt_in), memory, tgt_mask=causal,
                              tgt_key_padding_mask=tgt_in.eq(0), memory_key_padding_mask=src_pad)
        return self.out(h)

    def forward(self, src, tgt_in):
        return self.decode(tgt_in, self.encode(src), src.eq(0))


def weights_hash(model: nn.Module) -> str:
    h = hashlib.sha256()
    for name, t in sorted(model.state_dict().items()):
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def pairs_hash(pairs: Sequence[tuple[str, str]]) -> str:
    return content_hash([list(p) for p in pairs])


@dataclass
class Seq2SeqModelHandle:
    model: Seq2SeqTransformer
    vocab: Vocab
    config: Seq2SeqConfig
    manifest: dict = field(default_factory=dict)

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        torch.save(self.model.state_dict(), d / "weights.pt")
        (d / "vocab.json").write_text(json.dumps(list(self.vocab.tokens)), encoding="utf-8")
        (d / "manifest.json").write_text(json.dumps(self.manifest, indent=2, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "Seq2SeqModelHandle":
        d = Path(directory)
        manifest = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
        cfg = Seq2SeqConfig.from_dict(manifest["config"])
        vocab = Vocab(tuple(json.loads((d / "vocab.json").read_text(encoding="utf-8"))))
        model = Seq2SeqTransformer(len(vocab), cfg)
        model.load_state_dict(torch.load(d / "weights.pt", weights_only=True))
        model.eval()
        return cls(model, vocab, cfg, manifest)


@contextlib.contextmanager
def _deterministic():
    prev = torch.are_deterministic_algorithms_enabled()
    torch.use_deterministic_algorithms(True)
    try:
        yield
    finally:
        torch.use_deterministic_algorithms(prev)


def _pad(rows: list[list[int]]) -> torch.Tensor:
    width = max(1, max(len(r) for r in rows))
    out = torch.zeros((len(rows), width), dtype=torch.long)
    for i, r in enumerate(rows):
        out[i, :len(r)] = torch.tensor(r, dtype=torch.long)
    return out


def _encode_pairs(pairs, vocab: Vocab, cfg: Seq2SeqConfig):
    bos, eos = vocab.id(BOS), vocab.id(EOS)
    src = [vocab.encode(s, cfg.max_source_len) or [vocab.id(UNK)] for s, _ in pairs]
    tgt = [vocab.encode(t, cfg.max_target_len) for _, t in pairs]
    return src, [[bos] + t for t in tgt], [t + [eos] for t in tgt]


def _batch_loss(model, src, tin, tout, idx, loss_fn):
    s = _pad([src[i] for i in idx])
    ti = _pad([tin[i] for i in idx])
    to = _pad([tout[i] for i in idx])
    logits = model(s, ti)
    return loss_fn(logits.reshape(-1, logits.shape[-1]), to.reshape(-1))


def _eval_loss(model, pairs, vocab, cfg, loss_fn) -> float:
    src, tin, tout = _encode_pairs(pairs, vocab, cfg)
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(pairs), cfg.batch_size):
            idx = list(range(start, min(start + cfg.batch_size, len(pairs))))
            n_tok = sum(len(tout[i]) for i in idx)
            total += float(_batch_loss(model, src, tin, tout, idx, loss_fn)) * n_tok
            count += n_tok
    return total / max(count, 1)


def new_model(vocab: Vocab, cfg: Seq2SeqConfig) -> Seq2SeqTransformer:
    torch.manual_seed(cfg.seed)
    return Seq2SeqTransformer(len(vocab), cfg)


def train_seq2seq(pairs: Sequence[tuple[str, str]], config: Seq2SeqConfig | None = None, *,
                  val_pairs: Sequence[tuple[str, str]] | None = None, vocab: Vocab | None = None,
                  init_from: Seq2SeqModelHandle | None = None, stage: str = "generation") -> Seq2SeqModelHandle:
    """Fit (or continue fitting) a seq2seq model on ``(source, target)`` text pairs.

    With ``init_from`` the weights and vocabulary are copied from that
    handle and training continues from them; the new manifest records the
    parent's final weight hash as ``parent_weights_hash``.
    """
    cfg = config or Seq2SeqConfig()
    pairs = [(str(s), str(t)) for s, t in pairs]
    if not pairs:
        raise ValueError("no training pairs")
    if init_from is not None:
        clash = [k for k in ARCH_FIELDS if getattr(cfg, k) != getattr(init_from.config, k)]
        if clash:
            raise ValueError(f"cannot continue training with a different architecture: {clash}")
        vocab = init_from.vocab
        model = copy.deepcopy(init_from.model)
        parent = init_from.manifest.get("final_weights_hash")
    else:
        if vocab is None:
            vocab = Vocab.build([s for s, _ in pairs] + [t for _, t in pairs], cfg.vocab_min_freq, cfg.vocab_max_size)
        model = new_model(vocab, cfg)
        parent = None
    init_hash = weights_hash(model)
    src, tin, tout = _encode_pairs(pairs, vocab, cfg)
    loss_fn = nn.CrossEntropyLoss(ignore_index=0)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    gen = torch.Generator().manual_seed(cfg.seed)
    train_losses, val_losses = [], []
    initial_val = _eval_loss(model, val_pairs, vocab, cfg, loss_fn) if val_pairs else None
    with _deterministic():
        for epoch in range(cfg.epochs):
            model.train()
            order = torch.randperm(len(pairs), generator=gen).tolist()
            total, count = 0.0, 0
            for start in range(0, len(order), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                loss = _batch_loss(model, src, tin, tout, idx, loss_fn)
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += loss.item() * len(idx)
                count += len(idx)
            train_losses.append(total / count)
            if val_pairs:
                val_losses.append(_eval_loss(model, val_pairs, vocab, cfg, loss_fn))
            log.info("%s epoch %d: train loss %.4f%s", stage, epoch + 1, train_losses[-1],
                     f", val loss {val_losses[-1]:.4f}" if val_losses else "")
    model.eval()
    manifest = {
        "stage": stage,
        "config": asdict(cfg),
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "data_hash": pairs_hash(pairs),
        "n_pairs": len(pairs),
        "vocab_hash": vocab.digest(),
        "train_loss": train_losses,
        "val_loss": val_losses,
        "initial_val_loss": initial_val,
        "init_weights_hash": init_hash,
        "parent_weights_hash": parent,
        "final_weights_hash": weights_hash(model),
    }
    return Seq2SeqModelHandle(model, vocab, cfg, manifest)


def retrain_from_manifest(manifest: dict, pairs: Sequence[tuple[str, str]], **kwargs) -> Seq2SeqModelHandle:
    if pairs_hash(pairs) != manifest["data_hash"]:
        raise ValueError("training pairs do not match the manifest's data hash")
    return train_seq2seq(pairs, Seq2SeqConfig.from_dict(manifest["config"]), stage=manifest.get("stage", "generation"),
                         **kwargs)


def _greedy(model, vocab, src_ids, max_len):
    bos, eos = vocab.id(BOS), vocab.id(EOS)
    src = _pad([src_ids])
    memory = model.encode(src)
    pad = src.eq(0)
    out = [bos]
    for _ in range(max_len):
        logits = model.decode(torch.tensor([out]), memory, pad)[0, -1]
        nxt = int(torch.argmax(logits))
        if nxt == eos:
            break
        out.append(nxt)
    return out[1:]


def _beam(model, vocab, src_ids, max_len, width):
    bos, eos = vocab.id(BOS), vocab.id(EOS)
    src = _pad([src_ids])
    memory = model.encode(src)
    pad = src.eq(0)
    beams = [(0.0, [bos], False)]
    for _ in range(max_len):
        if all(done for _, _, done in beams):
            break
        cand = []
        for score, seq, done in beams:
            if done:
                cand.append((score, seq, True))
                continue
            logp = torch.log_softmax(model.decode(torch.tensor([seq]), memory, pad)[0, -1], dim=-1)
            top = torch.topk(logp, width)
            for lp, tok in zip(top.values.tolist(), top.indices.tolist()):
                cand.append((score + lp, seq + [tok], tok == eos))
        cand.sort(key=lambda c: (-c[0], c[1]))
        beams = cand[:width]
    best = beams[0][1][1:]
    return [t for t in best if t != eos][:max_len]


def generate_token_ids(handle: Seq2SeqModelHandle, source: str, max_len: int | None = None) -> list[int]:
    cfg = handle.config
    max_len = cfg.max_target_len if max_len is None else min(max_len, cfg.max_target_len)
    src_ids = handle.vocab.encode(source, cfg.max_source_len) or [handle.vocab.id(UNK)]
    handle.model.eval()
    with torch.no_grad():
        if cfg.beam_width > 1:
            return _beam(handle.model, handle.vocab, src_ids, max_len, cfg.beam_width)
        return _greedy(handle.model, handle.vocab, src_ids, max_len)


def generate_seq2seq(handle: Seq2SeqModelHandle, headline: str, max_len: int | None = None) -> str:
    """Decode text for ``headline`` (greedy unless the config sets a beam width)."""
    return detokenize(handle.vocab.decode(generate_token_ids(handle, headline, max_len)))


def score_targets(handle: Seq2SeqModelHandle, source: str, targets: Sequence[str]) -> np.ndarray:
    """Total log-probability of each target sequence (including EOS) given ``source``."""
    cfg, vocab = handle.config, handle.vocab
    src_ids = vocab.encode(source, cfg.max_source_len) or [vocab.id(UNK)]
    _, tin, tout = _encode_pairs([(source, t) for t in targets], vocab, cfg)
    handle.model.eval()
    with torch.no_grad():
        src = _pad([src_ids] * len(targets))
        ti, to = _pad(tin), _pad(tout)
        logp = torch.log_softmax(handle.model(src, ti), dim=-1)
        tok = logp.gather(2, to.unsqueeze(-1)).squeeze(-1) * to.ne(0)
        return tok.sum(dim=1).double().numpy()


def edit_distance(a: Sequence, b: Sequence) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]
