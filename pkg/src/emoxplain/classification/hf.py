"""Pretrained-encoder classifier backend (Hugging Face ``transformers``).

Only imported when ``ClassifierConfig.backend == "transformers"``. The
model is fine-tuned with a plain AdamW loop; inputs longer than the
encoder limit are cut at whole-explanation boundaries before tokenizing.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from ..corpus import LabeledExample
from ..labels import EMOTIONS, N_EMOTIONS

log = logging.getLogger(__name__)


def load_hf(path):
    from transformers import AutoModelForSequenceClassification, AutoTokenizer

    tok = AutoTokenizer.from_pretrained(path)
    model = AutoModelForSequenceClassification.from_pretrained(path)
    model.eval()
    return model, tok


def _fit_segments(tok, example: LabeledExample | str, limit: int) -> str:
    if isinstance(example, str) or not example.segments:
        return example if isinstance(example, str) else example.text
    kept = []
    for seg in example.segments:
        trial = " ".join(kept + [seg])
        if kept and len(tok(trial, add_special_tokens=True)["input_ids"]) > limit:
            break
        kept.append(seg)
    return " ".join(kept)


def _encode(tok, texts: Sequence[LabeledExample | str], limit: int):
    prepped = [_fit_segments(tok, t, limit) for t in texts]
    return tok(prepped, truncation=True, max_length=limit, padding=True, return_tensors="pt")


def train_hf(examples: Sequence[LabeledExample], cfg, validation, manifest: dict):
    import torch
    from transformers import AutoModelForSequenceClassification, AutoTokenizer

    from .classifier import ClassifierHandle, accuracy

    torch.manual_seed(cfg.seed)
    tok = AutoTokenizer.from_pretrained(cfg.model_name)
    model = AutoModelForSequenceClassification.from_pretrained(
        cfg.model_name, num_labels=N_EMOTIONS,
        id2label={i: e.value for i, e in enumerate(EMOTIONS)},
        label2id={e.value: i for i, e in enumerate(EMOTIONS)},
        ignore_mismatched_sizes=True,
    )
    limit = min(cfg.max_input_tokens, getattr(tok, "model_max_length", cfg.max_input_tokens) or cfg.max_input_tokens)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.hf_lr)
    gen = torch.Generator().manual_seed(cfg.seed)
    y = torch.tensor([e.label.index for e in examples])
    handle = ClassifierHandle(cfg, manifest, hf_model=model, hf_tokenizer=tok)
    history = []
    for epoch in range(cfg.hf_epochs):
        model.train()
        order = torch.randperm(len(examples), generator=gen).tolist()
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = _encode(tok, [examples[i] for i in idx], limit)
            out = model(**batch, labels=y[idx])
            opt.zero_grad()
            out.loss.backward()
            opt.step()
            total += out.loss.item() * len(idx)
        model.eval()
        row = {"epoch": epoch + 1, "train_loss": total / len(examples)}
        if validation:
            row["val_accuracy"] = accuracy(handle, validation)
        history.append(row)
        log.info("hf epoch %d: %s", epoch + 1, row)
    manifest["history"] = history
    handle.history = history
    return handle


def hf_scores(handle, texts) -> np.ndarray:
    import torch

    tok, model = handle.hf_tokenizer, handle.hf_model
    limit = min(handle.config.max_input_tokens, getattr(tok, "model_max_length", 512) or 512)
    model.eval()
    rows = []
    with torch.no_grad():
        for start in range(0, len(texts), 32):
            batch = _encode(tok, list(texts[start:start + 32]), limit)
            rows.append(torch.softmax(model(**batch).logits, dim=-1).double().numpy())
    return np.concatenate(rows, axis=0)
