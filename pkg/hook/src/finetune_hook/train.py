"""The hook body: train adapters on the merged corpus, export, write descriptor."""

from __future__ import annotations

import json
from pathlib import Path

import torch
import torch.nn.functional as F

from .config import HookConfig
from .data import IGNORE_INDEX, collate, load_corpus
from .model import TinyCausalLM

DESCRIPTOR_FILENAME = "descriptor.json"


def _corpus_loss(model: TinyCausalLM, batches) -> float:
    """Mean token loss over the whole corpus with adapters in eval mode."""
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for input_ids, labels, pad_mask in batches:
            logits = model(input_ids, pad_mask)
            loss = F.cross_entropy(
                logits[:, :-1].reshape(-1, logits.size(-1)),
                labels[:, 1:].reshape(-1),
                ignore_index=IGNORE_INDEX,
                reduction="sum",
            )
            total += float(loss)
            count += int(labels[:, 1:].ne(IGNORE_INDEX).sum())
    model.train()
    return total / max(count, 1)


def run_hook(train_file: str | Path, iteration: int, output_dir: str | Path, cfg: HookConfig) -> dict:
    """Train, export the adapter state, and write the endpoint descriptor.

    Returns the descriptor dict; raises on unreadable input or bad config
    (the CLI maps those to a non-zero exit).
    """
    cfg.validate()
    torch.manual_seed(cfg.seed)

    samples = load_corpus(train_file, cfg.max_seq_len)
    batches = [
        collate(samples[start : start + cfg.batch_size])
        for start in range(0, len(samples), cfg.batch_size)
    ]

    model = TinyCausalLM(
        d_model=cfg.d_model,
        n_head=cfg.n_head,
        n_layer=cfg.n_layer,
        d_ff=cfg.d_ff,
        max_seq_len=cfg.max_seq_len,
        rank=cfg.rank,
        alpha=cfg.alpha,
        dropout=cfg.dropout,
    )
    optimizer = torch.optim.Adam(model.trainable_parameters(), lr=cfg.learning_rate)

    initial_loss = _corpus_loss(model, batches)
    epoch_losses: list[float] = []
    for _ in range(cfg.epochs):
        running, steps = 0.0, 0
        for input_ids, labels, pad_mask in batches:
            optimizer.zero_grad()
            logits = model(input_ids, pad_mask)
            loss = F.cross_entropy(
                logits[:, :-1].reshape(-1, logits.size(-1)),
                labels[:, 1:].reshape(-1),
                ignore_index=IGNORE_INDEX,
            )
            loss.backward()
            optimizer.step()
            running += float(loss.detach())
            steps += 1
        epoch_losses.append(running / max(steps, 1))
    final_loss = _corpus_loss(model, batches)

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    adapter_state = {
        name: tensor for name, tensor in model.state_dict().items() if "lora_" in name
    }
    torch.save(adapter_state, out / "adapter.pt")

    counts = model.parameter_counts()
    descriptor = {
        "endpoint": cfg.endpoint,
        "model_id": f"{cfg.model_id_prefix}-it{iteration}",
        "metadata": {
            "base_model": cfg.base_model,
            "adapter": {"rank": cfg.rank, "alpha": cfg.alpha, "dropout": cfg.dropout},
            "epochs": cfg.epochs,
            "learning_rate": cfg.learning_rate,
            "optimizer": {"family": cfg.optimizer, "betas": [0.9, 0.999], "eps": 1e-8, "weight_decay": 0.0},
            "train_samples": len(samples),
            "parameters_total": counts["total"],
            "parameters_trainable": counts["trainable"],
            "initial_loss": round(initial_loss, 6),
            "final_loss": round(final_loss, 6),
            "epoch_losses": [round(x, 6) for x in epoch_losses],
            "artifacts": {"adapter": "adapter.pt"},
        },
    }
    (out / DESCRIPTOR_FILENAME).write_text(json.dumps(descriptor, indent=2), encoding="utf-8")
    return descriptor
