"""Dump per-layer, per-head key/query activations from BERT-class models.

Forward hooks on each self-attention block's key/query projections capture
the pre-softmax activations for every sentence of a corpus; each (sentence,
layer, head) pair becomes a pair of KMV1 files of shape n_tokens x head_dim,
plus a JSON manifest describing the export. The downstream kernel reduction
fixes sigma^2 = sqrt(head_dim), recorded in the manifest for convenience.

Supports architectures whose encoder layers expose
`attention.self.{query,key,value}` linear projections (BERT, RoBERTa,
ELECTRA and friends). Sentences longer than the model's maximum context are
skipped and noted in the manifest.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .kmv1 import write_matrix


@dataclass
class SentenceRecord:
    index: int
    n_tokens: int
    skipped: bool = False
    reason: str | None = None


@dataclass
class HeadFiles:
    sentence: int
    layer: int
    head: int
    keys: str
    queries: str
    values: str | None = None


@dataclass
class TraceManifest:
    model_id: str
    tokenizer_id: str
    num_layers: int
    num_heads: int
    head_dim: int
    max_context: int
    sigma: float  # bandwidth convention for the downstream reduction
    sentences: list[SentenceRecord] = field(default_factory=list)
    files: list[HeadFiles] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "tokenizer_id": self.tokenizer_id,
            "dimensions": {
                "num_layers": self.num_layers,
                "num_heads": self.num_heads,
                "head_dim": self.head_dim,
                "max_context": self.max_context,
            },
            "sigma": self.sigma,
            "sentences": [asdict(s) for s in self.sentences],
            "files": [asdict(f) for f in self.files],
            "notes": self.notes,
        }

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)


def load_manifest(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _self_attention_blocks(model) -> list:
    """The per-layer self-attention modules carrying query/key projections."""
    base = getattr(model, model.base_model_prefix, model)
    encoder = getattr(base, "encoder", None)
    layers = getattr(encoder, "layer", None) if encoder is not None else None
    if layers is None:
        raise ValueError(
            f"unsupported architecture {type(model).__name__}: "
            "expected encoder.layer[*].attention.self"
        )
    blocks = []
    for layer in layers:
        self_att = getattr(getattr(layer, "attention", None), "self", None)
        if self_att is None or not hasattr(self_att, "query") or not hasattr(self_att, "key"):
            raise ValueError(
                "layer without attention.self.query/key projections; "
                "only BERT-class encoders are supported"
            )
        blocks.append(self_att)
    return blocks


def _split_heads(activation: torch.Tensor, num_heads: int) -> np.ndarray:
    """(seq, hidden) -> (num_heads, seq, head_dim), matching the model's
    transpose_for_scores layout."""
    seq, hidden = activation.shape
    head_dim = hidden // num_heads
    return (
        activation.reshape(seq, num_heads, head_dim)
        .permute(1, 0, 2)
        .to(torch.float64)
        .cpu()
        .numpy()
    )


def read_sentences(dataset_path: str) -> list[str]:
    """One sentence per line; blank lines are ignored."""
    with open(dataset_path) as fh:
        return [line.strip() for line in fh if line.strip()]


def extract(
    model_id: str,
    dataset_path: str,
    out_dir: str,
    max_sentences: int | None = None,
    include_values: bool = False,
    revision: str | None = None,
) -> TraceManifest:
    """Run the corpus through the model and dump k/q (and optionally v)
    activations; returns the manifest, also written to out_dir/manifest.json."""
    from transformers import AutoModel, AutoTokenizer

    os.makedirs(out_dir, exist_ok=True)
    tokenizer = AutoTokenizer.from_pretrained(model_id, revision=revision)
    model = AutoModel.from_pretrained(model_id, revision=revision)
    model.eval()

    blocks = _self_attention_blocks(model)
    num_layers = len(blocks)
    num_heads = model.config.num_attention_heads
    head_dim = model.config.hidden_size // num_heads
    max_context = int(getattr(model.config, "max_position_embeddings", 512))

    manifest = TraceManifest(
        model_id=model_id,
        tokenizer_id=model_id,
        num_layers=num_layers,
        num_heads=num_heads,
        head_dim=head_dim,
        max_context=max_context,
        sigma=float(head_dim) ** 0.25,
    )

    captured: dict[tuple[int, str], torch.Tensor] = {}

    def make_hook(layer_idx: int, which: str):
        def hook(_module, _inputs, output):
            captured[(layer_idx, which)] = output.detach()[0]

        return hook

    handles = []
    for layer_idx, block in enumerate(blocks):
        handles.append(block.query.register_forward_hook(make_hook(layer_idx, "q")))
        handles.append(block.key.register_forward_hook(make_hook(layer_idx, "k")))
        if include_values:
            handles.append(block.value.register_forward_hook(make_hook(layer_idx, "v")))

    sentences = read_sentences(dataset_path)
    if max_sentences is not None:
        sentences = sentences[:max_sentences]
    if not sentences:
        manifest.notes.append("empty dataset: nothing extracted")

    try:
        for idx, text in enumerate(sentences):
            encoded = tokenizer(text, return_tensors="pt", truncation=False)
            n_tokens = int(encoded["input_ids"].shape[1])
            if n_tokens > max_context:
                manifest.sentences.append(
                    SentenceRecord(index=idx, n_tokens=n_tokens, skipped=True,
                                   reason=f"exceeds max context {max_context}")
                )
                continue
            captured.clear()
            with torch.no_grad():
                model(**encoded)
            manifest.sentences.append(SentenceRecord(index=idx, n_tokens=n_tokens))
            for layer_idx in range(num_layers):
                q_heads = _split_heads(captured[(layer_idx, "q")], num_heads)
                k_heads = _split_heads(captured[(layer_idx, "k")], num_heads)
                v_heads = (
                    _split_heads(captured[(layer_idx, "v")], num_heads)
                    if include_values
                    else None
                )
                for head in range(num_heads):
                    stem = f"sent{idx:05d}_layer{layer_idx:02d}_head{head:02d}"
                    k_path = os.path.join(out_dir, f"{stem}_keys.kmv")
                    q_path = os.path.join(out_dir, f"{stem}_queries.kmv")
                    write_matrix(k_heads[head], k_path)
                    write_matrix(q_heads[head], q_path)
                    v_path = None
                    if v_heads is not None:
                        v_path = os.path.join(out_dir, f"{stem}_values.kmv")
                        write_matrix(v_heads[head], v_path)
                    manifest.files.append(
                        HeadFiles(sentence=idx, layer=layer_idx, head=head,
                                  keys=k_path, queries=q_path, values=v_path)
                    )
    finally:
        for handle in handles:
            handle.remove()

    manifest.save(os.path.join(out_dir, "manifest.json"))
    return manifest
